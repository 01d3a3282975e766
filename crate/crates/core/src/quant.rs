// SPDX-License-Identifier: Apache-2.0

//! Uniform quantization of DAC inputs, programmed weights and ADC readouts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_BITS: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum QuantMode {
    /// Exact real arithmetic, no rounding anywhere.
    #[default]
    Ideal,
    Uniform,
}

/// Which quantizer a value passes through.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    Input,
    Weight,
}

/// Closed interval `[lo, hi]` with `lo < hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::invalid(format!("degenerate interval [{lo}, {hi}]")));
        }
        Ok(Interval { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    /// Largest magnitude reachable inside the interval.
    pub fn max_abs(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }
}

impl TryFrom<[f64; 2]> for Interval {
    type Error = Error;
    fn try_from(v: [f64; 2]) -> Result<Self> {
        Interval::new(v[0], v[1])
    }
}

impl From<Interval> for [f64; 2] {
    fn from(i: Interval) -> Self {
        [i.lo, i.hi]
    }
}

/// Clamp to `range` and round to the nearest of `2^bits` evenly spaced
/// levels spanning it, ties away from zero.
pub fn quantize_uniform(value: f64, bits: u32, range: Interval) -> f64 {
    let levels = (1u64 << bits) - 1;
    let step = (range.hi - range.lo) / levels as f64;
    let x = value.clamp(range.lo, range.hi);
    let k = ((x - range.lo) / step).round().min(levels as f64);
    (range.lo + k * step).clamp(range.lo, range.hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawQuantSpec", rename_all = "camelCase")]
pub struct QuantSpec {
    input_bits: u32,
    weight_bits: u32,
    output_bits: u32,
    input_range: Interval,
    weight_range: Interval,
    mode: QuantMode,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct RawQuantSpec {
    input_bits: u32,
    weight_bits: u32,
    output_bits: u32,
    input_range: Interval,
    weight_range: Interval,
    #[serde(default)]
    mode: QuantMode,
}

impl TryFrom<RawQuantSpec> for QuantSpec {
    type Error = Error;
    fn try_from(r: RawQuantSpec) -> Result<Self> {
        QuantSpec::new(
            r.input_bits,
            r.weight_bits,
            r.output_bits,
            r.input_range,
            r.weight_range,
            r.mode,
        )
    }
}

impl Default for QuantSpec {
    fn default() -> Self {
        QuantSpec::ideal()
    }
}

impl QuantSpec {
    pub fn new(
        input_bits: u32,
        weight_bits: u32,
        output_bits: u32,
        input_range: Interval,
        weight_range: Interval,
        mode: QuantMode,
    ) -> Result<Self> {
        for (name, b) in [
            ("input", input_bits),
            ("weight", weight_bits),
            ("output", output_bits),
        ] {
            if !(1..=MAX_BITS).contains(&b) {
                return Err(Error::invalid(format!(
                    "{name} bits {b} outside [1, {MAX_BITS}]"
                )));
            }
        }
        Ok(QuantSpec {
            input_bits,
            weight_bits,
            output_bits,
            input_range,
            weight_range,
            mode,
        })
    }

    /// Image inputs in `[0, 1]`, weights in `[-1, 1]`, no rounding.
    pub fn ideal() -> Self {
        QuantSpec {
            input_bits: 8,
            weight_bits: 8,
            output_bits: 8,
            input_range: Interval { lo: 0.0, hi: 1.0 },
            weight_range: Interval { lo: -1.0, hi: 1.0 },
            mode: QuantMode::Ideal,
        }
    }

    /// Uniform quantization with the same bit width everywhere over the
    /// default ranges of [`QuantSpec::ideal`].
    pub fn uniform(bits: u32) -> Result<Self> {
        let base = QuantSpec::ideal();
        QuantSpec::new(
            bits,
            bits,
            bits,
            base.input_range,
            base.weight_range,
            QuantMode::Uniform,
        )
    }

    pub fn mode(&self) -> QuantMode {
        self.mode
    }

    pub fn input_bits(&self) -> u32 {
        self.input_bits
    }

    pub fn weight_bits(&self) -> u32 {
        self.weight_bits
    }

    pub fn output_bits(&self) -> u32 {
        self.output_bits
    }

    pub fn input_range(&self) -> Interval {
        self.input_range
    }

    pub fn weight_range(&self) -> Interval {
        self.weight_range
    }

    pub fn with_mode(mut self, mode: QuantMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_weight_bits(mut self, bits: u32) -> Result<Self> {
        self.weight_bits = bits;
        QuantSpec::new(
            self.input_bits,
            bits,
            self.output_bits,
            self.input_range,
            self.weight_range,
            self.mode,
        )
    }

    pub fn quantize(&self, value: f64, which: Quantity) -> f64 {
        match (self.mode, which) {
            (QuantMode::Ideal, _) => value,
            (QuantMode::Uniform, Quantity::Input) => {
                quantize_uniform(value, self.input_bits, self.input_range)
            }
            (QuantMode::Uniform, Quantity::Weight) => {
                quantize_uniform(value, self.weight_bits, self.weight_range)
            }
        }
    }

    /// ADC readout over a symmetric full-scale `[-full_scale, full_scale]`.
    /// A zero full-scale column can only read zero.
    pub fn quantize_output(&self, value: f64, full_scale: f64) -> f64 {
        match self.mode {
            QuantMode::Ideal => value,
            QuantMode::Uniform if full_scale > 0.0 => quantize_uniform(
                value,
                self.output_bits,
                Interval {
                    lo: -full_scale,
                    hi: full_scale,
                },
            ),
            QuantMode::Uniform => 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit() -> Interval {
        Interval::new(0.0, 1.0).unwrap()
    }

    #[test]
    fn ideal_is_identity() {
        let q = QuantSpec::ideal();
        for x in [-3.5, 0.0, 0.123456789, 1e9] {
            assert_eq!(q.quantize(x, Quantity::Input), x);
            assert_eq!(q.quantize(x, Quantity::Weight), x);
        }
    }

    #[test]
    fn one_bit_tie_rounds_away_from_zero() {
        let q = QuantSpec::new(1, 1, 1, unit(), unit(), QuantMode::Uniform).unwrap();
        assert_eq!(q.quantize(0.5, Quantity::Weight), 1.0);
        assert_eq!(q.quantize(0.49, Quantity::Weight), 0.0);
    }

    #[test]
    fn clamps_out_of_range() {
        let q = QuantSpec::uniform(4).unwrap();
        assert_eq!(q.quantize(7.0, Quantity::Input), 1.0);
        assert_eq!(q.quantize(-7.0, Quantity::Weight), -1.0);
    }

    #[test]
    fn eight_bit_error_within_half_level() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let range = Interval::new(-1.0, 1.0).unwrap();
        let step = 2.0 / 255.0;
        let grid: Vec<f64> = (0..256).map(|k| -1.0 + k as f64 * step).collect();
        for _ in 0..1000 {
            let x: f64 = rng.gen_range(-1.0..1.0);
            let q = quantize_uniform(x, 8, range);
            assert!((q - x).abs() <= step / 2.0 + 1e-15);
            // q is the grid point nearest to x.
            let nearest = grid
                .iter()
                .copied()
                .min_by(|a, b| (a - x).abs().total_cmp(&(b - x).abs()))
                .unwrap();
            assert!((q - nearest).abs() < 1e-15);
        }
    }

    #[test]
    fn bit_bounds_and_ranges_validated() {
        assert!(QuantSpec::uniform(0).is_err());
        assert!(QuantSpec::uniform(17).is_err());
        assert!(Interval::new(1.0, 1.0).is_err());
        assert!(Interval::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn output_quantizer() {
        let q = QuantSpec::uniform(2).unwrap();
        assert_eq!(q.quantize_output(0.9, 0.0), 0.0);
        // levels -1, -1/3, 1/3, 1
        assert!((q.quantize_output(0.2, 1.0) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(QuantSpec::ideal().quantize_output(0.2, 1.0), 0.2);
    }

    #[test]
    fn json_round_trip() {
        let q = QuantSpec::uniform(6).unwrap();
        let s = serde_json::to_string(&q).unwrap();
        assert!(s.contains("\"inputBits\":6"));
        assert!(s.contains("\"weightRange\":[-1.0,1.0]"));
        assert_eq!(serde_json::from_str::<QuantSpec>(&s).unwrap(), q);
        let bad = s.replace("\"inputBits\":6", "\"inputBits\":40");
        assert!(serde_json::from_str::<QuantSpec>(&bad).is_err());
    }

    proptest! {
        #[test]
        fn idempotent(x in -3.0f64..3.0, bits in 1u32..=16, lo in -2.0f64..0.0, width in 0.1f64..4.0) {
            let range = Interval::new(lo, lo + width).unwrap();
            let once = quantize_uniform(x, bits, range);
            prop_assert_eq!(quantize_uniform(once, bits, range), once);
        }
    }
}
