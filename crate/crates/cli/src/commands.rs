// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::Path;

use serde::Serialize;

use rer3d_core::cost::{estimate_with_comparison, Calibration, CalibrationOverride, CostReport};
use rer3d_core::engine::run_paper_literal_traced;
use rer3d_core::quant::QuantMode;
use rer3d_core::{conv_mkmc, run_layer, ExecutionTrace, FeatureMap, StackGeometry};

use crate::failure::Failure;
use crate::output::{csv_bytes, write_atomic, write_json};
use crate::spec::{LayerSpec, RunStrategy};

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ErrorCheck {
    pub reference: &'static str,
    pub max_abs_error: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Diff {
    pub name: String,
    pub strategy: RunStrategy,
    #[serde(flatten)]
    pub against_convolution: ErrorCheck,
    pub tolerance: f64,
    pub within_tolerance: bool,
    /// Set for paper-literal runs, whose mismatch is expected.
    pub diagnostic: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reduction: Option<ErrorCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reduction_holds: Option<bool>,
}

impl Diff {
    pub fn passed(&self) -> bool {
        self.reduction_holds.unwrap_or(self.within_tolerance)
    }
}

pub struct Outcome {
    pub output: FeatureMap,
    pub trace: ExecutionTrace,
    pub cost: CostReport,
    pub diff: Diff,
}

fn check(
    reference: &'static str,
    got: &FeatureMap,
    want: &FeatureMap,
) -> Result<ErrorCheck, Failure> {
    Ok(ErrorCheck {
        reference,
        max_abs_error: got.max_abs_diff(want)?,
        relative_error: got.relative_error(want)?,
    })
}

pub fn simulate(spec: &LayerSpec) -> Result<Outcome, Failure> {
    let image = spec.image()?;
    let kernels = spec.kernels()?;
    let calibration = spec.calibration()?;
    let reference = conv_mkmc(&image, &kernels)?;
    let (output, trace, reduction) = match spec.strategy.selector() {
        Some(selector) => {
            let (fm, trace) = run_layer(&image, &kernels, &spec.geometry, &spec.quant, selector)?;
            (fm, trace, None)
        }
        None => {
            let (fm, trace) =
                run_paper_literal_traced(&image, &kernels, &spec.geometry, &spec.quant)?;
            let reduced = conv_mkmc(&image, &kernels.position_summed())?;
            let r = check("conv_mkmc with position-summed 1x1 kernels", &fm, &reduced)?;
            (fm, trace, Some(r))
        }
    };
    let cost = estimate_with_comparison(&trace, &spec.geometry, &calibration)?;
    let against = check("conv_mkmc", &output, &reference)?;
    let diff = Diff {
        name: spec.name.clone(),
        strategy: spec.strategy,
        within_tolerance: against.relative_error <= spec.tolerance,
        against_convolution: against,
        tolerance: spec.tolerance,
        diagnostic: reduction.is_some(),
        reduction_holds: reduction
            .as_ref()
            .map(|r| r.relative_error <= spec.tolerance),
        reduction,
    };
    Ok(Outcome {
        output,
        trace,
        cost,
        diff,
    })
}

#[derive(Serialize)]
struct CostRow<'a> {
    component: &'a str,
    latency_ns: f64,
    energy_nj: f64,
}

/// Returns whether the run met its tolerance.
pub fn cmd_run(
    spec_path: &Path,
    out: &Path,
    strategy: Option<RunStrategy>,
    tolerance: Option<f64>,
) -> Result<bool, Failure> {
    let mut spec = LayerSpec::load(spec_path)?;
    if let Some(s) = strategy {
        spec.strategy = s;
    }
    if let Some(t) = tolerance {
        spec.tolerance = t;
        spec.validate()?;
    }
    let outcome = simulate(&spec)?;
    fs::create_dir_all(out).map_err(|e| Failure::Io(format!("{}: {e}", out.display())))?;
    let rows: Vec<CostRow> = outcome
        .cost
        .rows()
        .into_iter()
        .map(|(component, latency_ns, energy_nj)| CostRow {
            component,
            latency_ns,
            energy_nj,
        })
        .collect();
    write_json(&out.join("featuremap.json"), &outcome.output)?;
    write_json(&out.join("trace.json"), &outcome.trace)?;
    write_json(&out.join("cost.json"), &outcome.cost)?;
    write_atomic(
        &out.join("cost.csv"),
        &csv_bytes(&["component", "latency_ns", "energy_nj"], &rows)?,
    )?;
    write_json(&out.join("diff.json"), &outcome.diff)?;
    Ok(outcome.diff.passed())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepParam {
    Layers,
    WeightBits,
    KernelSide,
}

#[derive(Serialize)]
struct SweepRow {
    value: usize,
    strategy: String,
    passes: usize,
    cycles: usize,
    total_latency_ns: f64,
    total_energy_nj: f64,
    crossbar_read_latency_ns: f64,
    crossbar_read_latency_per_cycle_ns: f64,
    dac_conversions: u64,
    adc_conversions: u64,
    max_abs_error: f64,
    relative_error: f64,
    latency_ratio_2d: f64,
    energy_ratio_2d: f64,
    dac_ratio_2d: f64,
}

const SWEEP_HEADER: [&str; 15] = [
    "value",
    "strategy",
    "passes",
    "cycles",
    "total_latency_ns",
    "total_energy_nj",
    "crossbar_read_latency_ns",
    "crossbar_read_latency_per_cycle_ns",
    "dac_conversions",
    "adc_conversions",
    "max_abs_error",
    "relative_error",
    "latency_ratio_2d",
    "energy_ratio_2d",
    "dac_ratio_2d",
];

fn with_value(base: &LayerSpec, param: SweepParam, value: usize) -> Result<LayerSpec, Failure> {
    let mut spec = base.clone();
    match param {
        SweepParam::Layers => {
            let g = &base.geometry;
            spec.geometry = StackGeometry::new(value, g.wordlines(), g.bitlines())?;
        }
        SweepParam::WeightBits => {
            let bits =
                u32::try_from(value).map_err(|_| Failure::spec(format!("{value} weight bits")))?;
            spec.quant = base
                .quant
                .with_mode(QuantMode::Uniform)
                .with_weight_bits(bits)?;
        }
        SweepParam::KernelSide => {
            if base.kernels.is_some() {
                return Err(Failure::spec("kernelSide sweeps need synthetic kernels"));
            }
            spec.l = value;
            spec.validate()?;
        }
    }
    Ok(spec)
}

pub fn cmd_sweep(
    spec_path: &Path,
    param: SweepParam,
    from: usize,
    to: usize,
    step: usize,
    out: &Path,
    strategy: Option<RunStrategy>,
) -> Result<(), Failure> {
    if step == 0 {
        return Err(Failure::spec("step must be positive"));
    }
    let mut base = LayerSpec::load(spec_path)?;
    if let Some(s) = strategy {
        base.strategy = s;
    }
    let mut rows = Vec::new();
    for value in (from..=to).step_by(step) {
        let spec = with_value(&base, param, value)?;
        let o = simulate(&spec)?;
        let read = o.cost.latency_ns.crossbar_read;
        let cmp = o
            .cost
            .comparison
            .as_ref()
            .expect("estimate_with_comparison attaches a comparison");
        rows.push(SweepRow {
            value,
            strategy: format!("{:?}", o.trace.strategy),
            passes: o.trace.pass_count,
            cycles: o.trace.cycle_count,
            total_latency_ns: o.cost.total_latency_ns,
            total_energy_nj: o.cost.total_energy_nj,
            crossbar_read_latency_ns: read,
            crossbar_read_latency_per_cycle_ns: if o.trace.cycle_count == 0 {
                0.0
            } else {
                read / o.trace.cycle_count as f64
            },
            dac_conversions: o.trace.counts.dac_conversions,
            adc_conversions: o.trace.counts.adc_conversions,
            max_abs_error: o.diff.against_convolution.max_abs_error,
            relative_error: o.diff.against_convolution.relative_error,
            latency_ratio_2d: cmp.latency_ratio,
            energy_ratio_2d: cmp.energy_ratio,
            dac_ratio_2d: cmp.dac_conversion_ratio,
        });
    }
    write_atomic(out, &csv_bytes(&SWEEP_HEADER, &rows)?)
}

/// Merged calibration as pretty JSON.
pub fn cmd_calibrate(override_path: &Path) -> Result<String, Failure> {
    let text = fs::read_to_string(override_path)
        .map_err(|e| Failure::spec(format!("{}: {e}", override_path.display())))?;
    let o: CalibrationOverride = serde_json::from_str(&text)
        .map_err(|e| Failure::spec(format!("{}: {e}", override_path.display())))?;
    let cal = Calibration::default().with_override(o)?;
    serde_json::to_string_pretty(&cal).map_err(|e| Failure::spec(e.to_string()))
}
