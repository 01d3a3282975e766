// SPDX-License-Identifier: Apache-2.0

//! Latency and energy attached to an execution trace.
//!
//! Memory parameters are per technology. Layer-count scaling factors are
//! exact lookups on even `L` in `[2, 32]`, normalized to `L = 2`. Converter,
//! interconnect and digital costs have no measured source and default to
//! placeholders that every report lists under `assumptions`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::crossbar::StackGeometry;
use crate::engine::{ExecutionTrace, OpCounts};
use crate::error::{Error, Result};

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
pub enum Technology {
    #[default]
    #[serde(rename = "ReRAM")]
    ReRam,
    #[serde(rename = "eDRAM")]
    EDram,
    #[serde(rename = "SRAM")]
    Sram,
    #[serde(rename = "STT-RAM")]
    SttRam,
}

impl Technology {
    pub const ALL: [Technology; 4] = [
        Technology::ReRam,
        Technology::EDram,
        Technology::Sram,
        Technology::SttRam,
    ];
}

/// Energies in nJ, latencies in ns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MemTechParams {
    pub write_energy: f64,
    pub read_energy: f64,
    pub write_latency: f64,
    pub read_latency: f64,
}

impl MemTechParams {
    fn validate(&self, tech: Technology) -> Result<()> {
        let all = [
            self.write_energy,
            self.read_energy,
            self.write_latency,
            self.read_latency,
        ];
        if all.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "{tech:?} parameters must be positive: {self:?}"
            )))
        }
    }
}

pub type MemTechTable = BTreeMap<Technology, MemTechParams>;

pub fn memtech_table() -> MemTechTable {
    let row = |write_energy, read_energy, write_latency, read_latency| MemTechParams {
        write_energy,
        read_energy,
        write_latency,
        read_latency,
    };
    BTreeMap::from([
        (Technology::ReRam, row(1.907, 1.623, 15.274, 13.948)),
        (Technology::EDram, row(3.407, 3.324, 34.207, 66.661)),
        (Technology::Sram, row(6.687, 6.688, 144.556, 279.546)),
        (Technology::SttRam, row(2.102, 1.975, 13.469, 18.06)),
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Metric {
    WriteEnergy,
    ReadEnergy,
    WriteLatency,
    ReadLatency,
}

/// Normalized factor per even layer count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(usize, f64)>", into = "Vec<(usize, f64)>")]
pub struct ScalingTable {
    points: Vec<(usize, f64)>,
}

impl ScalingTable {
    pub fn new(mut points: Vec<(usize, f64)>) -> Result<Self> {
        points.sort_by_key(|p| p.0);
        if points.first().copied() != Some((2, 1.0)) {
            return Err(Error::Config("scaling table must start at (2, 1.0)".into()));
        }
        for w in points.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::Config(format!("duplicate layer count {}", w[0].0)));
            }
            if w[1].1 < w[0].1 {
                return Err(Error::Config(format!(
                    "scaling factor decreases at L = {}",
                    w[1].0
                )));
            }
        }
        if let Some(&(l, f)) = points
            .iter()
            .find(|(l, f)| l % 2 == 1 || !(f.is_finite() && *f > 0.0))
        {
            return Err(Error::Config(format!("invalid scaling point ({l}, {f})")));
        }
        Ok(ScalingTable { points })
    }

    fn from_series(series: &[f64]) -> Self {
        ScalingTable {
            points: series
                .iter()
                .enumerate()
                .map(|(k, &f)| (2 * (k + 1), f))
                .collect(),
        }
    }

    pub fn points(&self) -> &[(usize, f64)] {
        &self.points
    }
}

impl TryFrom<Vec<(usize, f64)>> for ScalingTable {
    type Error = Error;
    fn try_from(points: Vec<(usize, f64)>) -> Result<Self> {
        ScalingTable::new(points)
    }
}

impl From<ScalingTable> for Vec<(usize, f64)> {
    fn from(t: ScalingTable) -> Self {
        t.points
    }
}

/// Exact tabulated factor; no interpolation.
pub fn scaling_factor(table: &ScalingTable, layers: usize) -> Result<f64> {
    table
        .points
        .iter()
        .find(|p| p.0 == layers)
        .map(|p| p.1)
        .ok_or_else(|| Error::Range(format!("no scaling factor for L = {layers}")))
}

const WRITE_ENERGY: [f64; 16] = [
    1.0,
    1.077324478,
    1.15512334,
    1.268975332,
    1.316888046,
    1.364326376,
    1.412239089,
    1.459677419,
    1.50711575,
    1.555028463,
    1.602466793,
    1.650379507,
    1.697817837,
    1.74573055,
    1.79316888,
    1.840607211,
];
const READ_ENERGY: [f64; 16] = [
    1.0,
    1.020251779,
    1.041050903,
    1.243021346,
    1.263820471,
    1.284619595,
    1.305418719,
    1.325670498,
    1.346469622,
    1.367268747,
    1.388067871,
    1.408866995,
    1.429118774,
    1.449917898,
    1.470717022,
    1.491516147,
];
const WRITE_LATENCY: [f64; 16] = [
    1.0,
    1.116699958,
    1.250832274,
    1.289268204,
    1.354155317,
    1.423400521,
    1.497003813,
    1.574965196,
    1.657284668,
    1.74396223,
    1.835058411,
    1.930452152,
    2.030203983,
    2.134313904,
    2.242781914,
    2.355608014,
];
const READ_LATENCY: [f64; 16] = [
    1.0,
    1.110159193,
    1.237817475,
    1.456981407,
    1.518653542,
    1.584639689,
    1.655061368,
    1.729797059,
    1.808968283,
    1.892453518,
    1.980374286,
    2.072609066,
    2.169279378,
    2.270263702,
    2.375622797,
    2.485417426,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScalingTables {
    pub write_energy: ScalingTable,
    pub read_energy: ScalingTable,
    pub write_latency: ScalingTable,
    pub read_latency: ScalingTable,
}

impl Default for ScalingTables {
    fn default() -> Self {
        ScalingTables {
            write_energy: ScalingTable::from_series(&WRITE_ENERGY),
            read_energy: ScalingTable::from_series(&READ_ENERGY),
            write_latency: ScalingTable::from_series(&WRITE_LATENCY),
            read_latency: ScalingTable::from_series(&READ_LATENCY),
        }
    }
}

impl ScalingTables {
    pub fn get(&self, metric: Metric) -> &ScalingTable {
        match metric {
            Metric::WriteEnergy => &self.write_energy,
            Metric::ReadEnergy => &self.read_energy,
            Metric::WriteLatency => &self.write_latency,
            Metric::ReadLatency => &self.read_latency,
        }
    }
}

/// Per-operation costs outside the memory array. Energies in nJ, latencies
/// in ns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct ConverterParams {
    pub dac_energy: f64,
    pub dac_latency: f64,
    pub adc_energy: f64,
    pub adc_latency: f64,
    /// Per current-plane bus accumulation.
    pub interconnect_energy: f64,
    pub interconnect_latency: f64,
    /// Per digital tile addition.
    pub digital_energy: f64,
    pub digital_latency: f64,
}

impl Default for ConverterParams {
    fn default() -> Self {
        ConverterParams {
            dac_energy: 0.001,
            dac_latency: 1.0,
            adc_energy: 0.001,
            adc_latency: 1.0,
            interconnect_energy: 0.0001,
            interconnect_latency: 0.0,
            digital_energy: 0.0001,
            digital_latency: 0.0,
        }
    }
}

impl ConverterParams {
    fn validate(&self) -> Result<()> {
        let all = [
            self.dac_energy,
            self.dac_latency,
            self.adc_energy,
            self.adc_latency,
            self.interconnect_energy,
            self.interconnect_latency,
            self.digital_energy,
            self.digital_latency,
        ];
        if all.iter().all(|v| v.is_finite() && *v >= 0.0) {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "converter costs must be non-negative: {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Calibration {
    pub technology: Technology,
    pub memtech: MemTechTable,
    pub scaling: ScalingTables,
    pub converters: ConverterParams,
}

impl Default for Calibration {
    fn default() -> Self {
        Calibration {
            technology: Technology::ReRam,
            memtech: memtech_table(),
            scaling: ScalingTables::default(),
            converters: ConverterParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScalingOverride {
    pub write_energy: Option<ScalingTable>,
    pub read_energy: Option<ScalingTable>,
    pub write_latency: Option<ScalingTable>,
    pub read_latency: Option<ScalingTable>,
}

/// Partial calibration; absent sections keep their current values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CalibrationOverride {
    pub technology: Option<Technology>,
    pub memtech: Option<MemTechTable>,
    pub scaling: Option<ScalingOverride>,
    pub converters: Option<ConverterParams>,
}

impl Calibration {
    pub fn with_override(mut self, o: CalibrationOverride) -> Result<Self> {
        if let Some(t) = o.technology {
            self.technology = t;
        }
        if let Some(m) = o.memtech {
            self.memtech.extend(m);
        }
        if let Some(s) = o.scaling {
            let slots = [
                (s.write_energy, &mut self.scaling.write_energy),
                (s.read_energy, &mut self.scaling.read_energy),
                (s.write_latency, &mut self.scaling.write_latency),
                (s.read_latency, &mut self.scaling.read_latency),
            ];
            for (new, slot) in slots {
                if let Some(new) = new {
                    *slot = new;
                }
            }
        }
        if let Some(c) = o.converters {
            self.converters = c;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn from_override_json(json: &str) -> Result<Self> {
        let o: CalibrationOverride = serde_json::from_str(json)
            .map_err(|e| Error::Config(format!("calibration override: {e}")))?;
        Calibration::default().with_override(o)
    }

    pub fn validate(&self) -> Result<()> {
        for (tech, p) in &self.memtech {
            p.validate(*tech)?;
        }
        self.params()?;
        self.converters.validate()
    }

    /// Parameters of the selected technology.
    pub fn params(&self) -> Result<MemTechParams> {
        self.memtech
            .get(&self.technology)
            .copied()
            .ok_or_else(|| Error::Config(format!("no parameters for {:?}", self.technology)))
    }

    fn factor(&self, metric: Metric, layers: usize) -> Result<f64> {
        scaling_factor(self.scaling.get(metric), layers)
            .map_err(|_| Error::Config(format!("{metric:?} table has no entry for L = {layers}")))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Breakdown {
    pub crossbar_read: f64,
    pub dac: f64,
    pub adc: f64,
    pub interconnect: f64,
    pub digital_combine: f64,
}

impl Breakdown {
    pub fn total(&self) -> f64 {
        self.crossbar_read + self.dac + self.adc + self.interconnect + self.digital_combine
    }

    pub fn components(&self) -> [(&'static str, f64); 5] {
        [
            ("crossbarRead", self.crossbar_read),
            ("dac", self.dac),
            ("adc", self.adc),
            ("interconnect", self.interconnect),
            ("digitalCombine", self.digital_combine),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CostReport {
    pub technology: Technology,
    pub layers: usize,
    pub cycles: usize,
    pub per_cycle_latency_ns: f64,
    pub total_latency_ns: f64,
    pub total_energy_nj: f64,
    pub latency_ns: Breakdown,
    pub energy_nj: Breakdown,
    pub assumptions: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub comparison: Option<Comparison>,
}

impl CostReport {
    /// `(component, latency ns, energy nJ)` per breakdown component.
    pub fn rows(&self) -> Vec<(&'static str, f64, f64)> {
        self.latency_ns
            .components()
            .into_iter()
            .zip(self.energy_nj.components())
            .map(|((name, lat), (_, e))| (name, lat, e))
            .collect()
    }
}

fn assumptions(c: &ConverterParams) -> Vec<String> {
    let d = ConverterParams::default();
    let mut out = Vec::new();
    let mut note = |what: &str, value: f64, default: f64, unit: &str| {
        if value == default {
            out.push(format!("{what} = {value} {unit} (placeholder default)"));
        }
    };
    note("dacEnergy", c.dac_energy, d.dac_energy, "nJ");
    note("dacLatency", c.dac_latency, d.dac_latency, "ns");
    note("adcEnergy", c.adc_energy, d.adc_energy, "nJ");
    note("adcLatency", c.adc_latency, d.adc_latency, "ns");
    note(
        "interconnectEnergy",
        c.interconnect_energy,
        d.interconnect_energy,
        "nJ",
    );
    note(
        "interconnectLatency",
        c.interconnect_latency,
        d.interconnect_latency,
        "ns",
    );
    note("digitalEnergy", c.digital_energy, d.digital_energy, "nJ");
    note("digitalLatency", c.digital_latency, d.digital_latency, "ns");
    out.push("DAC, crossbar read and ADC are sequential within a cycle".into());
    out
}

fn cost_of(
    cycles: usize,
    counts: &OpCounts,
    read_latency_factor: f64,
    read_energy_factor: f64,
    p: &MemTechParams,
    c: &ConverterParams,
) -> (Breakdown, Breakdown) {
    let t = cycles as f64;
    let latency = Breakdown {
        crossbar_read: t * p.read_latency * read_latency_factor,
        dac: t * c.dac_latency,
        adc: t * c.adc_latency,
        interconnect: t * c.interconnect_latency,
        digital_combine: t * c.digital_latency,
    };
    let energy = Breakdown {
        crossbar_read: p.read_energy * read_energy_factor * counts.analog_readouts as f64,
        dac: c.dac_energy * counts.dac_conversions as f64,
        adc: c.adc_energy * counts.adc_conversions as f64,
        interconnect: c.interconnect_energy * counts.bus_accumulations as f64,
        digital_combine: c.digital_energy * counts.digital_adds as f64,
    };
    (latency, energy)
}

fn check_geometry(trace: &ExecutionTrace, geometry: &StackGeometry) -> Result<()> {
    if trace.geometry != *geometry {
        return Err(Error::invalid(format!(
            "trace was recorded on {:?}, not {:?}",
            trace.geometry, geometry
        )));
    }
    Ok(())
}

pub fn estimate(
    trace: &ExecutionTrace,
    geometry: &StackGeometry,
    cal: &Calibration,
) -> Result<CostReport> {
    check_geometry(trace, geometry)?;
    let p = cal.params()?;
    let layers = geometry.layers();
    let (latency, energy) = cost_of(
        trace.cycle_count,
        &trace.counts,
        cal.factor(Metric::ReadLatency, layers)?,
        cal.factor(Metric::ReadEnergy, layers)?,
        &p,
        &cal.converters,
    );
    Ok(CostReport {
        technology: cal.technology,
        layers,
        cycles: trace.cycle_count,
        per_cycle_latency_ns: if trace.cycle_count == 0 {
            0.0
        } else {
            latency.total() / trace.cycle_count as f64
        },
        total_latency_ns: latency.total(),
        total_energy_nj: energy.total(),
        latency_ns: latency,
        energy_nj: energy,
        assumptions: assumptions(&cal.converters),
        comparison: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SensitivityPoint {
    pub interconnect_multiplier: f64,
    pub energy_ratio: f64,
}

/// 3D over 2D ratios; values below one favour the stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Comparison {
    pub latency_ratio: f64,
    pub energy_ratio: f64,
    pub dac_conversion_ratio: f64,
    pub adc_conversion_ratio: f64,
    pub baseline_latency_ns: f64,
    pub baseline_energy_nj: f64,
    pub interconnect_sensitivity: Vec<SensitivityPoint>,
}

fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        if a == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        a / b
    }
}

pub const SENSITIVITY_MULTIPLIERS: [f64; 3] = [0.0, 1.0, 10.0];

/// Compare against `L` unshared 2D arrays holding the same cells.
pub fn compare_2d_3d(
    trace: &ExecutionTrace,
    geometry: &StackGeometry,
    cal: &Calibration,
) -> Result<Comparison> {
    let report = estimate(trace, geometry, cal)?;
    let p = cal.params()?;
    let pair = |c: &ConverterParams| {
        let (_, e3) = cost_of(
            trace.cycle_count,
            &trace.counts,
            1.0,
            cal.factor(Metric::ReadEnergy, geometry.layers())?,
            &p,
            c,
        );
        let (l2, e2) = cost_of(trace.cycle_count, &trace.equivalent_2d, 1.0, 1.0, &p, c);
        Ok::<_, Error>((e3, l2, e2))
    };
    let (_, l2, e2) = pair(&cal.converters)?;
    let interconnect_sensitivity = SENSITIVITY_MULTIPLIERS
        .iter()
        .map(|&m| {
            let c = ConverterParams {
                interconnect_energy: cal.converters.interconnect_energy * m,
                ..cal.converters
            };
            let (e3, _, e2) = pair(&c)?;
            Ok(SensitivityPoint {
                interconnect_multiplier: m,
                energy_ratio: ratio(e3.total(), e2.total()),
            })
        })
        .collect::<Result<_>>()?;
    Ok(Comparison {
        latency_ratio: ratio(report.total_latency_ns, l2.total()),
        energy_ratio: ratio(report.total_energy_nj, e2.total()),
        dac_conversion_ratio: ratio(
            trace.counts.dac_conversions as f64,
            trace.equivalent_2d.dac_conversions as f64,
        ),
        adc_conversion_ratio: ratio(
            trace.counts.adc_conversions as f64,
            trace.equivalent_2d.adc_conversions as f64,
        ),
        baseline_latency_ns: l2.total(),
        baseline_energy_nj: e2.total(),
        interconnect_sensitivity,
    })
}

/// Estimate with the 2D comparison attached.
pub fn estimate_with_comparison(
    trace: &ExecutionTrace,
    geometry: &StackGeometry,
    cal: &Calibration,
) -> Result<CostReport> {
    let mut report = estimate(trace, geometry, cal)?;
    report.comparison = Some(compare_2d_3d(trace, geometry, cal)?);
    Ok(report)
}
