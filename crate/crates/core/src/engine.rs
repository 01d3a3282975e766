// SPDX-License-Identifier: Apache-2.0

//! Cycle-level execution of a mapping plan.
//!
//! Cycle `t` of every pass serves output pixel `(t / w, t % w)` in raster
//! order. Each voltage plane receives the channel column of the pixel shifted
//! by that plane's offset; unassigned planes receive zeros. Per cycle the
//! inputs pass the DAC quantizer, every current plane sums its two layers,
//! the interconnect folds the planes onto `Ip` and `In`, the op-amp subtracts
//! and the ADC digitizes the difference. Passes are then summed digitally in
//! pass order.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crossbar::{
    accumulate_bus, currentplane_current, opamp_readout, CellArray, ReadoutModel, Route,
    StackGeometry, VoltageAssignment,
};
use crate::decomp::{pixel_column_range, Offset, PixelColumn};
use crate::error::{Error, Result};
use crate::mapper::{plan, InterconnectConfig, MappingPlan, Pass, Strategy};
use crate::quant::{QuantSpec, Quantity};
use crate::tensor::{FeatureMap, Image, KernelSet};

/// How voltage planes are fed each cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feed {
    /// Each plane gets the column shifted by its own offset.
    Staggered,
    /// Every plane gets the unshifted column.
    Uniform,
}

/// Inputs of one cycle: one column per voltage plane.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleEntry {
    pub pass_index: usize,
    pub cycle_index: usize,
    pub columns: Vec<PixelColumn>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InputSchedule {
    pub cycles_per_pass: usize,
    /// Indexed by pass, then cycle.
    pub entries: Vec<Vec<ScheduleEntry>>,
}

fn plane_offsets(pass: &Pass, planes: usize, feed: Feed) -> Vec<Option<Offset>> {
    (0..planes)
        .map(|v| {
            pass.assignment_for_plane(v).map(|a| match feed {
                Feed::Staggered => a.offset,
                Feed::Uniform => Offset::ZERO,
            })
        })
        .collect()
}

fn schedule_entry(
    image: &Image,
    pass: &Pass,
    offsets: &[Option<Offset>],
    cycle: usize,
) -> Result<ScheduleEntry> {
    let loc = (cycle / image.width(), cycle % image.width());
    let columns = offsets
        .iter()
        .map(|off| match off {
            Some(off) => pixel_column_range(image, loc, *off, pass.channel_tile.clone()),
            None => Ok(PixelColumn::zeros(loc, pass.channel_tile.len(), cycle)),
        })
        .collect::<Result<_>>()?;
    Ok(ScheduleEntry {
        pass_index: pass.index,
        cycle_index: cycle,
        columns,
    })
}

fn check_image(image: &Image, plan: &MappingPlan) -> Result<()> {
    if image.channels() != plan.kernel_shape.c {
        return Err(Error::invalid(format!(
            "image has {} channels, plan expects {}",
            image.channels(),
            plan.kernel_shape.c
        )));
    }
    Ok(())
}

pub fn build_input_schedule(image: &Image, plan: &MappingPlan) -> Result<InputSchedule> {
    check_image(image, plan)?;
    let cycles = image.height() * image.width();
    let planes = plan.geometry.voltage_planes();
    let entries = plan
        .passes
        .iter()
        .map(|pass| {
            let offsets = plane_offsets(pass, planes, Feed::Staggered);
            (0..cycles)
                .map(|t| schedule_entry(image, pass, &offsets, t))
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(InputSchedule {
        cycles_per_pass: cycles,
        entries,
    })
}

/// A pass after its cells are programmed.
#[derive(Debug, Clone)]
pub struct ProgrammedPass {
    pub index: usize,
    pub cells: CellArray,
    pub routing: InterconnectConfig,
    pub scale: f64,
    /// ADC full scale per kernel column, in conductance units.
    pub full_scale: Vec<f64>,
    pub kernel_tile: Range<usize>,
    pub channel_tile: Range<usize>,
}

/// Program a fresh stack with one pass of the plan.
pub fn program_pass(plan: &MappingPlan, pass: &Pass, quant: &QuantSpec) -> Result<ProgrammedPass> {
    let g = plan.geometry;
    let mut cells = CellArray::with_dummy_layers(g, pass.dummy_layers.iter().copied())?;
    cells.program_cells(&pass.cell_writes)?;
    let columns = pass.kernel_tile.len();
    let mut ip = vec![0.0; columns];
    let mut in_ = vec![0.0; columns];
    for w in &pass.cell_writes {
        match pass.routing.get(w.bitline, g.collecting_plane(w.layer)) {
            Route::ToIp => ip[w.bitline] += w.conductance,
            Route::ToIn => in_[w.bitline] += w.conductance,
            Route::Off => {}
        }
    }
    let range = quant.input_range();
    let full_scale = (0..columns)
        .map(|b| {
            // Non-negative inputs cannot push both buses to their maximum at once.
            let g = if range.lo() >= 0.0 {
                ip[b].max(in_[b])
            } else {
                ip[b] + in_[b]
            };
            range.max_abs() * g
        })
        .collect();
    Ok(ProgrammedPass {
        index: pass.index,
        cells,
        routing: pass.routing.clone(),
        scale: pass.scale,
        full_scale,
        kernel_tile: pass.kernel_tile.clone(),
        channel_tile: pass.channel_tile.clone(),
    })
}

/// Post-ADC readouts of one cycle, rescaled to weight units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CycleResult {
    pub pass_index: usize,
    pub cycle_index: usize,
    /// One value per kernel column of the pass.
    pub values: Vec<f64>,
}

pub fn run_cycle(
    pass: &ProgrammedPass,
    entry: &ScheduleEntry,
    quant: &QuantSpec,
    readout: &ReadoutModel,
) -> Result<CycleResult> {
    let g = *pass.cells.geometry();
    let columns = pass.kernel_tile.len();
    if entry.columns.len() != g.voltage_planes() {
        return Err(Error::invalid(format!(
            "schedule entry has {} columns for {} voltage planes",
            entry.columns.len(),
            g.voltage_planes()
        )));
    }
    if pass.routing.columns != columns
        || pass.routing.current_planes != g.current_planes()
        || columns > g.bitlines()
    {
        return Err(Error::invalid("routing does not match stack geometry"));
    }
    let mut volts = VoltageAssignment::zeros(&g);
    for (v, col) in entry.columns.iter().enumerate() {
        if col.values.len() > g.wordlines() {
            return Err(Error::invalid(format!(
                "{} inputs for {} wordlines",
                col.values.len(),
                g.wordlines()
            )));
        }
        let q: Vec<f64> = col
            .values
            .iter()
            .map(|&x| quant.quantize(x, Quantity::Input))
            .collect();
        volts.set_plane(v, &q)?;
    }
    let mut currents = vec![0.0; g.current_planes()];
    let values = (0..columns)
        .map(|b| {
            for (k, slot) in currents.iter_mut().enumerate() {
                *slot = currentplane_current(&pass.cells, &volts, k, b)?;
            }
            let (ip, in_) = accumulate_bus(&currents, pass.routing.column(b))?;
            let analog = opamp_readout(ip, in_, readout);
            Ok(quant.quantize_output(analog, pass.full_scale[b]) * pass.scale)
        })
        .collect::<Result<_>>()?;
    Ok(CycleResult {
        pass_index: pass.index,
        cycle_index: entry.cycle_index,
        values,
    })
}

/// Conversion and accumulation counts of a pass or a whole run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OpCounts {
    pub dac_conversions: u64,
    pub adc_conversions: u64,
    pub analog_readouts: u64,
    pub bus_accumulations: u64,
    pub digital_adds: u64,
}

impl std::ops::AddAssign for OpCounts {
    fn add_assign(&mut self, o: OpCounts) {
        self.dac_conversions += o.dac_conversions;
        self.adc_conversions += o.adc_conversions;
        self.analog_readouts += o.analog_readouts;
        self.bus_accumulations += o.bus_accumulations;
        self.digital_adds += o.digital_adds;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PassTrace {
    pub index: usize,
    pub channel_tile: Range<usize>,
    pub kernel_tile: Range<usize>,
    pub planes_used: usize,
    pub cycles: usize,
    #[serde(flatten)]
    pub counts: OpCounts,
    /// The same work on `L` independent 2D crossbars.
    pub equivalent_2d: OpCounts,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExecutionTrace {
    pub strategy: Strategy,
    /// True when every plane was fed the unshifted column.
    pub paper_literal: bool,
    pub geometry: StackGeometry,
    pub cycle_count: usize,
    pub cycles_per_pass: usize,
    pub pass_count: usize,
    #[serde(flatten)]
    pub counts: OpCounts,
    pub equivalent_2d: OpCounts,
    pub per_pass: Vec<PassTrace>,
}

fn pass_trace(g: &StackGeometry, pass: &Pass, cycles: usize) -> PassTrace {
    let t = cycles as u64;
    let (w, b) = (
        pass.channel_tile.len() as u64,
        pass.kernel_tile.len() as u64,
    );
    let (vp, cp, layers) = (
        g.voltage_planes() as u64,
        g.current_planes() as u64,
        g.layers() as u64,
    );
    PassTrace {
        index: pass.index,
        channel_tile: pass.channel_tile.clone(),
        kernel_tile: pass.kernel_tile.clone(),
        planes_used: pass.planes_used(),
        cycles,
        counts: OpCounts {
            dac_conversions: t * vp * w,
            adc_conversions: t * b,
            analog_readouts: t * b,
            bus_accumulations: t * cp * b,
            digital_adds: t * b,
        },
        equivalent_2d: OpCounts {
            dac_conversions: t * layers * w,
            adc_conversions: t * layers * b,
            analog_readouts: t * layers * b,
            bus_accumulations: t * layers * b,
            digital_adds: t * layers * b,
        },
    }
}

/// Counts a plan would incur on an `h x w` image, without running it.
pub fn trace_plan(plan: &MappingPlan, h: usize, w: usize, feed: Feed) -> ExecutionTrace {
    let cycles = h * w;
    let per_pass: Vec<PassTrace> = plan
        .passes
        .iter()
        .map(|p| pass_trace(&plan.geometry, p, cycles))
        .collect();
    let mut counts = OpCounts::default();
    let mut equivalent_2d = OpCounts::default();
    for p in &per_pass {
        counts += p.counts;
        equivalent_2d += p.equivalent_2d;
    }
    ExecutionTrace {
        strategy: plan.strategy,
        paper_literal: feed == Feed::Uniform,
        geometry: plan.geometry,
        cycle_count: cycles * plan.passes.len(),
        cycles_per_pass: cycles,
        pass_count: plan.passes.len(),
        counts,
        equivalent_2d,
        per_pass,
    }
}

fn execute(
    image: &Image,
    plan: &MappingPlan,
    quant: &QuantSpec,
    readout: &ReadoutModel,
    feed: Feed,
) -> Result<(FeatureMap, ExecutionTrace)> {
    check_image(image, plan)?;
    let (h, w) = (image.height(), image.width());
    let mut out = FeatureMap::zeros(plan.kernel_shape.n, h, w);
    let planes = plan.geometry.voltage_planes();
    for pass in &plan.passes {
        let programmed = program_pass(plan, pass, quant)?;
        let offsets = plane_offsets(pass, planes, feed);
        let results: Vec<CycleResult> = (0..h * w)
            .into_par_iter()
            .map(|t| {
                let entry = schedule_entry(image, pass, &offsets, t)?;
                run_cycle(&programmed, &entry, quant, readout)
            })
            .collect::<Result<_>>()?;
        for r in results {
            let (row, col) = (r.cycle_index / w, r.cycle_index % w);
            for (b, v) in r.values.into_iter().enumerate() {
                *out.get_mut(pass.kernel_tile.start + b, row, col) += v;
            }
        }
    }
    Ok((out, trace_plan(plan, h, w, feed)))
}

/// Run a prepared plan, for instance one loaded from disk.
pub fn execute_plan(
    image: &Image,
    plan: &MappingPlan,
    quant: &QuantSpec,
    readout: &ReadoutModel,
) -> Result<(FeatureMap, ExecutionTrace)> {
    execute(image, plan, quant, readout, Feed::Staggered)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategySelector {
    /// Split-plane when feasible, dual-rail otherwise.
    #[default]
    Auto,
    SplitPlane,
    DualRail,
}

pub fn select_plan(
    kernels: &KernelSet,
    geometry: &StackGeometry,
    quant: &QuantSpec,
    selector: StrategySelector,
) -> Result<MappingPlan> {
    match selector {
        StrategySelector::Auto => match plan(kernels, geometry, quant, Strategy::SplitPlane) {
            Err(e) if e.is_infeasible() => plan(kernels, geometry, quant, Strategy::DualRail),
            other => other,
        },
        StrategySelector::SplitPlane => plan(kernels, geometry, quant, Strategy::SplitPlane),
        StrategySelector::DualRail => plan(kernels, geometry, quant, Strategy::DualRail),
    }
}

fn check_channels(image: &Image, kernels: &KernelSet) -> Result<()> {
    if image.channels() != kernels.channels() {
        return Err(Error::invalid(format!(
            "image has {} channels, kernels have {}",
            image.channels(),
            kernels.channels()
        )));
    }
    Ok(())
}

pub fn run_layer(
    image: &Image,
    kernels: &KernelSet,
    geometry: &StackGeometry,
    quant: &QuantSpec,
    selector: StrategySelector,
) -> Result<(FeatureMap, ExecutionTrace)> {
    check_channels(image, kernels)?;
    let plan = select_plan(kernels, geometry, quant, selector)?;
    execute_plan(image, &plan, quant, &ReadoutModel::default())
}

/// Every plane fed the unshifted column. The result is the convolution with
/// each kernel collapsed to the 1x1 sum over its positions.
pub fn run_paper_literal_traced(
    image: &Image,
    kernels: &KernelSet,
    geometry: &StackGeometry,
    quant: &QuantSpec,
) -> Result<(FeatureMap, ExecutionTrace)> {
    check_channels(image, kernels)?;
    let plan = select_plan(kernels, geometry, quant, StrategySelector::Auto)?;
    execute(image, &plan, quant, &ReadoutModel::default(), Feed::Uniform)
}

pub fn run_paper_literal(
    image: &Image,
    kernels: &KernelSet,
    geometry: &StackGeometry,
    quant: &QuantSpec,
) -> Result<FeatureMap> {
    run_paper_literal_traced(image, kernels, geometry, quant).map(|(fm, _)| fm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomp::pixel_column;
    use crate::mapper::{plan_dual_rail, plan_split_plane};
    use crate::tensor::conv_mkmc;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn geom(l: usize, w: usize, b: usize) -> StackGeometry {
        StackGeometry::new(l, w, b).unwrap()
    }

    fn random_image(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> Image {
        Image::from_fn(c, h, w, |_, _, _| rng.gen_range(0.0..1.0)).unwrap()
    }

    fn random_kernels(rng: &mut ChaCha8Rng, n: usize, c: usize, l: usize) -> KernelSet {
        KernelSet::from_fn(n, c, l, |_, _, _, _| rng.gen_range(-1.0..1.0)).unwrap()
    }

    #[test]
    fn unit_kernel_schedule_is_raster_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let img = random_image(&mut rng, 2, 3, 4);
        let k = KernelSet::new(1, 2, 1, vec![0.5, 0.25]).unwrap();
        let plan = plan_split_plane(&k, &geom(4, 2, 1), &QuantSpec::ideal()).unwrap();
        let s = build_input_schedule(&img, &plan).unwrap();
        assert_eq!(s.cycles_per_pass, 12);
        for (t, e) in s.entries[0].iter().enumerate() {
            assert_eq!(e.columns[0].location, (t / 4, t % 4));
            assert_eq!(
                e.columns[0].values,
                vec![img.get(0, t / 4, t % 4), img.get(1, t / 4, t % 4)]
            );
            // Plane 1 carries nothing.
            assert!(e.columns[1].is_zero());
        }
    }

    #[test]
    fn corner_cycle_sees_padding() {
        let img = Image::new(1, 4, 4, vec![1.0; 16]).unwrap();
        let k = KernelSet::new(1, 1, 3, vec![0.1; 9]).unwrap();
        let plan = plan_split_plane(&k, &geom(16, 1, 1), &QuantSpec::ideal()).unwrap();
        let s = build_input_schedule(&img, &plan).unwrap();
        for (v, col) in s.entries[0][0].columns.iter().enumerate() {
            match plan.passes[0].assignment_for_plane(v) {
                Some(a) if a.offset.dr < 0 || a.offset.dc < 0 => assert!(col.is_zero()),
                Some(_) => assert!(!col.is_zero()),
                None => assert!(col.is_zero()),
            }
        }
    }

    #[test]
    fn schedule_matches_padded_lookup() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let img = random_image(&mut rng, 3, 4, 4);
        let k = random_kernels(&mut rng, 2, 3, 3);
        let plan = plan_dual_rail(&k, &geom(6, 2, 2), &QuantSpec::ideal());
        let s = build_input_schedule(&img, &plan).unwrap();
        assert_eq!(s.entries.len(), plan.passes.len());
        for (pass, entries) in plan.passes.iter().zip(&s.entries) {
            for (t, e) in entries.iter().enumerate() {
                for (v, col) in e.columns.iter().enumerate() {
                    let expected = match pass.assignment_for_plane(v) {
                        Some(a) => pixel_column(&img, (t / 4, t % 4), a.offset).unwrap().values
                            [pass.channel_tile.clone()]
                        .to_vec(),
                        None => vec![0.0; pass.channel_tile.len()],
                    };
                    assert_eq!(col.values, expected);
                }
            }
        }
    }

    #[test]
    fn zero_inputs_read_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k = random_kernels(&mut rng, 3, 2, 3);
        let plan = plan_dual_rail(&k, &geom(10, 2, 3), &QuantSpec::ideal());
        let p = program_pass(&plan, &plan.passes[0], &QuantSpec::ideal()).unwrap();
        let entry = ScheduleEntry {
            pass_index: 0,
            cycle_index: 0,
            columns: vec![PixelColumn::zeros((0, 0), 2, 0); 6],
        };
        let r = run_cycle(&p, &entry, &QuantSpec::ideal(), &ReadoutModel::default()).unwrap();
        assert_eq!(r.values, vec![0.0; 3]);
    }

    #[test]
    fn unit_propagation() {
        let k = KernelSet::new(1, 1, 1, vec![1.0]).unwrap();
        let plan = plan_split_plane(&k, &geom(4, 1, 1), &QuantSpec::ideal()).unwrap();
        let p = program_pass(&plan, &plan.passes[0], &QuantSpec::ideal()).unwrap();
        let mut columns = vec![PixelColumn::zeros((0, 0), 1, 0); 3];
        columns[0].values[0] = 1.0;
        let entry = ScheduleEntry {
            pass_index: 0,
            cycle_index: 0,
            columns,
        };
        let r = run_cycle(&p, &entry, &QuantSpec::ideal(), &ReadoutModel::default()).unwrap();
        assert_eq!(r.values, vec![1.0]);
        let short = ScheduleEntry {
            columns: vec![PixelColumn::zeros((0, 0), 1, 0)],
            ..entry
        };
        assert!(run_cycle(&p, &short, &QuantSpec::ideal(), &ReadoutModel::default()).is_err());
    }

    #[test]
    fn cycle_matches_signed_weight_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = geom(8, 3, 4);
        for _ in 0..20 {
            let k = random_kernels(&mut rng, 4, 3, 2);
            let plan = plan_dual_rail(&k, &g, &QuantSpec::ideal());
            for pass in &plan.passes {
                let p = program_pass(&plan, pass, &QuantSpec::ideal()).unwrap();
                let columns: Vec<PixelColumn> = (0..g.voltage_planes())
                    .map(|_| PixelColumn {
                        location: (0, 0),
                        values: (0..3).map(|_| rng.gen_range(0.0..1.0)).collect(),
                        cycle_index: 0,
                    })
                    .collect();
                let entry = ScheduleEntry {
                    pass_index: pass.index,
                    cycle_index: 0,
                    columns: columns.clone(),
                };
                let got =
                    run_cycle(&p, &entry, &QuantSpec::ideal(), &ReadoutModel::default()).unwrap();
                for j in 0..4 {
                    let mut expected = 0.0;
                    for a in &pass.assignments {
                        let sign = if a.part == crate::mapper::SlotPart::Negative {
                            -1.0
                        } else {
                            1.0
                        };
                        for i in 0..3 {
                            let w = k.at_position(j, i, a.position);
                            let part = if sign < 0.0 {
                                (-w).max(0.0)
                            } else {
                                w.max(0.0)
                            };
                            expected += sign * part * columns[a.voltage_plane].values[i];
                        }
                    }
                    assert!((got.values[j] - expected).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn identity_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let img = random_image(&mut rng, 1, 5, 6);
        let k = KernelSet::new(1, 1, 1, vec![1.0]).unwrap();
        let (fm, trace) = run_layer(
            &img,
            &k,
            &geom(2, 1, 1),
            &QuantSpec::ideal(),
            StrategySelector::Auto,
        )
        .unwrap();
        assert_eq!(fm.data(), img.data());
        assert_eq!(trace.pass_count, 1);
    }

    #[test]
    fn small_dual_rail_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let img = random_image(&mut rng, 3, 5, 5);
        let k = random_kernels(&mut rng, 2, 3, 3);
        let g = geom(16, 8, 8);
        let (fm, trace) = run_layer(
            &img,
            &k,
            &g,
            &QuantSpec::ideal(),
            StrategySelector::DualRail,
        )
        .unwrap();
        let reference = conv_mkmc(&img, &k).unwrap();
        assert!(fm.relative_error(&reference).unwrap() < 1e-9);
        assert_eq!(trace.cycles_per_pass, 25);
        assert_eq!(trace.pass_count, 2);
        assert_eq!(trace.cycle_count, 50);
    }

    #[test]
    fn vgg_like_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let img = random_image(&mut rng, 64, 16, 16);
        let k = random_kernels(&mut rng, 64, 64, 3);
        let g = geom(16, 64, 64);
        let (fm, trace) =
            run_layer(&img, &k, &g, &QuantSpec::ideal(), StrategySelector::Auto).unwrap();
        assert_eq!(trace.strategy, Strategy::DualRail);
        let reference = conv_mkmc(&img, &k).unwrap();
        assert!(fm.relative_error(&reference).unwrap() < 1e-9);
        // 1 channel tile, 1 kernel tile, 18 slots on 9 planes.
        assert_eq!(trace.pass_count, 2);
        assert_eq!(trace.counts.analog_readouts, 2 * 256 * 64);
    }

    #[test]
    fn tiled_layer_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let img = random_image(&mut rng, 7, 6, 5);
        let k = random_kernels(&mut rng, 5, 7, 3);
        let g = geom(4, 3, 2);
        let (fm, trace) =
            run_layer(&img, &k, &g, &QuantSpec::ideal(), StrategySelector::Auto).unwrap();
        let reference = conv_mkmc(&img, &k).unwrap();
        assert!(fm.relative_error(&reference).unwrap() < 1e-9);
        // 3 channel tiles, 3 kernel tiles, 18 slots on 3 planes.
        assert_eq!(trace.pass_count, 3 * 3 * 6);
        let readouts: usize = trace
            .per_pass
            .iter()
            .map(|p| p.cycles * p.kernel_tile.len())
            .sum();
        assert_eq!(trace.counts.analog_readouts, readouts as u64);
    }

    #[test]
    fn split_plane_fallback() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let img = random_image(&mut rng, 2, 4, 4);
        let k = random_kernels(&mut rng, 3, 2, 3);
        let g = geom(10, 4, 4);
        let err = run_layer(
            &img,
            &k,
            &g,
            &QuantSpec::ideal(),
            StrategySelector::SplitPlane,
        )
        .unwrap_err();
        assert!(err.is_infeasible());
        let (_, trace) =
            run_layer(&img, &k, &g, &QuantSpec::ideal(), StrategySelector::Auto).unwrap();
        assert_eq!(trace.strategy, Strategy::DualRail);
    }

    #[test]
    fn channel_mismatch_rejected() {
        let img = Image::new(2, 2, 2, vec![0.0; 8]).unwrap();
        let k = KernelSet::new(1, 3, 1, vec![0.0; 3]).unwrap();
        assert!(run_layer(
            &img,
            &k,
            &geom(4, 4, 4),
            &QuantSpec::ideal(),
            StrategySelector::Auto
        )
        .is_err());
    }

    #[test]
    fn conversion_ratio() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let img = random_image(&mut rng, 3, 4, 4);
        let k = random_kernels(&mut rng, 2, 3, 3);
        for layers in (2..=32).step_by(2) {
            let plan = plan_dual_rail(&k, &geom(layers, 4, 4), &QuantSpec::ideal());
            let t = trace_plan(&plan, 4, 4, Feed::Staggered);
            let ratio = t.counts.dac_conversions as f64 / t.equivalent_2d.dac_conversions as f64;
            assert_eq!(ratio, (layers / 2 + 1) as f64 / layers as f64);
            assert_eq!(t.cycle_count, 16 * t.pass_count);
        }
        let (_, t) = run_layer(
            &img,
            &k,
            &geom(8, 4, 4),
            &QuantSpec::ideal(),
            StrategySelector::Auto,
        )
        .unwrap();
        assert_eq!(t.per_pass.len(), t.pass_count);
    }

    #[test]
    fn paper_literal_reduces_to_position_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let img = random_image(&mut rng, 3, 6, 6);
        let k = random_kernels(&mut rng, 2, 3, 3);
        let g = geom(16, 4, 4);
        let lit = run_paper_literal(&img, &k, &g, &QuantSpec::ideal()).unwrap();
        let reduced = conv_mkmc(&img, &k.position_summed()).unwrap();
        assert!(lit.relative_error(&reduced).unwrap() < 1e-12);
        let true_conv = conv_mkmc(&img, &k).unwrap();
        assert!(lit.relative_error(&true_conv).unwrap() > 1e-3);
    }

    #[test]
    fn paper_literal_coincides_for_unit_kernels() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let img = random_image(&mut rng, 3, 4, 5);
        let k = random_kernels(&mut rng, 4, 3, 1);
        let g = geom(6, 4, 4);
        let lit = run_paper_literal(&img, &k, &g, &QuantSpec::ideal()).unwrap();
        let (fm, _) = run_layer(&img, &k, &g, &QuantSpec::ideal(), StrategySelector::Auto).unwrap();
        assert_eq!(lit, fm);
    }

    #[test]
    fn paper_literal_zero_sum_kernels_vanish() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let img = random_image(&mut rng, 2, 5, 5);
        let base = [1.0, -2.0, 1.0, 0.5, 0.0, -0.5, -1.0, 2.0, -1.0];
        let k = KernelSet::from_fn(1, 2, 3, |_, _, r, c| base[r * 3 + c]).unwrap();
        let lit = run_paper_literal(&img, &k, &geom(16, 2, 1), &QuantSpec::ideal()).unwrap();
        assert!(lit.data().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn quantization_error_shrinks_with_bits() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let img = random_image(&mut rng, 4, 6, 6);
        let k = random_kernels(&mut rng, 3, 4, 3);
        let g = geom(10, 4, 4);
        let reference = conv_mkmc(&img, &k).unwrap();
        let mut last = f64::INFINITY;
        for bits in [2, 4, 6, 8] {
            let (fm, _) = run_layer(
                &img,
                &k,
                &g,
                &QuantSpec::uniform(bits).unwrap(),
                StrategySelector::Auto,
            )
            .unwrap();
            let err = fm.max_abs_diff(&reference).unwrap();
            assert!(err <= last, "{bits} bits: {err} > {last}");
            last = err;
        }
    }

    #[test]
    fn plan_survives_serialization() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let img = random_image(&mut rng, 2, 4, 4);
        let k = random_kernels(&mut rng, 2, 2, 3);
        let plan = plan_dual_rail(&k, &geom(6, 4, 4), &QuantSpec::ideal());
        let json = serde_json::to_string(&plan).unwrap();
        let back: MappingPlan = serde_json::from_str(&json).unwrap();
        let a = execute_plan(&img, &plan, &QuantSpec::ideal(), &ReadoutModel::default()).unwrap();
        let b = execute_plan(&img, &back, &QuantSpec::ideal(), &ReadoutModel::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn trace_json_fields() {
        let k = KernelSet::new(1, 1, 1, vec![1.0]).unwrap();
        let plan = plan_dual_rail(&k, &geom(4, 1, 1), &QuantSpec::ideal());
        let t = trace_plan(&plan, 2, 2, Feed::Staggered);
        let v: serde_json::Value = serde_json::to_value(&t).unwrap();
        for key in [
            "cycleCount",
            "passCount",
            "dacConversions",
            "adcConversions",
            "perPass",
            "equivalent2d",
        ] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(serde_json::from_value::<ExecutionTrace>(v).unwrap(), t);
    }
}
