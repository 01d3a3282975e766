// SPDX-License-Identifier: Apache-2.0

//! Compiling a kernel set onto a stack.
//!
//! Each pass programs one channel tile (at most `W` wordlines), one kernel
//! tile (at most `B` bitline columns) and a group of plane slots. A slot is a
//! kernel position placed on its own voltage plane, so within a pass no
//! voltage plane ever carries two offsets. Conductances are nonnegative; the
//! sign of a weight lives in the interconnect that routes each current plane
//! to the `Ip` or `In` bus.
//!
//! * Split-plane: one slot per position holding `|w|`. Negative positions
//!   occupy the lowest planes of each kernel column and route to `In`. This
//!   requires channel-uniform signs and nested negative sets across kernels.
//! * Dual-rail: two slots per position, `max(w, 0)` routed to `Ip` and
//!   `max(-w, 0)` routed to `In`. Always feasible.
//!
//! The carrier layer of voltage plane `v` is layer `2v` (collected by current
//! plane `v`), or `L - 1` for the top plane. When a pass fills every plane
//! and a column's last negative plane would share the top current plane with
//! a non-negative one, that negative moves to layer `2v - 1` instead.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::crossbar::{CellWrite, Route, StackGeometry};
use crate::decomp::Offset;
use crate::error::{Error, Result};
use crate::quant::{QuantSpec, Quantity};
use crate::tensor::{Image, KernelSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    SplitPlane,
    DualRail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelSign {
    AllNeg,
    AllNonNeg,
    Mixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignScan {
    positions: usize,
    pub negative_count: Vec<usize>,
    pub non_negative_count: Vec<usize>,
    classes: Vec<ChannelSign>,
}

impl SignScan {
    pub fn class(&self, kernel: usize, position: usize) -> ChannelSign {
        self.classes[kernel * self.positions + position]
    }

    pub fn kernels(&self) -> usize {
        self.negative_count.len()
    }

    pub fn positions(&self) -> usize {
        self.positions
    }
}

pub fn scan_signs(kernels: &KernelSet) -> SignScan {
    let (n, c, area) = (kernels.kernels(), kernels.channels(), kernels.positions());
    let mut negative_count = vec![0; n];
    let mut classes = Vec::with_capacity(n * area);
    for (j, count) in negative_count.iter_mut().enumerate() {
        for p in 0..area {
            let neg = (0..c)
                .filter(|&i| kernels.at_position(j, i, p) < 0.0)
                .count();
            *count += neg;
            classes.push(match neg {
                0 => ChannelSign::AllNonNeg,
                k if k == c => ChannelSign::AllNeg,
                _ => ChannelSign::Mixed,
            });
        }
    }
    let non_negative_count = negative_count.iter().map(|neg| c * area - neg).collect();
    SignScan {
        positions: area,
        negative_count,
        non_negative_count,
        classes,
    }
}

/// Which part of a position's weights a slot carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SlotPart {
    /// `|w|`, sign taken from the column's routing.
    Magnitude,
    /// `max(w, 0)`, routed to `Ip`.
    Positive,
    /// `max(-w, 0)`, routed to `In`.
    Negative,
}

impl SlotPart {
    fn value(self, w: f64) -> f64 {
        match self {
            SlotPart::Magnitude => w.abs(),
            SlotPart::Positive => w.max(0.0),
            SlotPart::Negative => (-w).max(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct Slot {
    position: usize,
    part: SlotPart,
}

/// One kernel position placed on a voltage plane.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PlaneAssignment {
    pub voltage_plane: usize,
    pub position: usize,
    pub offset: Offset,
    pub part: SlotPart,
    /// Carrier layer for each bitline column of the kernel tile.
    pub carriers: Vec<usize>,
}

/// Per (bitline column, current plane) interconnect routing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct InterconnectConfig {
    pub current_planes: usize,
    pub columns: usize,
    routes: Vec<Route>,
}

impl InterconnectConfig {
    pub fn new(columns: usize, current_planes: usize, fill: Route) -> Self {
        InterconnectConfig {
            current_planes,
            columns,
            routes: vec![fill; columns * current_planes],
        }
    }

    pub fn get(&self, column: usize, plane: usize) -> Route {
        self.routes[column * self.current_planes + plane]
    }

    pub fn set(&mut self, column: usize, plane: usize, route: Route) {
        self.routes[column * self.current_planes + plane] = route;
    }

    pub fn column(&self, column: usize) -> &[Route] {
        &self.routes[column * self.current_planes..(column + 1) * self.current_planes]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Pass {
    pub index: usize,
    pub channel_tile: Range<usize>,
    pub kernel_tile: Range<usize>,
    pub assignments: Vec<PlaneAssignment>,
    /// Per kernel column, the first voltage plane whose current plane routes
    /// to `Ip` (split-plane only). Equals the plane count when a column is
    /// entirely negative.
    pub separation_planes: Option<Vec<usize>>,
    pub routing: InterconnectConfig,
    pub dummy_layers: Vec<usize>,
    /// Quantized weight magnitude that maps to conductance 1.0. Always a
    /// power of two so conductances rescale exactly.
    pub scale: f64,
    pub cell_writes: Vec<CellWrite>,
}

impl Pass {
    pub fn planes_used(&self) -> usize {
        self.assignments.len()
    }

    pub fn assignment_for_plane(&self, plane: usize) -> Option<&PlaneAssignment> {
        self.assignments.iter().find(|a| a.voltage_plane == plane)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelShape {
    pub n: usize,
    pub c: usize,
    pub l: usize,
}

impl KernelShape {
    pub fn of(kernels: &KernelSet) -> Self {
        KernelShape {
            n: kernels.kernels(),
            c: kernels.channels(),
            l: kernels.side(),
        }
    }
}

/// Everything needed to program and run a layer without re-planning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MappingPlan {
    pub strategy: Strategy,
    pub geometry: StackGeometry,
    pub kernel_shape: KernelShape,
    pub passes: Vec<Pass>,
}

impl MappingPlan {
    /// Rebuild signed weights from the programmed cells: `+G` on `Ip`-routed
    /// planes, `-G` on `In`-routed planes, times the pass scale.
    pub fn signed_readback(&self) -> Result<KernelSet> {
        let KernelShape { n, c, l } = self.kernel_shape;
        let g = &self.geometry;
        let mut data = vec![0.0; n * c * l * l];
        for pass in &self.passes {
            for w in &pass.cell_writes {
                let plane = g.driving_plane(w.layer);
                let assignment = pass.assignment_for_plane(plane).ok_or_else(|| {
                    Error::invalid(format!(
                        "write to layer {} on unassigned plane {plane}",
                        w.layer
                    ))
                })?;
                let sign = match pass.routing.get(w.bitline, g.collecting_plane(w.layer)) {
                    Route::ToIp => 1.0,
                    Route::ToIn => -1.0,
                    Route::Off if w.conductance == 0.0 => 0.0,
                    Route::Off => return Err(Error::invalid("nonzero cell on an unrouted plane")),
                };
                let j = pass.kernel_tile.start + w.bitline;
                let i = pass.channel_tile.start + w.wordline;
                data[(j * c + i) * l * l + assignment.position] +=
                    sign * w.conductance * pass.scale;
            }
        }
        KernelSet::new(n, c, l, data)
    }
}

/// Slot groups per pass for a stack.
pub fn plane_budget(geometry: &StackGeometry) -> usize {
    // Both layers of a 2-layer stack share the only current plane, so a pass
    // cannot mix signs and gains nothing from a second voltage plane.
    if geometry.layers() == 2 {
        1
    } else {
        geometry.voltage_planes()
    }
}

/// Pass decomposition of a layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TileSchedule {
    pub channel_tiles: Vec<Range<usize>>,
    pub kernel_tiles: Vec<Range<usize>>,
    /// Ranges over the strategy's slot sequence.
    pub slot_groups: Vec<Range<usize>>,
    pub slots: usize,
    pub plane_budget: usize,
    pub cycles_per_pass: usize,
}

impl TileSchedule {
    pub fn total_passes(&self) -> usize {
        self.channel_tiles.len() * self.kernel_tiles.len() * self.slot_groups.len()
    }
}

fn chunks(total: usize, width: usize) -> Vec<Range<usize>> {
    (0..total.div_ceil(width))
        .map(|k| k * width..((k + 1) * width).min(total))
        .collect()
}

/// Split `total` into `ceil(total / budget)` contiguous groups whose sizes
/// differ by at most one, larger groups first.
fn balanced_groups(total: usize, budget: usize) -> Vec<Range<usize>> {
    let groups = total.div_ceil(budget);
    if groups == 0 {
        return Vec::new();
    }
    let (base, extra) = (total / groups, total % groups);
    let mut start = 0;
    (0..groups)
        .map(|k| {
            let len = base + usize::from(k < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

fn slot_count(kernels: &KernelSet, strategy: Strategy) -> usize {
    match strategy {
        Strategy::SplitPlane => kernels.positions(),
        Strategy::DualRail => 2 * kernels.positions(),
    }
}

fn tile_kernels(
    kernels: &KernelSet,
    geometry: &StackGeometry,
    strategy: Strategy,
    cycles_per_pass: usize,
) -> TileSchedule {
    let slots = slot_count(kernels, strategy);
    let budget = plane_budget(geometry);
    TileSchedule {
        channel_tiles: chunks(kernels.channels(), geometry.wordlines()),
        kernel_tiles: chunks(kernels.kernels(), geometry.bitlines()),
        slot_groups: balanced_groups(slots, budget),
        slots,
        plane_budget: budget,
        cycles_per_pass,
    }
}

pub fn tile(
    kernels: &KernelSet,
    image: &Image,
    geometry: &StackGeometry,
    strategy: Strategy,
) -> TileSchedule {
    tile_kernels(kernels, geometry, strategy, image.height() * image.width())
}

/// Order positions so every kernel's negative positions precede its
/// non-negative ones.
fn split_plane_order(scan: &SignScan) -> Result<Vec<usize>> {
    let (n, area) = (scan.kernels(), scan.positions());
    for j in 0..n {
        for p in 0..area {
            if scan.class(j, p) == ChannelSign::Mixed {
                return Err(Error::MixedSigns {
                    kernel: j,
                    position: p,
                });
            }
        }
    }
    let negative = |j: usize, p: usize| scan.class(j, p) == ChannelSign::AllNeg;
    for a in 0..n {
        for b in a + 1..n {
            let a_not_b = (0..area).any(|p| negative(a, p) && !negative(b, p));
            let b_not_a = (0..area).any(|p| negative(b, p) && !negative(a, p));
            if a_not_b && b_not_a {
                return Err(Error::CrossingSigns {
                    first: a,
                    second: b,
                });
            }
        }
    }
    // With nested negative sets, a position negative for more kernels is
    // negative for every kernel that a less-negative position is.
    let mut order: Vec<usize> = (0..area).collect();
    order.sort_by_key(|&p| std::cmp::Reverse((0..n).filter(|&j| negative(j, p)).count()));
    Ok(order)
}

/// Carrier layers for `used` consecutive planes whose first `negatives` carry
/// `In` weights, plus the separation plane.
fn carrier_layers(geometry: &StackGeometry, negatives: usize, used: usize) -> (Vec<usize>, usize) {
    let half = geometry.layers() / 2;
    let mut layers: Vec<usize> = (0..used)
        .map(|v| if v < half { 2 * v } else { 2 * v - 1 })
        .collect();
    if used == half + 1 && negatives == half && half >= 2 {
        layers[half - 1] = 2 * half - 3;
        return (layers, half - 1);
    }
    (layers, negatives)
}

fn quantized(kernels: &KernelSet, quant: &QuantSpec) -> KernelSet {
    kernels.map(|w| quant.quantize(w, Quantity::Weight))
}

struct PassLayout {
    channel_tile: Range<usize>,
    kernel_tile: Range<usize>,
    slots: Vec<Slot>,
    /// Negative flag per (column, slot).
    negative: Vec<Vec<bool>>,
}

fn build_pass(
    index: usize,
    layout: PassLayout,
    geometry: &StackGeometry,
    kernels: &KernelSet,
    strategy: Strategy,
) -> Pass {
    let columns = layout.kernel_tile.len();
    let used = layout.slots.len();
    let mut carriers = vec![Vec::with_capacity(columns); used];
    let mut separation = Vec::with_capacity(columns);
    let mut layer_used = vec![false; geometry.layers()];
    for col in 0..columns {
        let negatives = layout.negative[col].iter().take_while(|&&neg| neg).count();
        debug_assert!(layout.negative[col][negatives..].iter().all(|&neg| !neg));
        let (layers, sep) = carrier_layers(geometry, negatives, used);
        for (v, &layer) in layers.iter().enumerate() {
            carriers[v].push(layer);
            layer_used[layer] = true;
        }
        separation.push(sep);
    }

    let mut routing = InterconnectConfig::new(columns, geometry.current_planes(), Route::Off);
    for (col, &sep) in separation.iter().enumerate() {
        for plane in 0..geometry.current_planes() {
            if layer_used[2 * plane] || layer_used[2 * plane + 1] {
                routing.set(
                    col,
                    plane,
                    if plane < sep {
                        Route::ToIn
                    } else {
                        Route::ToIp
                    },
                );
            }
        }
    }

    let assignments = layout
        .slots
        .iter()
        .zip(carriers)
        .enumerate()
        .map(|(v, (slot, carriers))| PlaneAssignment {
            voltage_plane: v,
            position: slot.position,
            offset: Offset::of_position(kernels.side(), slot.position),
            part: slot.part,
            carriers,
        })
        .collect();

    let mut pass = Pass {
        index,
        channel_tile: layout.channel_tile,
        kernel_tile: layout.kernel_tile,
        assignments,
        separation_planes: (strategy == Strategy::SplitPlane).then_some(separation),
        routing,
        dummy_layers: (0..geometry.layers()).filter(|&l| !layer_used[l]).collect(),
        scale: 1.0,
        cell_writes: Vec::new(),
    };
    let values = pass_values(&pass, kernels);
    let max = values.iter().map(|w| w.conductance).fold(0.0, f64::max);
    pass.scale = power_of_two_at_least(max);
    pass.cell_writes = values
        .into_iter()
        .map(|w| CellWrite {
            conductance: w.conductance / pass.scale,
            ..w
        })
        .collect();
    pass
}

fn power_of_two_at_least(x: f64) -> f64 {
    if x.is_nan() || x <= 0.0 {
        return 1.0;
    }
    let mut s = x.log2().ceil().exp2();
    while s < x {
        s *= 2.0;
    }
    while s / 2.0 >= x {
        s /= 2.0;
    }
    s
}

/// Unscaled weight parts at their cell locations; `conductance` holds the
/// quantized magnitude before the pass scale is applied.
fn pass_values(pass: &Pass, qkernels: &KernelSet) -> Vec<CellWrite> {
    let mut out = Vec::new();
    for a in &pass.assignments {
        for (col, &layer) in a.carriers.iter().enumerate() {
            let j = pass.kernel_tile.start + col;
            for (wl, i) in pass.channel_tile.clone().enumerate() {
                out.push(CellWrite {
                    layer,
                    wordline: wl,
                    bitline: col,
                    conductance: a.part.value(qkernels.at_position(j, i, a.position)),
                });
            }
        }
    }
    out
}

fn assemble(
    strategy: Strategy,
    kernels: &KernelSet,
    geometry: &StackGeometry,
    slots: Vec<Slot>,
    is_negative: impl Fn(usize, Slot) -> bool,
    qkernels: &KernelSet,
) -> MappingPlan {
    let schedule = tile_kernels(kernels, geometry, strategy, 0);
    debug_assert_eq!(schedule.slots, slots.len());
    let mut passes = Vec::with_capacity(schedule.total_passes());
    for kt in &schedule.kernel_tiles {
        for ct in &schedule.channel_tiles {
            for group in &schedule.slot_groups {
                let group_slots = slots[group.clone()].to_vec();
                let negative = kt
                    .clone()
                    .map(|j| group_slots.iter().map(|&s| is_negative(j, s)).collect())
                    .collect();
                let layout = PassLayout {
                    channel_tile: ct.clone(),
                    kernel_tile: kt.clone(),
                    slots: group_slots,
                    negative,
                };
                passes.push(build_pass(
                    passes.len(),
                    layout,
                    geometry,
                    qkernels,
                    strategy,
                ));
            }
        }
    }
    MappingPlan {
        strategy,
        geometry: *geometry,
        kernel_shape: KernelShape::of(kernels),
        passes,
    }
}

pub fn plan_split_plane(
    kernels: &KernelSet,
    geometry: &StackGeometry,
    quant: &QuantSpec,
) -> Result<MappingPlan> {
    let q = quantized(kernels, quant);
    let scan = scan_signs(&q);
    let order = split_plane_order(&scan)?;
    let slots = order
        .into_iter()
        .map(|position| Slot {
            position,
            part: SlotPart::Magnitude,
        })
        .collect();
    let negative = |j: usize, s: Slot| scan.class(j, s.position) == ChannelSign::AllNeg;
    Ok(assemble(
        Strategy::SplitPlane,
        kernels,
        geometry,
        slots,
        negative,
        &q,
    ))
}

pub fn plan_dual_rail(
    kernels: &KernelSet,
    geometry: &StackGeometry,
    quant: &QuantSpec,
) -> MappingPlan {
    let q = quantized(kernels, quant);
    let area = kernels.positions();
    let slots = (0..area)
        .map(|position| Slot {
            position,
            part: SlotPart::Negative,
        })
        .chain((0..area).map(|position| Slot {
            position,
            part: SlotPart::Positive,
        }))
        .collect();
    let negative = |_: usize, s: Slot| s.part == SlotPart::Negative;
    assemble(Strategy::DualRail, kernels, geometry, slots, negative, &q)
}

pub fn plan(
    kernels: &KernelSet,
    geometry: &StackGeometry,
    quant: &QuantSpec,
    strategy: Strategy,
) -> Result<MappingPlan> {
    match strategy {
        Strategy::SplitPlane => plan_split_plane(kernels, geometry, quant),
        Strategy::DualRail => Ok(plan_dual_rail(kernels, geometry, quant)),
    }
}

/// Cell writes of every pass, recomputed from the plan's structure.
pub fn emit_cell_writes(
    plan: &MappingPlan,
    kernels: &KernelSet,
    quant: &QuantSpec,
) -> Result<Vec<Vec<CellWrite>>> {
    if plan.kernel_shape != KernelShape::of(kernels) {
        return Err(Error::invalid(format!(
            "plan is for kernels {:?}, got {:?}",
            plan.kernel_shape,
            KernelShape::of(kernels)
        )));
    }
    let q = quantized(kernels, quant);
    Ok(plan
        .passes
        .iter()
        .map(|pass| {
            pass_values(pass, &q)
                .into_iter()
                .map(|w| CellWrite {
                    conductance: w.conductance / pass.scale,
                    ..w
                })
                .collect()
        })
        .collect())
}

/// Structural invariants every plan must satisfy.
pub fn check_plan(plan: &MappingPlan) -> Result<()> {
    let g = &plan.geometry;
    for pass in &plan.passes {
        let fail = |msg: String| Err(Error::invalid(format!("pass {}: {msg}", pass.index)));
        let mut planes: Vec<usize> = pass.assignments.iter().map(|a| a.voltage_plane).collect();
        planes.sort_unstable();
        planes.dedup();
        if planes.len() != pass.assignments.len() {
            return fail("a voltage plane carries two offsets".into());
        }
        if pass.assignments.len() > plane_budget(g) {
            return fail("more slots than the plane budget".into());
        }
        for w in &pass.cell_writes {
            if w.conductance.is_nan() || w.conductance < 0.0 {
                return fail(format!("negative conductance {}", w.conductance));
            }
            if pass.dummy_layers.contains(&w.layer) && w.conductance != 0.0 {
                return fail(format!("nonzero write to dummy layer {}", w.layer));
            }
        }
        for a in &pass.assignments {
            for (col, &layer) in a.carriers.iter().enumerate() {
                if g.driving_plane(layer) != a.voltage_plane {
                    return fail(format!(
                        "layer {layer} is not driven by plane {}",
                        a.voltage_plane
                    ));
                }
                let route = pass.routing.get(col, g.collecting_plane(layer));
                let ok = match a.part {
                    SlotPart::Positive => route == Route::ToIp,
                    SlotPart::Negative => route == Route::ToIn,
                    SlotPart::Magnitude => route != Route::Off,
                };
                if !ok {
                    return fail(format!(
                        "column {col} plane {} routed {route:?} for {:?}",
                        a.voltage_plane, a.part
                    ));
                }
            }
        }
        if let Some(seps) = &pass.separation_planes {
            for (col, &sep) in seps.iter().enumerate() {
                for plane in 0..g.current_planes() {
                    let route = pass.routing.get(col, plane);
                    if (route == Route::ToIn && plane >= sep)
                        || (route == Route::ToIp && plane < sep)
                    {
                        return fail(format!(
                            "column {col} plane {plane} routed {route:?} across separation {sep}"
                        ));
                    }
                }
            }
        }
    }
    Ok(())
}
