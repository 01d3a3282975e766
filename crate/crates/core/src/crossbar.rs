// SPDX-License-Identifier: Apache-2.0

//! Horizontally stacked 3D crossbar.
//!
//! Planes alternate `V0, I0, V1, I1, ..., V(L/2)`. Memristor layer `k` sits
//! between entry `k` and entry `k + 1` of that sequence, so current plane `j`
//! collects layers `2j` (driven by voltage plane `j`) and `2j + 1` (driven by
//! voltage plane `j + 1`). Voltages and conductances are normalized,
//! dimensionless reals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Voltage and current plane counts of an `L`-layer stack.
pub fn plane_counts(layers: usize) -> Result<(usize, usize)> {
    if layers < 2 || !layers.is_multiple_of(2) {
        return Err(Error::InvalidGeometry(format!(
            "layer count must be even and at least 2, got {layers}"
        )));
    }
    Ok((layers / 2 + 1, layers / 2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawGeometry")]
pub struct StackGeometry {
    layers: usize,
    wordlines: usize,
    bitlines: usize,
}

#[derive(Deserialize)]
struct RawGeometry {
    layers: usize,
    wordlines: usize,
    bitlines: usize,
}

impl TryFrom<RawGeometry> for StackGeometry {
    type Error = Error;
    fn try_from(r: RawGeometry) -> Result<Self> {
        StackGeometry::new(r.layers, r.wordlines, r.bitlines)
    }
}

impl StackGeometry {
    pub fn new(layers: usize, wordlines: usize, bitlines: usize) -> Result<Self> {
        plane_counts(layers)?;
        if wordlines == 0 || bitlines == 0 {
            return Err(Error::InvalidGeometry(format!(
                "wordlines and bitlines per plane must be positive, got {wordlines} and {bitlines}"
            )));
        }
        Ok(StackGeometry {
            layers,
            wordlines,
            bitlines,
        })
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn wordlines(&self) -> usize {
        self.wordlines
    }

    pub fn bitlines(&self) -> usize {
        self.bitlines
    }

    pub fn voltage_planes(&self) -> usize {
        self.layers / 2 + 1
    }

    pub fn current_planes(&self) -> usize {
        self.layers / 2
    }

    /// `(layer above, layer below)` of current plane `plane`.
    pub fn adjacent_layers(&self, plane: usize) -> Result<(usize, usize)> {
        if plane >= self.current_planes() {
            return Err(Error::invalid(format!(
                "current plane {plane} out of range for {} planes",
                self.current_planes()
            )));
        }
        Ok((2 * plane, 2 * plane + 1))
    }

    /// Voltage plane that drives `layer`.
    pub fn driving_plane(&self, layer: usize) -> usize {
        layer.div_ceil(2)
    }

    /// Current plane that collects `layer`.
    pub fn collecting_plane(&self, layer: usize) -> usize {
        layer / 2
    }

    /// Layers touching voltage plane `v`: the one shared with current plane
    /// `v - 1` and the one shared with current plane `v`, where they exist.
    pub fn layers_of_voltage_plane(&self, v: usize) -> (Option<usize>, Option<usize>) {
        let lower = (v >= 1 && v <= self.layers / 2).then(|| 2 * v - 1);
        let upper = (v < self.layers / 2).then_some(2 * v);
        (lower, upper)
    }

    fn cell_index(&self, layer: usize, wordline: usize, bitline: usize) -> usize {
        (layer * self.wordlines + wordline) * self.bitlines + bitline
    }

    pub fn cell_count(&self) -> usize {
        self.layers * self.wordlines * self.bitlines
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellWrite {
    pub layer: usize,
    pub wordline: usize,
    pub bitline: usize,
    pub conductance: f64,
}

/// Conductance of every memristor in a stack.
#[derive(Debug, Clone, PartialEq)]
pub struct CellArray {
    geometry: StackGeometry,
    conductance: Vec<f64>,
    dummy: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
struct CellImage {
    #[serde(rename = "L")]
    layers: usize,
    #[serde(rename = "W")]
    wordlines: usize,
    #[serde(rename = "B")]
    bitlines: usize,
    cells: Vec<f64>,
}

impl Serialize for CellArray {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        CellImage {
            layers: self.geometry.layers,
            wordlines: self.geometry.wordlines,
            bitlines: self.geometry.bitlines,
            cells: self.conductance.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for CellArray {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let img = CellImage::deserialize(d)?;
        let geometry = StackGeometry::new(img.layers, img.wordlines, img.bitlines)
            .map_err(D::Error::custom)?;
        if img.cells.len() != geometry.cell_count() {
            return Err(D::Error::custom(format!(
                "cells has {} entries, expected L*W*B = {}",
                img.cells.len(),
                geometry.cell_count()
            )));
        }
        if let Some(bad) = img.cells.iter().find(|g| !(**g >= 0.0 && g.is_finite())) {
            return Err(D::Error::custom(format!("unphysical conductance {bad}")));
        }
        Ok(CellArray {
            geometry,
            conductance: img.cells,
            dummy: vec![false; geometry.layers],
        })
    }
}

impl CellArray {
    pub fn new(geometry: StackGeometry) -> Self {
        CellArray {
            geometry,
            conductance: vec![0.0; geometry.cell_count()],
            dummy: vec![false; geometry.layers],
        }
    }

    /// Fresh array whose `dummy` layers are pinned to zero conductance.
    pub fn with_dummy_layers(
        geometry: StackGeometry,
        dummy: impl IntoIterator<Item = usize>,
    ) -> Result<Self> {
        let mut cells = CellArray::new(geometry);
        for layer in dummy {
            if layer >= geometry.layers {
                return Err(Error::invalid(format!("dummy layer {layer} out of range")));
            }
            cells.dummy[layer] = true;
        }
        Ok(cells)
    }

    pub fn geometry(&self) -> &StackGeometry {
        &self.geometry
    }

    pub fn is_dummy(&self, layer: usize) -> bool {
        self.dummy[layer]
    }

    pub fn get(&self, layer: usize, wordline: usize, bitline: usize) -> f64 {
        self.conductance[self.geometry.cell_index(layer, wordline, bitline)]
    }

    pub fn conductances(&self) -> &[f64] {
        &self.conductance
    }

    /// Apply `writes` atomically: nothing changes unless every write is valid.
    pub fn program_cells(&mut self, writes: &[CellWrite]) -> Result<()> {
        let g = self.geometry;
        for w in writes {
            if w.layer >= g.layers || w.wordline >= g.wordlines || w.bitline >= g.bitlines {
                return Err(Error::invalid(format!(
                    "cell ({}, {}, {}) outside {}x{}x{} stack",
                    w.layer, w.wordline, w.bitline, g.layers, g.wordlines, g.bitlines
                )));
            }
            if !(w.conductance >= 0.0 && w.conductance.is_finite()) {
                return Err(Error::Physicality {
                    layer: w.layer,
                    wordline: w.wordline,
                    bitline: w.bitline,
                    value: w.conductance,
                });
            }
            if self.dummy[w.layer] && w.conductance != 0.0 {
                return Err(Error::DummyViolation {
                    layer: w.layer,
                    value: w.conductance,
                });
            }
        }
        for w in writes {
            let idx = g.cell_index(w.layer, w.wordline, w.bitline);
            self.conductance[idx] = w.conductance;
        }
        Ok(())
    }
}

/// Per-wordline voltage on every voltage plane.
#[derive(Debug, Clone, PartialEq)]
pub struct VoltageAssignment {
    planes: usize,
    wordlines: usize,
    volts: Vec<f64>,
}

impl VoltageAssignment {
    pub fn zeros(geometry: &StackGeometry) -> Self {
        VoltageAssignment {
            planes: geometry.voltage_planes(),
            wordlines: geometry.wordlines(),
            volts: vec![0.0; geometry.voltage_planes() * geometry.wordlines()],
        }
    }

    pub fn get(&self, plane: usize, wordline: usize) -> f64 {
        self.volts[plane * self.wordlines + wordline]
    }

    pub fn plane(&self, plane: usize) -> &[f64] {
        &self.volts[plane * self.wordlines..(plane + 1) * self.wordlines]
    }

    pub fn set(&mut self, plane: usize, wordline: usize, volts: f64) -> Result<()> {
        if plane >= self.planes || wordline >= self.wordlines {
            return Err(Error::invalid(format!(
                "wordline ({plane}, {wordline}) out of range"
            )));
        }
        if !volts.is_finite() {
            return Err(Error::invalid(format!("non-finite voltage {volts}")));
        }
        self.volts[plane * self.wordlines + wordline] = volts;
        Ok(())
    }

    /// Drive the first `values.len()` wordlines of `plane`; the rest go to 0.
    pub fn set_plane(&mut self, plane: usize, values: &[f64]) -> Result<()> {
        if values.len() > self.wordlines {
            return Err(Error::invalid(format!(
                "{} values for {} wordlines",
                values.len(),
                self.wordlines
            )));
        }
        for wl in 0..self.wordlines {
            self.set(plane, wl, values.get(wl).copied().unwrap_or(0.0))?;
        }
        Ok(())
    }

    pub fn planes(&self) -> usize {
        self.planes
    }
}

fn layer_column_current(cells: &CellArray, volts: &[f64], layer: usize, bitline: usize) -> f64 {
    volts
        .iter()
        .enumerate()
        .map(|(wl, v)| v * cells.get(layer, wl, bitline))
        .sum()
}

/// Current on `bitline` of current plane `plane`: the Kirchhoff sum of the
/// two adjacent layers, `V_above . G_above + V_below . G_below`.
pub fn currentplane_current(
    cells: &CellArray,
    volts: &VoltageAssignment,
    plane: usize,
    bitline: usize,
) -> Result<f64> {
    let g = cells.geometry();
    if volts.planes != g.voltage_planes() || volts.wordlines != g.wordlines() {
        return Err(Error::invalid(
            "voltage assignment does not match stack geometry",
        ));
    }
    if bitline >= g.bitlines() {
        return Err(Error::invalid(format!(
            "bitline {bitline} out of range for {}",
            g.bitlines()
        )));
    }
    let (above, below) = g.adjacent_layers(plane)?;
    Ok(
        layer_column_current(cells, volts.plane(plane), above, bitline)
            + layer_column_current(cells, volts.plane(plane + 1), below, bitline),
    )
}

/// Sum of `V * G` over every cell, each cell seeing the voltage of the plane
/// that drives its layer. Independent of plane bookkeeping.
pub fn total_cell_current(cells: &CellArray, volts: &VoltageAssignment) -> f64 {
    let g = cells.geometry();
    let mut total = 0.0;
    for layer in 0..g.layers() {
        let v = g.driving_plane(layer);
        for wl in 0..g.wordlines() {
            let volt = volts.get(v, wl);
            for bl in 0..g.bitlines() {
                total += volt * cells.get(layer, wl, bl);
            }
        }
    }
    total
}

/// Interconnect destination of one current plane's bitline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    ToIp,
    ToIn,
    Off,
}

/// Sum the per-plane currents of one bitline column onto the `Ip` and `In`
/// buses.
pub fn accumulate_bus(currents: &[f64], routing: &[Route]) -> Result<(f64, f64)> {
    if currents.len() != routing.len() {
        return Err(Error::invalid(format!(
            "{} plane currents but {} routes",
            currents.len(),
            routing.len()
        )));
    }
    let mut ip = 0.0;
    let mut in_ = 0.0;
    for (i, r) in currents.iter().zip(routing) {
        match r {
            Route::ToIp => ip += i,
            Route::ToIn => in_ += i,
            Route::Off => {}
        }
    }
    Ok((ip, in_))
}

/// Inverting op-amp stage that outputs `I2 = Ip - In`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReadoutModel {
    pub feedback_resistance: f64,
}

impl Default for ReadoutModel {
    fn default() -> Self {
        ReadoutModel {
            feedback_resistance: 1.0,
        }
    }
}

/// Internal node values of the readout stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReadoutNodes {
    pub i0: f64,
    pub v0: f64,
    pub v1: f64,
    pub i1: f64,
    pub i2: f64,
}

impl ReadoutModel {
    /// Walk the circuit: no current enters the inverting input so `I0 = In`,
    /// `V0 = In R0`, `V1 = -V0`, `I1 = V1 / R0`, and `I2 = Ip + I1`.
    pub fn nodes(&self, ip: f64, in_: f64) -> ReadoutNodes {
        let r0 = self.feedback_resistance;
        let i0 = in_;
        let v0 = i0 * r0;
        let v1 = -v0;
        let i1 = v1 / r0;
        ReadoutNodes {
            i0,
            v0,
            v1,
            i1,
            i2: ip + i1,
        }
    }
}

/// Ideal differential readout. The result does not depend on `R0`.
pub fn opamp_readout(ip: f64, in_: f64, _model: &ReadoutModel) -> f64 {
    ip - in_
}

/// 2D crossbar baseline: `out[b] = sum_w input[w] * weights[w][b]`.
pub fn vmm_2d(weights: &[Vec<f64>], input: &[f64]) -> Result<Vec<f64>> {
    if weights.len() != input.len() {
        return Err(Error::invalid(format!(
            "{} weight rows for {} inputs",
            weights.len(),
            input.len()
        )));
    }
    let cols = weights.first().map_or(0, Vec::len);
    if weights.iter().any(|row| row.len() != cols) {
        return Err(Error::invalid("ragged weight matrix"));
    }
    if weights.iter().flatten().any(|g| g.is_nan() || *g < 0.0) {
        return Err(Error::invalid(
            "crossbar weights must be nonnegative conductances",
        ));
    }
    Ok((0..cols)
        .map(|b| input.iter().zip(weights).map(|(x, row)| x * row[b]).sum())
        .collect())
}
