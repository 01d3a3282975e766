// SPDX-License-Identifier: Apache-2.0

//! Convolution as a superposition of shifted 1x1 convolutions.
//!
//! Each of the `l * l` kernel positions contributes an `n x c` block. For an
//! output pixel, the block for offset `(dr, dc)` multiplies the channel column
//! of the image pixel at `(r + dr, c + dc)`, and the `l * l` products are
//! accumulated into the `n` output values of that pixel. This is the digital
//! reference for the crossbar mapping, where every block sits on its own
//! voltage plane.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{anchor, FeatureMap, Image, KernelSet};

/// Signed spatial offset of a kernel position relative to the anchor pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Offset {
    pub dr: i32,
    pub dc: i32,
}

impl Offset {
    pub const ZERO: Offset = Offset { dr: 0, dc: 0 };

    pub fn new(dr: i32, dc: i32) -> Self {
        Offset { dr, dc }
    }

    /// Offset of row-major position `p` in an `l x l` kernel.
    pub fn of_position(side: usize, p: usize) -> Self {
        let a = anchor(side) as i32;
        Offset {
            dr: (p / side) as i32 - a,
            dc: (p % side) as i32 - a,
        }
    }

    /// Inverse of [`Offset::of_position`]; `None` outside the kernel window.
    pub fn position(&self, side: usize) -> Option<usize> {
        let a = anchor(side) as i32;
        let (kr, kc) = (self.dr + a, self.dc + a);
        let s = side as i32;
        ((0..s).contains(&kr) && (0..s).contains(&kc)).then(|| (kr * s + kc) as usize)
    }
}

/// An ordering of the `l * l` kernel positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PositionOrder {
    side: usize,
    positions: Vec<usize>,
}

impl PositionOrder {
    /// Row-major from the most negative offset to the most positive.
    pub fn canonical(side: usize) -> Self {
        PositionOrder {
            side,
            positions: (0..side * side).collect(),
        }
    }

    /// `positions` must be a permutation of `0..side*side`.
    pub fn from_positions(side: usize, positions: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; side * side];
        for &p in &positions {
            if p >= seen.len() || std::mem::replace(&mut seen[p], true) {
                return Err(Error::invalid(format!(
                    "position order is not a permutation of 0..{}",
                    side * side
                )));
            }
        }
        if positions.len() != side * side {
            return Err(Error::invalid(format!(
                "position order has {} entries, expected {}",
                positions.len(),
                side * side
            )));
        }
        Ok(PositionOrder { side, positions })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn offsets(&self) -> impl Iterator<Item = Offset> + '_ {
        self.positions
            .iter()
            .map(|&p| Offset::of_position(self.side, p))
    }
}

/// `n x c` weight block of one kernel position; row `j` holds the channel
/// weights of kernel `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub offset: Offset,
    pub position: usize,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Block {
    pub fn get(&self, j: usize, i: usize) -> f64 {
        self.data[j * self.cols + i]
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.data[j * self.cols..(j + 1) * self.cols]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    side: usize,
    blocks: Vec<Block>,
}

impl KernelMatrix {
    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// Multiplications needed per output pixel, `l^2 * n * c`.
    pub fn multiplies_per_pixel(&self) -> usize {
        self.blocks.iter().map(|b| b.rows * b.cols).sum()
    }

    /// Re-roll the blocks into a kernel set.
    pub fn to_kernel_set(&self) -> KernelSet {
        let (n, c) = self.blocks[0].shape();
        let area = self.side * self.side;
        let mut data = vec![0.0; n * c * area];
        for b in &self.blocks {
            for j in 0..n {
                for i in 0..c {
                    data[(j * c + i) * area + b.position] = b.get(j, i);
                }
            }
        }
        KernelSet::new(n, c, self.side, data).expect("blocks cover every position")
    }
}

pub fn build_kernel_matrix(kernels: &KernelSet, order: &PositionOrder) -> Result<KernelMatrix> {
    if order.side() != kernels.side() {
        return Err(Error::invalid(format!(
            "position order is for side {}, kernels have side {}",
            order.side(),
            kernels.side()
        )));
    }
    let (n, c) = (kernels.kernels(), kernels.channels());
    let blocks = order
        .positions()
        .iter()
        .map(|&p| {
            let mut data = Vec::with_capacity(n * c);
            for j in 0..n {
                for i in 0..c {
                    data.push(kernels.at_position(j, i, p));
                }
            }
            Block {
                offset: Offset::of_position(kernels.side(), p),
                position: p,
                rows: n,
                cols: c,
                data,
            }
        })
        .collect();
    Ok(KernelMatrix {
        side: kernels.side(),
        blocks,
    })
}

/// Channel values of one (shifted) image pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelColumn {
    /// Output location this column serves.
    pub location: (usize, usize),
    pub values: Vec<f64>,
    /// Raster index of `location`.
    pub cycle_index: usize,
}

impl PixelColumn {
    pub fn zeros(location: (usize, usize), channels: usize, cycle_index: usize) -> Self {
        PixelColumn {
            location,
            values: vec![0.0; channels],
            cycle_index,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

/// Channel column at `location + offset`, all zeros when the shifted pixel
/// falls in the padding.
pub fn pixel_column(
    image: &Image,
    location: (usize, usize),
    offset: Offset,
) -> Result<PixelColumn> {
    pixel_column_range(image, location, offset, 0..image.channels())
}

pub(crate) fn pixel_column_range(
    image: &Image,
    location: (usize, usize),
    offset: Offset,
    channels: std::ops::Range<usize>,
) -> Result<PixelColumn> {
    let (r, c) = location;
    if r >= image.height() || c >= image.width() {
        return Err(Error::invalid(format!(
            "location ({r}, {c}) outside {}x{} image",
            image.height(),
            image.width()
        )));
    }
    let pr = r as isize + offset.dr as isize;
    let pc = c as isize + offset.dc as isize;
    Ok(PixelColumn {
        location,
        values: channels.map(|ch| image.get_padded(ch, pr, pc)).collect(),
        cycle_index: r * image.width() + c,
    })
}

pub fn decomp_conv(image: &Image, kernels: &KernelSet) -> Result<FeatureMap> {
    decomp_conv_with_order(image, kernels, &PositionOrder::canonical(kernels.side()))
}

pub fn decomp_conv_with_order(
    image: &Image,
    kernels: &KernelSet,
    order: &PositionOrder,
) -> Result<FeatureMap> {
    if image.channels() != kernels.channels() {
        return Err(Error::invalid(format!(
            "channel mismatch: image has {}, kernels have {}",
            image.channels(),
            kernels.channels()
        )));
    }
    let matrix = build_kernel_matrix(kernels, order)?;
    let (n, h, w) = (kernels.kernels(), image.height(), image.width());
    let mut out = FeatureMap::zeros(n, h, w);
    for r in 0..h {
        for c in 0..w {
            for block in matrix.blocks() {
                let column = pixel_column(image, (r, c), block.offset)?;
                if column.is_zero() {
                    continue;
                }
                for j in 0..n {
                    let dot: f64 = block
                        .row(j)
                        .iter()
                        .zip(&column.values)
                        .map(|(k, x)| k * x)
                        .sum();
                    *out.get_mut(j, r, c) += dot;
                }
            }
        }
    }
    Ok(out)
}
