// SPDX-License-Identifier: Apache-2.0

//! Dense tensors and the reference convolution.
//!
//! Convolution here is stride-1 cross-correlation with zero padding and
//! "same" output size: an `l x l` kernel is anchored at row/column
//! `(l - 1) / 2`, which is the center for odd `l` and the top-left of the
//! central 2x2 block for even `l`. Every crossbar execution in this crate is
//! checked against [`conv_mkmc`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kernel row/column that lands on the output pixel.
pub fn anchor(side: usize) -> usize {
    side.saturating_sub(1) / 2
}

/// Row-major 2D grid of reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 {
            return Err(Error::invalid("grid rows must be positive"));
        }
        if cols == 0 {
            return Err(Error::invalid("grid cols must be positive"));
        }
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "grid data has {} entries, expected rows*cols = {}",
                data.len(),
                rows * cols
            )));
        }
        Ok(Grid { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Grid {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("ragged grid rows"));
        }
        Grid::new(rows.len(), cols, rows.iter().flatten().copied().collect())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// Value at a signed location, zero outside the grid.
    pub fn get_padded(&self, r: isize, c: isize) -> f64 {
        if r < 0 || c < 0 || r as usize >= self.rows || c as usize >= self.cols {
            0.0
        } else {
            self.get(r as usize, c as usize)
        }
    }
}

/// A `c x h x w` input image, channel-major then row then column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawImage")]
pub struct Image {
    c: usize,
    h: usize,
    w: usize,
    data: Vec<f64>,
}

#[derive(Deserialize)]
struct RawImage {
    c: usize,
    h: usize,
    w: usize,
    data: Vec<f64>,
}

impl TryFrom<RawImage> for Image {
    type Error = Error;
    fn try_from(raw: RawImage) -> Result<Self> {
        Image::new(raw.c, raw.h, raw.w, raw.data)
    }
}

impl Image {
    pub fn new(c: usize, h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        for (name, v) in [("c", c), ("h", h), ("w", w)] {
            if v == 0 {
                return Err(Error::invalid(format!("image {name} must be positive")));
            }
        }
        if data.len() != c * h * w {
            return Err(Error::invalid(format!(
                "image data has {} entries, expected c*h*w = {}",
                data.len(),
                c * h * w
            )));
        }
        Ok(Image { c, h, w, data })
    }

    pub fn from_fn(
        c: usize,
        h: usize,
        w: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(c * h * w);
        for ch in 0..c {
            for r in 0..h {
                for col in 0..w {
                    data.push(f(ch, r, col));
                }
            }
        }
        Image::new(c, h, w, data)
    }

    pub fn channels(&self) -> usize {
        self.c
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, ch: usize, r: usize, col: usize) -> f64 {
        self.data[(ch * self.h + r) * self.w + col]
    }

    pub fn get_padded(&self, ch: usize, r: isize, col: isize) -> f64 {
        if r < 0 || col < 0 || r as usize >= self.h || col as usize >= self.w {
            0.0
        } else {
            self.get(ch, r as usize, col as usize)
        }
    }

    pub fn channel(&self, ch: usize) -> Grid {
        let plane = self.h * self.w;
        Grid {
            rows: self.h,
            cols: self.w,
            data: self.data[ch * plane..(ch + 1) * plane].to_vec(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    pub fn scaled(&self, alpha: f64) -> Image {
        self.map(|v| alpha * v)
    }

    pub fn add(&self, other: &Image) -> Result<Image> {
        if (self.c, self.h, self.w) != (other.c, other.h, other.w) {
            return Err(Error::invalid("image shapes differ"));
        }
        Ok(Image {
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
            ..self.clone()
        })
    }
}

/// `n x c x l x l` convolution weights, kernel-major then channel, row, column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKernelSet")]
pub struct KernelSet {
    n: usize,
    c: usize,
    l: usize,
    data: Vec<f64>,
}

#[derive(Deserialize)]
struct RawKernelSet {
    n: usize,
    c: usize,
    l: usize,
    data: Vec<f64>,
}

impl TryFrom<RawKernelSet> for KernelSet {
    type Error = Error;
    fn try_from(raw: RawKernelSet) -> Result<Self> {
        KernelSet::new(raw.n, raw.c, raw.l, raw.data)
    }
}

impl KernelSet {
    pub fn new(n: usize, c: usize, l: usize, data: Vec<f64>) -> Result<Self> {
        for (name, v) in [("n", n), ("c", c), ("l", l)] {
            if v == 0 {
                return Err(Error::invalid(format!(
                    "kernel set {name} must be positive"
                )));
            }
        }
        if data.len() != n * c * l * l {
            return Err(Error::invalid(format!(
                "kernel data has {} entries, expected n*c*l*l = {}",
                data.len(),
                n * c * l * l
            )));
        }
        Ok(KernelSet { n, c, l, data })
    }

    pub fn from_fn(
        n: usize,
        c: usize,
        l: usize,
        mut f: impl FnMut(usize, usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(n * c * l * l);
        for j in 0..n {
            for i in 0..c {
                for kr in 0..l {
                    for kc in 0..l {
                        data.push(f(j, i, kr, kc));
                    }
                }
            }
        }
        KernelSet::new(n, c, l, data)
    }

    pub fn kernels(&self) -> usize {
        self.n
    }

    pub fn channels(&self) -> usize {
        self.c
    }

    pub fn side(&self) -> usize {
        self.l
    }

    /// Number of spatial positions, `l * l`.
    pub fn positions(&self) -> usize {
        self.l * self.l
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, j: usize, i: usize, kr: usize, kc: usize) -> f64 {
        self.data[((j * self.c + i) * self.l + kr) * self.l + kc]
    }

    /// Weight at row-major position index `p = kr * l + kc`.
    pub fn at_position(&self, j: usize, i: usize, p: usize) -> f64 {
        self.data[(j * self.c + i) * self.l * self.l + p]
    }

    pub fn channel_kernel(&self, j: usize, i: usize) -> Grid {
        let area = self.l * self.l;
        let start = (j * self.c + i) * area;
        Grid {
            rows: self.l,
            cols: self.l,
            data: self.data[start..start + area].to_vec(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> KernelSet {
        KernelSet {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    /// Collapse every `l x l` kernel to a 1x1 kernel holding the sum of its
    /// positions, per channel.
    pub fn position_summed(&self) -> KernelSet {
        let area = self.l * self.l;
        let data = self
            .data
            .chunks(area)
            .map(|chunk| chunk.iter().sum())
            .collect();
        KernelSet {
            n: self.n,
            c: self.c,
            l: 1,
            data,
        }
    }
}

/// `n x h x w` convolution output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFeatureMap")]
pub struct FeatureMap {
    n: usize,
    h: usize,
    w: usize,
    data: Vec<f64>,
}

#[derive(Deserialize)]
struct RawFeatureMap {
    n: usize,
    h: usize,
    w: usize,
    data: Vec<f64>,
}

impl TryFrom<RawFeatureMap> for FeatureMap {
    type Error = Error;
    fn try_from(raw: RawFeatureMap) -> Result<Self> {
        FeatureMap::new(raw.n, raw.h, raw.w, raw.data)
    }
}

impl FeatureMap {
    pub fn new(n: usize, h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * h * w {
            return Err(Error::invalid(format!(
                "feature map data has {} entries, expected n*h*w = {}",
                data.len(),
                n * h * w
            )));
        }
        Ok(FeatureMap { n, h, w, data })
    }

    pub fn zeros(n: usize, h: usize, w: usize) -> Self {
        FeatureMap {
            n,
            h,
            w,
            data: vec![0.0; n * h * w],
        }
    }

    pub fn kernels(&self) -> usize {
        self.n
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, j: usize, r: usize, c: usize) -> f64 {
        self.data[(j * self.h + r) * self.w + c]
    }

    pub(crate) fn get_mut(&mut self, j: usize, r: usize, c: usize) -> &mut f64 {
        &mut self.data[(j * self.h + r) * self.w + c]
    }

    pub fn plane(&self, j: usize) -> Grid {
        let area = self.h * self.w;
        Grid {
            rows: self.h,
            cols: self.w,
            data: self.data[j * area..(j + 1) * area].to_vec(),
        }
    }

    fn check_shape(&self, other: &FeatureMap) -> Result<()> {
        if (self.n, self.h, self.w) != (other.n, other.h, other.w) {
            return Err(Error::invalid(format!(
                "feature map shapes differ: {}x{}x{} vs {}x{}x{}",
                self.n, self.h, self.w, other.n, other.h, other.w
            )));
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, reference: &FeatureMap) -> Result<f64> {
        self.check_shape(reference)?;
        Ok(self
            .data
            .iter()
            .zip(&reference.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Normwise relative error `max|a - b| / max|b|`; falls back to the
    /// absolute error when the reference is identically zero.
    pub fn relative_error(&self, reference: &FeatureMap) -> Result<f64> {
        let abs = self.max_abs_diff(reference)?;
        let norm = reference.data.iter().map(|v| v.abs()).fold(0.0, f64::max);
        Ok(if norm > 0.0 { abs / norm } else { abs })
    }
}

/// Single-kernel single-channel convolution.
pub fn conv_sksc(image: &Grid, kernel: &Grid) -> Result<Grid> {
    if kernel.rows() != kernel.cols() {
        return Err(Error::invalid(format!(
            "kernel must be square, got {}x{}",
            kernel.rows(),
            kernel.cols()
        )));
    }
    let l = kernel.rows();
    let a = anchor(l) as isize;
    let mut out = Grid::zeros(image.rows(), image.cols());
    for r in 0..image.rows() {
        for s in 0..image.cols() {
            let mut acc = 0.0;
            for kr in 0..l {
                for kc in 0..l {
                    let pr = r as isize + kr as isize - a;
                    let pc = s as isize + kc as isize - a;
                    acc += kernel.get(kr, kc) * image.get_padded(pr, pc);
                }
            }
            out.data[r * out.cols + s] = acc;
        }
    }
    Ok(out)
}

/// Single-kernel multi-channel convolution: the channel sum of
/// [`conv_sksc`] for kernel `j`.
pub fn conv_skmc(image: &Image, kernels: &KernelSet, j: usize) -> Result<Grid> {
    if image.channels() != kernels.channels() {
        return Err(Error::invalid(format!(
            "channel mismatch: image has {}, kernel has {}",
            image.channels(),
            kernels.channels()
        )));
    }
    if j >= kernels.kernels() {
        return Err(Error::invalid(format!(
            "kernel index {j} out of range for {} kernels",
            kernels.kernels()
        )));
    }
    let mut acc = Grid::zeros(image.height(), image.width());
    for i in 0..image.channels() {
        let part = conv_sksc(&image.channel(i), &kernels.channel_kernel(j, i))?;
        for (a, b) in acc.data.iter_mut().zip(part.data) {
            *a += b;
        }
    }
    Ok(acc)
}

/// Multi-kernel multi-channel convolution: [`conv_skmc`] planes for every
/// kernel, concatenated.
pub fn conv_mkmc(image: &Image, kernels: &KernelSet) -> Result<FeatureMap> {
    let mut data = Vec::with_capacity(kernels.kernels() * image.height() * image.width());
    for j in 0..kernels.kernels() {
        data.extend(conv_skmc(image, kernels, j)?.data);
    }
    FeatureMap::new(kernels.kernels(), image.height(), image.width(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Explicitly padded copy followed by a plain sliding window.
    fn padded_oracle(img: &[Vec<f64>], k: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let (h, w, l) = (img.len(), img[0].len(), k.len());
        let a = (l - 1) / 2;
        let (ph, pw) = (h + l - 1, w + l - 1);
        let mut padded = vec![vec![0.0; pw]; ph];
        for r in 0..h {
            for c in 0..w {
                padded[r + a][c + a] = img[r][c];
            }
        }
        let mut out = vec![vec![0.0; w]; h];
        for r in 0..h {
            for c in 0..w {
                for kr in 0..l {
                    for kc in 0..l {
                        out[r][c] += k[kr][kc] * padded[r + kr][c + kc];
                    }
                }
            }
        }
        out
    }

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    }

    #[test]
    fn sksc_zero_image() {
        let img = Grid::zeros(3, 3);
        let k = Grid::from_rows(&[
            vec![1.0, -2.0, 3.0],
            vec![0.5, 4.0, 1.0],
            vec![9.0, 1.0, 1.0],
        ])
        .unwrap();
        let out = conv_sksc(&img, &k).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sksc_identity_kernel() {
        let img = Grid::new(2, 4, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]).unwrap();
        let k = Grid::new(1, 1, vec![1.0]).unwrap();
        assert_eq!(conv_sksc(&img, &k).unwrap(), img);
    }

    #[test]
    fn sksc_all_ones_3x3() {
        let rows = vec![
            vec![1.0, 2.0, 3.0],
            vec![4.0, 5.0, 6.0],
            vec![7.0, 8.0, 9.0],
        ];
        let ones = vec![vec![1.0; 3]; 3];
        let expected = padded_oracle(&rows, &ones);
        // Frozen from the padded oracle.
        assert_eq!(
            expected,
            vec![
                vec![12.0, 21.0, 16.0],
                vec![27.0, 45.0, 33.0],
                vec![24.0, 39.0, 28.0]
            ]
        );
        let out = conv_sksc(
            &Grid::from_rows(&rows).unwrap(),
            &Grid::from_rows(&ones).unwrap(),
        )
        .unwrap();
        assert_eq!(out.get(1, 1), 45.0);
        assert_eq!(out, Grid::from_rows(&expected).unwrap());
    }

    #[test]
    fn sksc_even_kernel_anchor_is_top_left_of_center() {
        // A 2x2 kernel with a single 1 at (0,0) is the identity under the anchor rule.
        let img = Grid::new(3, 3, (1..=9).map(f64::from).collect()).unwrap();
        let k = Grid::new(2, 2, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(conv_sksc(&img, &k).unwrap(), img);
        // (1,1) reads the pixel one down and one right.
        let k = Grid::new(2, 2, vec![0.0, 0.0, 0.0, 1.0]).unwrap();
        let out = conv_sksc(&img, &k).unwrap();
        assert_eq!(out.get(0, 0), 5.0);
        assert_eq!(out.get(2, 2), 0.0);
    }

    #[test]
    fn sksc_rejects_non_square_kernel() {
        let img = Grid::zeros(3, 3);
        let k = Grid::zeros(2, 3);
        let err = conv_sksc(&img, &k).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(m) if m.contains("square")));
    }

    #[test]
    fn grid_rejects_empty_and_bad_len() {
        assert!(
            matches!(Grid::new(0, 3, vec![]), Err(Error::InvalidArgument(m)) if m.contains("rows"))
        );
        assert!(Grid::new(2, 2, vec![1.0]).is_err());
    }

    #[test]
    fn skmc_cancellation_by_symmetry() {
        let img = Image::from_fn(2, 4, 4, |ch, r, c| {
            let v = (r * 4 + c) as f64 * 0.3 - 1.0;
            if ch == 0 {
                v
            } else {
                -v
            }
        })
        .unwrap();
        let k = KernelSet::from_fn(1, 2, 3, |_, _, kr, kc| (kr as f64) - 0.5 * kc as f64).unwrap();
        let out = conv_skmc(&img, &k, 0).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn skmc_single_channel_matches_sksc() {
        let mut s = 7;
        let img = Image::from_fn(1, 5, 4, |_, _, _| lcg(&mut s)).unwrap();
        let k = KernelSet::from_fn(1, 1, 3, |_, _, _, _| lcg(&mut s)).unwrap();
        let a = conv_skmc(&img, &k, 0).unwrap();
        let b = conv_sksc(&img.channel(0), &k.channel_kernel(0, 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn skmc_three_channels_matches_channel_loop() {
        let mut s = 11;
        let img = Image::from_fn(3, 4, 5, |_, _, _| lcg(&mut s)).unwrap();
        let k = KernelSet::from_fn(1, 3, 3, |_, _, _, _| lcg(&mut s)).unwrap();
        let mut expected = vec![vec![0.0; 5]; 4];
        for ch in 0..3 {
            let im: Vec<Vec<f64>> = (0..4)
                .map(|r| (0..5).map(|c| img.get(ch, r, c)).collect())
                .collect();
            let kk: Vec<Vec<f64>> = (0..3)
                .map(|r| (0..3).map(|c| k.get(0, ch, r, c)).collect())
                .collect();
            let part = padded_oracle(&im, &kk);
            for r in 0..4 {
                for c in 0..5 {
                    expected[r][c] += part[r][c];
                }
            }
        }
        let out = conv_skmc(&img, &k, 0).unwrap();
        for (r, row) in expected.iter().enumerate() {
            for (c, want) in row.iter().enumerate() {
                assert!((out.get(r, c) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn skmc_channel_mismatch() {
        let img = Image::new(2, 2, 2, vec![0.0; 8]).unwrap();
        let k = KernelSet::new(1, 3, 1, vec![0.0; 3]).unwrap();
        assert!(matches!(
            conv_skmc(&img, &k, 0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            conv_mkmc(&img, &k),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn mkmc_single_kernel_wraps_skmc() {
        let mut s = 3;
        let img = Image::from_fn(2, 3, 3, |_, _, _| lcg(&mut s)).unwrap();
        let k = KernelSet::from_fn(1, 2, 3, |_, _, _, _| lcg(&mut s)).unwrap();
        let fm = conv_mkmc(&img, &k).unwrap();
        assert_eq!(fm.plane(0), conv_skmc(&img, &k, 0).unwrap());
    }

    #[test]
    fn mkmc_linearity_in_weights() {
        let mut s = 5;
        let img = Image::from_fn(2, 4, 4, |_, _, _| lcg(&mut s)).unwrap();
        let base: Vec<f64> = (0..2 * 9).map(|_| lcg(&mut s)).collect();
        let mut data = base.clone();
        data.extend(base.iter().map(|v| 2.0 * v));
        let k = KernelSet::new(2, 2, 3, data).unwrap();
        let fm = conv_mkmc(&img, &k).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                assert_eq!(fm.get(1, r, c), 2.0 * fm.get(0, r, c));
            }
        }
    }

    #[test]
    fn mkmc_mixed_sign_matches_quadruple_loop() {
        let mut s = 99;
        let (n, c, h, w, l) = (2, 3, 5, 5, 3);
        let img = Image::from_fn(c, h, w, |_, _, _| lcg(&mut s)).unwrap();
        let k = KernelSet::from_fn(n, c, l, |_, _, _, _| lcg(&mut s)).unwrap();
        let fm = conv_mkmc(&img, &k).unwrap();
        for j in 0..n {
            for r in 0..h {
                for col in 0..w {
                    let mut acc = 0.0;
                    for i in 0..c {
                        for kr in 0..l {
                            for kc in 0..l {
                                let pr = r as isize + kr as isize - 1;
                                let pc = col as isize + kc as isize - 1;
                                if (0..h as isize).contains(&pr) && (0..w as isize).contains(&pc) {
                                    acc +=
                                        k.get(j, i, kr, kc) * img.get(i, pr as usize, pc as usize);
                                }
                            }
                        }
                    }
                    assert!((fm.get(j, r, col) - acc).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn json_shapes() {
        let img: Image = serde_json::from_str(r#"{"c":1,"h":1,"w":2,"data":[1.5,2.0]}"#).unwrap();
        assert_eq!(img.get(0, 0, 1), 2.0);
        assert!(serde_json::from_str::<Image>(r#"{"c":1,"h":2,"w":2,"data":[1.0]}"#).is_err());
        let k: KernelSet = serde_json::from_str(r#"{"n":1,"c":1,"l":1,"data":[3.0]}"#).unwrap();
        assert_eq!(
            serde_json::to_string(&k).unwrap(),
            r#"{"n":1,"c":1,"l":1,"data":[3.0]}"#
        );
    }

    fn small_case() -> impl Strategy<Value = (Image, Image, KernelSet, f64)> {
        (1usize..4, 1usize..4, 2usize..6, 2usize..6, 1usize..5).prop_flat_map(|(n, c, h, w, l)| {
            let im = proptest::collection::vec(-4i32..5, c * h * w);
            let im2 = proptest::collection::vec(-4i32..5, c * h * w);
            let ks = proptest::collection::vec(-4i32..5, n * c * l * l);
            (im, im2, ks, -3i32..4).prop_map(move |(a, b, k, alpha)| {
                let to = |v: Vec<i32>| v.into_iter().map(f64::from).collect::<Vec<_>>();
                (
                    Image::new(c, h, w, to(a)).unwrap(),
                    Image::new(c, h, w, to(b)).unwrap(),
                    KernelSet::new(n, c, l, to(k)).unwrap(),
                    f64::from(alpha),
                )
            })
        })
    }

    proptest! {
        // Integer-valued data keeps every sum exact, so equality is exact.
        #[test]
        fn linearity_and_superposition((i1, i2, k, alpha) in small_case()) {
            let base = conv_mkmc(&i1, &k).unwrap();
            let scaled = conv_mkmc(&i1.scaled(alpha), &k).unwrap();
            for (s, b) in scaled.data().iter().zip(base.data()) {
                prop_assert_eq!(*s, alpha * b);
            }
            let sum = conv_mkmc(&i1.add(&i2).unwrap(), &k).unwrap();
            let other = conv_mkmc(&i2, &k).unwrap();
            for ((s, a), b) in sum.data().iter().zip(base.data()).zip(other.data()) {
                prop_assert_eq!(*s, a + b);
            }
        }

        #[test]
        fn one_by_one_is_per_pixel_matvec((img, _, k, _) in small_case()) {
            let k = KernelSet::from_fn(k.kernels(), k.channels(), 1, |j, i, _, _| k.get(j, i, 0, 0)).unwrap();
            let fm = conv_mkmc(&img, &k).unwrap();
            for j in 0..k.kernels() {
                for r in 0..img.height() {
                    for c in 0..img.width() {
                        let dot: f64 = (0..img.channels()).map(|i| k.get(j, i, 0, 0) * img.get(i, r, c)).sum();
                        prop_assert_eq!(fm.get(j, r, c), dot);
                    }
                }
            }
        }
    }
}
