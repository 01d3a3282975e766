// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rer3d_core::cost::{Calibration, CalibrationOverride};
use rer3d_core::synth::{synth_image, synth_kernels};
use rer3d_core::{Image, KernelSet, QuantSpec, StackGeometry, StrategySelector};

use crate::failure::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum RunStrategy {
    #[default]
    Auto,
    SplitPlane,
    DualRail,
    /// Every plane fed the unshifted column; diagnostic only.
    PaperLiteral,
}

impl RunStrategy {
    pub fn selector(self) -> Option<StrategySelector> {
        match self {
            RunStrategy::Auto => Some(StrategySelector::Auto),
            RunStrategy::SplitPlane => Some(StrategySelector::SplitPlane),
            RunStrategy::DualRail => Some(StrategySelector::DualRail),
            RunStrategy::PaperLiteral => None,
        }
    }
}

fn default_tolerance() -> f64 {
    1e-9
}

/// One convolution layer to simulate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct LayerSpec {
    pub name: String,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub n: usize,
    pub l: usize,
    pub geometry: StackGeometry,
    #[serde(default)]
    pub quant: QuantSpec,
    #[serde(default)]
    pub strategy: RunStrategy,
    #[serde(default)]
    pub seed: u64,
    /// Image JSON, relative to the spec file. Synthetic when absent.
    #[serde(default)]
    pub image: Option<PathBuf>,
    #[serde(default)]
    pub kernels: Option<PathBuf>,
    /// Largest accepted relative error against the reference convolution.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub calibration: Option<CalibrationOverride>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl LayerSpec {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::spec(format!("{}: {e}", path.display())))?;
        let mut spec: LayerSpec = serde_json::from_str(&text)
            .map_err(|e| Failure::spec(format!("{}: {e}", path.display())))?;
        spec.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), Failure> {
        for (name, v) in [
            ("c", self.c),
            ("h", self.h),
            ("w", self.w),
            ("n", self.n),
            ("l", self.l),
        ] {
            if v == 0 {
                return Err(Failure::spec(format!("{name} must be positive")));
            }
        }
        if !(self.tolerance.is_finite() && self.tolerance >= 0.0) {
            return Err(Failure::spec(format!(
                "tolerance {} must be non-negative",
                self.tolerance
            )));
        }
        Ok(())
    }

    pub fn calibration(&self) -> Result<Calibration, Failure> {
        let base = Calibration::default();
        match &self.calibration {
            Some(o) => Ok(base.with_override(o.clone())?),
            None => Ok(base),
        }
    }

    fn read_json<T: serde::de::DeserializeOwned>(&self, rel: &Path) -> Result<T, Failure> {
        let path = self.base_dir.join(rel);
        let text = fs::read_to_string(&path)
            .map_err(|e| Failure::spec(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Failure::spec(format!("{}: {e}", path.display())))
    }

    pub fn image(&self) -> Result<Image, Failure> {
        let img: Image = match &self.image {
            Some(p) => self.read_json(p)?,
            None => synth_image(self.seed, self.c, self.h, self.w)?,
        };
        if (img.channels(), img.height(), img.width()) != (self.c, self.h, self.w) {
            return Err(Failure::spec(format!(
                "image is {}x{}x{}, spec says {}x{}x{}",
                img.channels(),
                img.height(),
                img.width(),
                self.c,
                self.h,
                self.w
            )));
        }
        Ok(img)
    }

    pub fn kernels(&self) -> Result<KernelSet, Failure> {
        let k: KernelSet = match &self.kernels {
            Some(p) => self.read_json(p)?,
            None => synth_kernels(self.seed, self.n, self.c, self.l)?,
        };
        if (k.kernels(), k.channels(), k.side()) != (self.n, self.c, self.l) {
            return Err(Failure::spec(format!(
                "kernels are {}x{}x{}, spec says n={} c={} l={}",
                k.kernels(),
                k.channels(),
                k.side(),
                self.n,
                self.c,
                self.l
            )));
        }
        Ok(k)
    }
}
