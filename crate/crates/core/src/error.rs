// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    /// A cell write would need a negative or non-finite conductance.
    #[error(
        "unphysical conductance {value} at layer {layer}, wordline {wordline}, bitline {bitline}"
    )]
    Physicality {
        layer: usize,
        wordline: usize,
        bitline: usize,
        value: f64,
    },

    #[error("nonzero conductance {value} written to dummy layer {layer}")]
    DummyViolation { layer: usize, value: f64 },

    /// Two kernels have crossing negative-weight patterns, so no single
    /// plane ordering separates negatives from non-negatives for both.
    #[error(
        "split-plane mapping infeasible: kernels {first} and {second} have crossing sign patterns"
    )]
    CrossingSigns { first: usize, second: usize },

    /// A kernel position carries weights of both signs across channels.
    #[error("split-plane mapping infeasible: kernel {kernel} position {position} has mixed channel signs")]
    MixedSigns { kernel: usize, position: usize },

    #[error("out of range: {0}")]
    Range(String),

    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for the errors a split-plane planner raises when the kernel sign
    /// structure cannot be realized.
    pub fn is_infeasible(&self) -> bool {
        matches!(self, Error::CrossingSigns { .. } | Error::MixedSigns { .. })
    }
}
