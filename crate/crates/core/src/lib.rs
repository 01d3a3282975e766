// SPDX-License-Identifier: Apache-2.0

//! Simulation of multi-kernel, multi-channel convolution on a vertically
//! stacked memristive crossbar, with a digital reference, a compiler from
//! kernels to cell programs and a per-layer cost model.

pub mod cost;
pub mod crossbar;
pub mod decomp;
pub mod engine;
pub mod error;
pub mod mapper;
pub mod quant;
pub mod synth;
pub mod tensor;

pub use crossbar::StackGeometry;
pub use engine::{run_layer, run_paper_literal, ExecutionTrace, StrategySelector};
pub use error::{Error, Result};
pub use mapper::{MappingPlan, Strategy};
pub use quant::QuantSpec;
pub use tensor::{conv_mkmc, FeatureMap, Image, KernelSet};
