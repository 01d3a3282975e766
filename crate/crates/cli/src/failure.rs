// SPDX-License-Identifier: Apache-2.0

use std::fmt;
use std::process::ExitCode;

use rer3d_core::Error;

/// A run that could not produce outputs.
#[derive(Debug)]
pub enum Failure {
    /// Malformed spec, bad arguments or unreadable inputs.
    Spec(String),
    /// The requested mapping cannot realize the kernels.
    Infeasible(String),
    /// Outputs could not be written.
    Io(String),
}

impl Failure {
    pub fn spec(msg: impl Into<String>) -> Self {
        Failure::Spec(msg.into())
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            Failure::Spec(_) => 2,
            Failure::Infeasible(_) => 3,
            Failure::Io(_) => 4,
        })
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Spec(m) => write!(f, "invalid input: {m}"),
            Failure::Infeasible(m) => write!(f, "infeasible mapping: {m}"),
            Failure::Io(m) => write!(f, "write failed: {m}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_infeasible() {
            Failure::Infeasible(e.to_string())
        } else {
            Failure::Spec(e.to_string())
        }
    }
}
