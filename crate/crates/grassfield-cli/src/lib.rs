//! Command-line driver for the grassfield engine.
//!
//! Subcommands: `run` (adaptive campaign), `distance` (one-off subspace
//! distance between two snapshot files), `interpolate` (field prediction
//! from a finished campaign), `compare-random` (adaptive vs uniform-random
//! design at equal budget), and `export-mesh` (mesh re-export as JSON).
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 model failure,
//! 4 query point outside the triangulation, 1 anything else.

pub mod compare;
pub mod config;
pub mod distance;
pub mod export;
pub mod interpolate;
pub mod output;
pub mod run;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("model failure: {0}")]
    Model(String),
    #[error("point outside the triangulation: {0}")]
    OutsideMesh(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Model(_) => 3,
            CliError::OutsideMesh(_) => 4,
            CliError::Other(_) => 1,
        }
    }

    pub fn config(e: impl std::fmt::Display) -> Self {
        CliError::Config(e.to_string())
    }

    pub fn model(e: impl std::fmt::Display) -> Self {
        CliError::Model(e.to_string())
    }

    pub fn other(e: impl std::fmt::Display) -> Self {
        CliError::Other(e.to_string())
    }
}
