//! Experiment driver: generates synthetic completion problems, runs the
//! solvers across geometries and metric parameters from a shared
//! initialization, and writes machine-readable traces (CSV plus a JSON
//! sidecar per run). Also hosts the `verify` property suites.

pub mod config;
pub mod experiment;
pub mod verify;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Lib(#[from] desingopt::Error),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("config error: {0}")]
    Config(String),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, HarnessError>;
