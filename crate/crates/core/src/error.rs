use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the simulator library.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("insufficient memory: {0}")]
    Capacity(String),

    #[error("profile fit failed: {0}")]
    Fit(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("input too large: {0}")]
    Size(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;

pub(crate) fn param(msg: impl Into<String>) -> SimError {
    SimError::Parameter(msg.into())
}
