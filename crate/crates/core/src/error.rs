use thiserror::Error;

/// Errors shared across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("size error: {0}")]
    Size(String),

    #[error("kernel composition error: {0}")]
    Composition(String),

    #[error("missing field '{0}'")]
    MissingField(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("insufficient calibration: rank {rank} exceeds sample count {n}")]
    InsufficientCalibration { rank: usize, n: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
