use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CoreError>;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("dimension mismatch on {axis}: expected {expected}, found {found}")]
    DimensionMismatch { axis: String, expected: usize, found: usize },

    #[error("non-finite value in {what} at index {index:?}")]
    NonFinite { what: String, index: Vec<usize> },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("corrupt container header at {path}: {reason}")]
    CorruptHeader { path: PathBuf, reason: String },

    #[error("payload size mismatch at {path}: expected {expected} bytes, found {found}")]
    PayloadSizeMismatch { path: PathBuf, expected: u64, found: u64 },

    #[error("unsupported dtype '{0}' (only float32 little-endian band-sequential is supported)")]
    UnsupportedDtype(String),

    #[error("reference band {band} is constant; correlation is undefined")]
    ConstantBand { band: usize },

    #[error("reference band {band} has zero mean")]
    ZeroMeanBand { band: usize },

    #[error("reference band {band} has zero maximum")]
    ZeroMaxBand { band: usize },

    #[error("every pixel has a zero spectrum; spectral angle is undefined")]
    AllZeroSpectra,

    #[error("unknown method '{0}'")]
    UnknownMethod(String),

    #[error("optimization diverged at step {step}: {detail}")]
    Diverged { step: usize, detail: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CoreError {
    pub fn mismatch(axis: impl Into<String>, expected: usize, found: usize) -> Self {
        Self::DimensionMismatch { axis: axis.into(), expected, found }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Self::InvalidParameter(msg.into())
    }
}
