use std::path::PathBuf;

use hsfuse_core::CoreError;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{stage}: missing upstream artifact {path}")]
    MissingUpstream { stage: String, path: PathBuf },

    #[error("{stage}: existing outputs were produced with config {recorded}, current config is {current} (use --force to overwrite)")]
    ConfigHashMismatch { stage: String, recorded: String, current: String },

    #[error("provenance check failed for {path}: {reason}")]
    Provenance { path: PathBuf, reason: String },

    #[error("i/o error at {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("image error at {path}: {reason}")]
    Image { path: PathBuf, reason: String },

    #[error(transparent)]
    Core(#[from] CoreError),
}

impl PipelineError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Self::Config(msg.into())
    }

    /// Process exit code; 2 is left to the argument parser.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 3,
            Self::Io { .. } | Self::Image { .. } => 4,
            Self::MissingUpstream { .. } => 5,
            Self::ConfigHashMismatch { .. } => 6,
            Self::Provenance { .. } => 7,
            Self::Core(e) => match e {
                CoreError::Diverged { .. } => 9,
                CoreError::Io(_) => 4,
                CoreError::InvalidParameter(_) | CoreError::UnknownMethod(_) => 3,
                CoreError::CorruptHeader { .. } | CoreError::PayloadSizeMismatch { .. } | CoreError::UnsupportedDtype(_) => 10,
                _ => 8,
            },
        }
    }
}
