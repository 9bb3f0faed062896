use thiserror::Error;

use crate::neural::EpochRecord;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty truncation: dimension {dim} has no prior mass on [{lo}, {hi}]")]
    EmptyTruncation { dim: usize, lo: f64, hi: f64 },

    #[error("invalid region: {0}")]
    InvalidRegion(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("simulator failed at item {index}: {message}")]
    Simulator { index: usize, message: String },

    #[error("non-finite gradient in layer `{layer}`")]
    NonFiniteGradient { layer: String },

    #[error("training aborted at epoch {epoch}: {message}")]
    TrainingAborted {
        epoch: usize,
        message: String,
        trace: Vec<EpochRecord>,
    },

    #[error("degenerate posterior: no grid point carries weight")]
    DegeneratePosterior,

    #[error("vanishing acceptance: rate {rate:e} after {proposals} proposals")]
    VanishingAcceptance { rate: f64, proposals: u64 },

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("malformed file {path}: {message}")]
    Format { path: String, message: String },

    #[error("run directory {0} is locked by another process")]
    Locked(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    pub(crate) fn format(path: impl AsRef<std::path::Path>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.as_ref().display().to_string(),
            message: msg.into(),
        }
    }
}
