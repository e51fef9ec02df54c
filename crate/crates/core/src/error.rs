use std::io;

use thiserror::Error;

/// Errors produced by the simulator, estimator and optimizer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient data: no samples with element {element} at phase {phase:.6} rad")]
    InsufficientData { element: usize, phase: f64 },

    #[error("search space too large: 2^{log2_size} configurations exceeds 2^{limit_log2}")]
    TooLarge { log2_size: u32, limit_log2: u32 },

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    TrainingDiverged { epoch: usize },

    #[error("io error: {0}")]
    Io(#[from] io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable snake_case tag for machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::InsufficientData { .. } => "insufficient_data",
            Error::TooLarge { .. } => "too_large",
            Error::TrainingDiverged { .. } => "training_diverged",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
