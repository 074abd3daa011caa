use thiserror::Error;

use crate::dynamics::Trace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("configuration has {} error(s):\n  {}", .0.len(), .0.join("\n  "))]
    Validation(Vec<String>),

    #[error("degenerate game: {0}")]
    DegenerateGame(String),

    #[error("perturbation radius is zero at epoch {epoch}")]
    ZeroPerturbation { epoch: usize },

    #[error("non-finite value in {what} at epoch {epoch}")]
    Diverged {
        epoch: usize,
        what: String,
        partial: Box<Trace>,
    },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("diagnostic unavailable: {0}")]
    DiagnosticUnavailable(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
