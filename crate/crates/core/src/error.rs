use thiserror::Error;

/// Errors raised by the model, fitting, simulation and analytics layers.
#[derive(Debug, Error)]
pub enum Error {
    /// A value or combination of values violates a documented contract.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// An operation was called before its inputs were ready.
    #[error("precondition failed: {0}")]
    Precondition(String),

    /// A stage index fell outside `1..=horizon`.
    #[error("stage {stage} out of range 1..={horizon}")]
    StageOutOfRange { stage: usize, horizon: usize },

    /// Cluster centroids could not be mapped onto archetypes unambiguously.
    #[error("cluster labeling failed: {0}")]
    Labeling(String),

    /// Two input tables disagree on their participant keys.
    #[error("participant ids do not match; missing: {}", .missing.join(", "))]
    Join { missing: Vec<String> },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
