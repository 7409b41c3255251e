use thiserror::Error;

pub type Result<T, E = LearnError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("training diverged in {phase} at epoch {epoch}: loss {loss}")]
    Divergence { phase: String, epoch: usize, loss: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid training configuration: {field}: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("malformed model bundle: {0}")]
    Bundle(String),

    #[error("need at least {needed} training environments, got {got}")]
    TooFewEnvironments { needed: usize, got: usize },

    #[error(transparent)]
    Core(#[from] fakeinv_core::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl LearnError {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        LearnError::InvalidConfig { field: field.into(), reason: reason.into() }
    }
}
