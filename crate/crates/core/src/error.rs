use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("out of single-aliasing regime: {0}")]
    OutOfRegime(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numeric failure at iteration {iteration}: {what}")]
    Numeric { iteration: usize, what: String },

    #[error("training diverged at step {step}")]
    Diverged { step: usize },

    #[error("augmentation not applicable: {0}")]
    NotApplicable(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
