use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("non-finite gradient in parameter {index}")]
    NonFiniteGradient { index: usize },

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("degenerate range for {channel}: min = max = {value}")]
    DegenerateRange { channel: &'static str, value: f64 },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("training failed at iteration {iteration}: {reason}")]
    TrainingFailure { iteration: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
