use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A documented precondition of an operation was not met.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("training diverged at epoch {epoch} (loss = {loss})")]
    Diverged { epoch: usize, loss: f64 },

    #[error("cannot estimate parameters for class {class}: {reason}")]
    Estimation { class: usize, reason: String },

    #[error("split error: {0}")]
    Split(String),

    #[error("ingestion error at row {row}, column {column}: {message}")]
    Ingestion {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("calibration error for class {class}: {reason}")]
    Calibration { class: usize, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("experiment failed: {0}")]
    Experiment(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
