use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: expected {expected}, got {got}")]
    Dimension {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("unsupported norm order: {0}")]
    UnsupportedNorm(String),

    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("invalid network at layer {layer}: {reason}")]
    InvalidLayer { layer: usize, reason: String },

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("pattern oracle refused: {count} unstable neurons exceeds the limit of {limit}")]
    TooManyUnstable { count: usize, limit: usize },

    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error("training diverged at epoch {epoch}, step {step}")]
    Diverged { epoch: usize, step: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn dim_err(op: &'static str, expected: impl ToString, got: impl ToString) -> Error {
    Error::Dimension {
        op,
        expected: expected.to_string(),
        got: got.to_string(),
    }
}
