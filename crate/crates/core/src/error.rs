use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid `{field}`: {reason}")]
    InvalidField { field: String, reason: String },

    #[error("class count mismatch: {left} vs {right}")]
    ClassCount { left: usize, right: usize },

    #[error("conflicting record for key {0}")]
    Conflict(String),

    /// A malformed line in a text file; `line` is 1-based.
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("unsupported format version `{found}` (expected `{expected}`)")]
    Version { found: String, expected: String },

    #[error("not found: {0}")]
    NotFound(String),

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("policy `{policy}`: {reason}")]
    Policy { policy: String, reason: String },

    #[error("expected trial {expected}, got {got}")]
    OutOfOrder { expected: u32, got: u32 },

    #[error("non-finite loss at epoch {epoch}, batch {batch} (lr {lr})")]
    NonFinite { epoch: usize, batch: usize, lr: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn field(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidField {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn policy(policy: impl ToString, reason: impl Into<String>) -> Self {
        Error::Policy {
            policy: policy.to_string(),
            reason: reason.into(),
        }
    }
}
