use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A series, config or sample field violates its invariants.
    #[error("invalid {field}: {reason}")]
    Validation { field: String, reason: String },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A geometric quantity is undefined for the given input (empty mask, constant curve, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("unsupported archive version {found:?} (expected {expected:?})")]
    UnsupportedVersion { found: String, expected: String },

    #[error("checksum mismatch for {0}")]
    Checksum(String),

    #[error("missing file {0}")]
    MissingFile(PathBuf),

    #[error("checkpoint does not match network config: {0}")]
    CheckpointMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Name of the offending field for validation errors.
    pub fn field(&self) -> Option<&str> {
        match self {
            Error::Validation { field, .. } => Some(field),
            _ => None,
        }
    }
}
