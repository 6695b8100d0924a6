//! Error type shared by all modules.

use thiserror::Error;

/// Errors raised by construction, validation, and numeric routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("{context}: index {index} out of range (limit {limit})")]
    IndexOutOfRange {
        context: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("duplicate coordinate ({row}, {col})")]
    DuplicateCoordinate { row: usize, col: usize },

    #[error("{context}: invalid value {value}")]
    InvalidValue { context: &'static str, value: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("non-finite objective encountered during {0}")]
    NonFiniteObjective(&'static str),

    #[error("labels must contain both classes")]
    SingleClass,
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(context: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::ShapeMismatch {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
