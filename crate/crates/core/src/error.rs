use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the model, sampler and experiment layers.
#[derive(Debug, Error)]
pub enum BvsError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("singular active set: adding variable {variable} makes X_gamma^T X_gamma singular")]
    Singular { variable: usize },

    #[error("model size {p_gamma} is not below n - 1 = {limit} under the g-prior")]
    ModelTooLarge { p_gamma: usize, limit: usize },

    #[error("exact enumeration refused: p = {p} exceeds the cap of {max_p}")]
    EnumerationCap { p: usize, max_p: usize },

    #[error("value {value} outside the open interval ({lo}, {hi})")]
    Domain { value: f64, lo: f64, hi: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("response column `{0}` not found in header")]
    MissingColumn(String),

    #[error("non-numeric cell `{cell}` at row {row}, column `{column}`")]
    NonNumeric {
        row: usize,
        column: String,
        cell: String,
    },

    #[error("ragged row {row}: expected {expected} fields, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("serialization error: {0}")]
    Serialize(String),
}

impl BvsError {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        BvsError::Io {
            context: context.into(),
            source,
        }
    }

    /// True for errors caused by a malformed request rather than a runtime failure.
    pub fn is_usage(&self) -> bool {
        matches!(self, BvsError::Config(_))
    }
}

pub type Result<T> = std::result::Result<T, BvsError>;
