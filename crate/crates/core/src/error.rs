use std::path::PathBuf;

pub type Result<T, E = CfrError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum CfrError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },

    #[error("{path}: {message}")]
    Load { path: PathBuf, message: String },

    #[error("target has zero variance; NMSE is undefined")]
    DegenerateTarget,

    #[error("pole at x = {0}")]
    Pole(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CfrError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        CfrError::InvalidInput(msg.into())
    }
}
