//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the core library.
#[derive(Debug, Error)]
pub enum CoreError {
    /// Two containers that must agree in length do not.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// A part hierarchy or articulation is structurally invalid.
    #[error("structural error: {0}")]
    Structural(String),

    /// A value violates a documented invariant (range, finiteness, ...).
    #[error("invalid value: {0}")]
    InvalidValue(String),

    /// Point configuration too degenerate to estimate a camera.
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),

    /// The optimizer produced a non-finite loss.
    #[error("non-finite loss at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },

    /// File parsing failed at a known line.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
