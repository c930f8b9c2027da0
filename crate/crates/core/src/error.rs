//! Error type shared across the toolkit.

use thiserror::Error;

/// Unified error type for all modules.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or raster shapes that cannot be combined.
    #[error("dimension mismatch: expected {expected:?}, got {got:?} ({context})")]
    Dimension {
        expected: Vec<usize>,
        got: Vec<usize>,
        context: String,
    },

    /// Invalid configuration (model, spec, split ratios, ...).
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A call-site contract violation (non-scalar backward, label out of
    /// range, threshold out of range, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Geometric precondition failure (degenerate contour, origin outside,
    /// raster bounds exceeded, ...).
    #[error("geometry error: {0}")]
    Geometry(String),

    /// 0/0-style quantities with no defined value (empty ground truth in the
    /// IoU surrogate, zero-variance correlation).
    #[error("undefined ratio: {0}")]
    UndefinedRatio(String),

    /// Grading cannot proceed (e.g. empty disc mask).
    #[error("grading error: {0}")]
    Grading(String),

    /// Training diverged or cannot run.
    #[error("training error: {0}")]
    Training(String),

    /// Non-finite values where finite ones are required.
    #[error("evaluation error: {0}")]
    Evaluation(String),

    /// File format problems, with location when available.
    #[error("parse error in {file} at line {line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(expected: &[usize], got: &[usize], context: impl Into<String>) -> Self {
        Error::Dimension {
            expected: expected.to_vec(),
            got: got.to_vec(),
            context: context.into(),
        }
    }
}
