use thiserror::Error;

use crate::solver::IterateTrace;

/// Errors shared across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected_rows}x{expected_cols}, found {found_rows}x{found_cols}")]
    ShapeMismatch {
        expected_rows: usize,
        expected_cols: usize,
        found_rows: usize,
        found_cols: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("numerical failure: {message} (residual {residual:.3e})")]
    NumericalFailure { message: String, residual: f64 },

    #[error("iterates diverged at k = {at_iteration}")]
    Diverged {
        at_iteration: usize,
        trace: Box<IterateTrace>,
    },

    #[error("ray does not intersect the constraint set (best residual {residual:.3e})")]
    RayMiss { residual: f64 },

    #[error("inconsistent affine constraint system (least-squares residual {residual:.3e})")]
    InconsistentConstraint { residual: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("trace file missing for run {run_id}")]
    MissingTrace { run_id: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(expected: (usize, usize), found: (usize, usize)) -> Self {
        Error::ShapeMismatch {
            expected_rows: expected.0,
            expected_cols: expected.1,
            found_rows: found.0,
            found_cols: found.1,
        }
    }
}
