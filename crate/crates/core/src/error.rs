use thiserror::Error;

use crate::linalg::MatrixCollection;

#[derive(Debug, Error)]
pub enum FglError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("entry ({i}, {j}) out of range for dimension {p}")]
    IndexOutOfRange { i: usize, j: usize, p: usize },

    #[error("penalty must be non-negative, got {0}")]
    NegativePenalty(f64),

    #[error("parameter {name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },

    #[error("matrix {index} is not positive definite (smallest eigenvalue {min_eig:e})")]
    NotPositiveDefinite { index: usize, min_eig: f64 },

    #[error("conjugate gradient breakdown at iteration {iterations} (curvature {curvature:e})")]
    CgBreakdown {
        iterations: usize,
        curvature: f64,
        partial: Box<MatrixCollection>,
    },

    #[error("Newton direction is not an ascent direction (<grad, d> = {slope:e})")]
    NotAscent { slope: f64 },

    #[error(
        "line search failed after {backtracks} backtracks at Newton iteration {iteration} \
         (grad norm {grad_norm:e}, slope {slope:e})"
    )]
    LineSearch {
        iteration: usize,
        backtracks: usize,
        grad_norm: f64,
        slope: f64,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FglError>;
