//! Sample covariances, plain and log-entropy weighted.

use nalgebra::DMatrix;

use crate::error::{FglError, Result};
use crate::linalg::{symmetrize, MatrixCollection};

/// Unbiased sample covariance of the rows of `obs` (divisor `N - 1`).
pub fn sample_covariance(obs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = obs.nrows();
    if n < 2 {
        return Err(FglError::InvalidInput(format!("need at least two observations, got {n}")));
    }
    if obs.iter().any(|v| !v.is_finite()) {
        return Err(FglError::NonFinite("observations"));
    }
    let mean = obs.row_mean();
    let mut centred = obs.clone();
    for mut row in centred.row_iter_mut() {
        row -= &mean;
    }
    let mut s = centred.tr_mul(&centred) / (n - 1) as f64;
    symmetrize(&mut s);
    Ok(s)
}

/// One covariance per observation matrix.
pub fn sample_covariances(obs: &[DMatrix<f64>]) -> Result<MatrixCollection> {
    MatrixCollection::new(obs.iter().map(sample_covariance).collect::<Result<_>>()?)
}

/// Covariances of log-entropy weighted term counts.
///
/// `counts[l]` is the document-by-term matrix of class `l`; all classes share
/// the term columns. With the classes stacked into `D` documents, `P` is the
/// column-normalized count matrix, the weight of term `j` is
/// `e_j = 1 + sum_i P_ij ln P_ij / ln D`, and document rows become
/// `e_j ln(1 + X_ij)` before the per-class covariance is taken.
pub fn log_entropy_covariances(counts: &[DMatrix<f64>]) -> Result<MatrixCollection> {
    let Some(first) = counts.first() else {
        return Err(FglError::InvalidInput("no count matrices".into()));
    };
    let terms = first.ncols();
    if counts.iter().any(|c| c.ncols() != terms) {
        return Err(FglError::Shape("count matrices disagree on the number of terms".into()));
    }
    if counts.iter().any(|c| c.iter().any(|&v| !(v >= 0.0 && v.is_finite()))) {
        return Err(FglError::InvalidInput("counts must be finite and non-negative".into()));
    }
    let docs: usize = counts.iter().map(|c| c.nrows()).sum();
    if docs < 2 {
        return Err(FglError::InvalidInput("log-entropy weights need at least two documents".into()));
    }
    let ln_d = (docs as f64).ln();
    let mut weights = Vec::with_capacity(terms);
    for j in 0..terms {
        let total: f64 = counts.iter().map(|c| c.column(j).sum()).sum();
        if total == 0.0 {
            return Err(FglError::InvalidInput(format!("term {j} never occurs")));
        }
        let entropy: f64 = counts
            .iter()
            .flat_map(|c| c.column(j).iter().copied().collect::<Vec<_>>())
            .filter(|&v| v > 0.0)
            .map(|v| {
                let pij = v / total;
                pij * pij.ln()
            })
            .sum();
        weights.push(1.0 + entropy / ln_d);
    }
    let weighted: Vec<DMatrix<f64>> = counts
        .iter()
        .map(|c| DMatrix::from_fn(c.nrows(), terms, |i, j| weights[j] * c[(i, j)].ln_1p()))
        .collect();
    sample_covariances(&weighted)
}
