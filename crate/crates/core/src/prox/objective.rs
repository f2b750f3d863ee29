use crate::error::{FglError, Result};
use crate::linalg::{is_positive_definite, sym_eig, MatrixCollection};

use super::fused::{check_penalty, for_each_fiber, fused_penalty, prox_fgl};

/// Sample covariances plus the sparsity and similarity weights.
#[derive(Debug, Clone)]
pub struct ProblemData {
    pub s: MatrixCollection,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl ProblemData {
    pub fn new(s: MatrixCollection, lambda1: f64, lambda2: f64) -> Result<Self> {
        check_penalty(lambda1)?;
        check_penalty(lambda2)?;
        if s.len() < 2 {
            return Err(FglError::InvalidInput(format!(
                "need at least two classes, got {}",
                s.len()
            )));
        }
        if !s.is_finite() {
            return Err(FglError::NonFinite("sample covariance"));
        }
        Ok(ProblemData { s, lambda1, lambda2 })
    }

    pub fn dim(&self) -> usize {
        self.s.dim()
    }

    pub fn classes(&self) -> usize {
        self.s.len()
    }
}

/// The FGL penalty, summed over ordered off-diagonal pairs `i != j`.
pub fn fgl_penalty(theta: &MatrixCollection, lambda1: f64, lambda2: f64) -> f64 {
    let mut total = 0.0;
    for_each_fiber(theta, |_, _, v| total += fused_penalty(v, lambda1, lambda2));
    2.0 * total
}

/// `sigma * P(Y) + 0.5 |Y - U|^2` at `Y = Prox_{sigma P}(U)`.
pub fn moreau_env_fgl(u: &MatrixCollection, sigma: f64, lambda1: f64, lambda2: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(FglError::NonPositive { name: "sigma", value: sigma });
    }
    let (l1, l2) = (sigma * lambda1, sigma * lambda2);
    let y = prox_fgl(u, l1, l2)?;
    Ok(fgl_penalty(&y, l1, l2) + 0.5 * (&y - u).norm_squared_total())
}

impl MatrixCollection {
    pub(crate) fn norm_squared_total(&self) -> f64 {
        self.iter().map(|m| m.norm_squared()).sum()
    }
}

/// `sum_l (-log det Theta^(l) + <S^(l), Theta^(l)>) + P(Theta)`.
///
/// Returns `f64::INFINITY` when some `Theta^(l)` is not positive definite.
pub fn primal_objective(theta: &MatrixCollection, data: &ProblemData) -> Result<f64> {
    theta.check_shape(&data.s, "primal_objective")?;
    let mut total = 0.0;
    for (t, s) in theta.iter().zip(data.s.iter()) {
        let f = sym_eig(t)?;
        if !is_positive_definite(&f) {
            return Ok(f64::INFINITY);
        }
        let logdet: f64 = f.values.iter().map(|d| d.ln()).sum();
        total += -logdet + t.dot(s);
    }
    Ok(total + fgl_penalty(theta, data.lambda1, data.lambda2))
}
