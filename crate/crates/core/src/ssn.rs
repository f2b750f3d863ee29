//! Semismooth Newton method for the strongly concave rPPA subproblem.
//!
//! With anchors `(Theta^k, Omega^k, X^k)` and `sigma > 0` the subproblem
//! maximizes
//!
//! ```text
//! phi_hat(X) = min_{Theta, Omega} P(Theta) + <S - X, Theta> - sum_l log det Omega^(l)
//!              + <X, Omega> + |Theta - Theta^k|^2 / (2 sigma) + |Omega - Omega^k|^2 / (2 sigma)
//!              - |X - X^k|^2 / (2 sigma)
//! ```
//!
//! whose inner minimizers are `Theta* = Prox_{sigma P}(U)` with
//! `U = Theta^k + sigma (X - S)` and `Omega*^(l) = phi_plus_sigma(W^(l))` with
//! `W^(l) = Omega^k^(l) - sigma X^(l)`. The gradient is `Omega* - Theta* - (X - X^k) / sigma`.

use nalgebra::DMatrix;

use crate::error::{FglError, Result};
use crate::jacobian::{fgl_jacobian, NewtonOperator, PhiDerivativeCache};
use crate::linalg::{sym_eig, EigenFactorization, MatrixCollection};
use crate::prox::{fgl_penalty, moreau_env_fgl, moreau_env_logdet, phi_plus, phi_plus_scalar, prox_fgl, ProblemData};
use crate::report::NewtonRecord;

#[derive(Debug, Clone, PartialEq)]
pub struct SsnParams {
    /// Armijo slope, in `(0, 1/2)`.
    pub mu: f64,
    /// Cap on the CG residual, in `(0, 1)`.
    pub eta_bar: f64,
    /// CG residual target `min(eta_bar, |grad|^(1 + tau))`, `tau` in `(0, 1]`.
    pub tau: f64,
    /// Backtracking factor, in `(0, 1)`.
    pub rho: f64,
    pub max_newton: usize,
    pub max_cg: usize,
    pub max_backtracks: usize,
    /// CG never aims below this multiple of the right-hand side norm.
    pub cg_rel_floor: f64,
}

impl Default for SsnParams {
    fn default() -> Self {
        SsnParams {
            mu: 1e-4,
            eta_bar: 1e-2,
            tau: 0.5,
            rho: 0.5,
            max_newton: 50,
            max_cg: 500,
            max_backtracks: 60,
            cg_rel_floor: 1e-12,
        }
    }
}

impl SsnParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(FglError::InvalidInput(format!("SSN parameter {what}")));
        if !(self.mu > 0.0 && self.mu < 0.5) {
            return bad("mu must lie in (0, 1/2)");
        }
        if !(self.eta_bar > 0.0 && self.eta_bar < 1.0) {
            return bad("eta_bar must lie in (0, 1)");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return bad("rho must lie in (0, 1)");
        }
        if !(self.cg_rel_floor >= 0.0 && self.cg_rel_floor < 1.0) {
            return bad("cg_rel_floor must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Anchors and step size of one rPPA subproblem.
#[derive(Debug, Clone)]
pub struct SubproblemContext<'a> {
    pub theta_k: MatrixCollection,
    pub omega_k: MatrixCollection,
    pub x_k: MatrixCollection,
    pub sigma: f64,
    pub data: &'a ProblemData,
}

impl<'a> SubproblemContext<'a> {
    pub fn new(
        theta_k: MatrixCollection,
        omega_k: MatrixCollection,
        x_k: MatrixCollection,
        sigma: f64,
        data: &'a ProblemData,
    ) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(FglError::NonPositive { name: "sigma", value: sigma });
        }
        theta_k.check_shape(&data.s, "Theta^k")?;
        omega_k.check_shape(&data.s, "Omega^k")?;
        x_k.check_shape(&data.s, "X^k")?;
        Ok(SubproblemContext { theta_k, omega_k, x_k, sigma, data })
    }

    /// `U(X) = Theta^k + sigma (X - S)`.
    pub fn prox_input(&self, x: &MatrixCollection) -> MatrixCollection {
        let mut u = self.theta_k.clone();
        u.axpy(self.sigma, x);
        u.axpy(-self.sigma, &self.data.s);
        u
    }

    /// `W^(l)(X) = Omega^k^(l) - sigma X^(l)`.
    pub fn logdet_input(&self, x: &MatrixCollection) -> MatrixCollection {
        let mut w = self.omega_k.clone();
        w.axpy(-self.sigma, x);
        w
    }
}

/// Everything computed at one point `X`, reused by the Newton step.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub x: MatrixCollection,
    pub u: MatrixCollection,
    /// `Prox_{sigma P}(U)`: the candidate `Theta^{k+1}`.
    pub theta: MatrixCollection,
    /// `phi_plus_sigma(W)`: the candidate `Omega^{k+1}`.
    pub omega: MatrixCollection,
    pub w_eigs: Vec<EigenFactorization>,
    pub value: f64,
    pub grad: MatrixCollection,
    pub grad_norm: f64,
}

/// Value, gradient and caches of `phi_hat` at `x`.
///
/// The value is assembled from the inner minimizers directly, which avoids
/// the cancellation between `|U|^2` and the envelope in the textbook form.
pub fn grad_phi_hat(ctx: &SubproblemContext<'_>, x: &MatrixCollection) -> Result<Evaluation> {
    x.check_shape(&ctx.data.s, "X")?;
    let sigma = ctx.sigma;
    let data = ctx.data;
    let u = ctx.prox_input(x);
    let theta = prox_fgl(&u, sigma * data.lambda1, sigma * data.lambda2)?;
    let w = ctx.logdet_input(x);
    let mut w_eigs = Vec::with_capacity(w.len());
    let mut omega_mats = Vec::with_capacity(w.len());
    let mut logdet = 0.0;
    for wl in w.iter() {
        let eig = sym_eig(wl)?;
        logdet += eig.values.iter().map(|&d| phi_plus_scalar(d, sigma).ln()).sum::<f64>();
        omega_mats.push(phi_plus(&eig, sigma)?);
        w_eigs.push(eig);
    }
    let omega = MatrixCollection::from_symmetric(omega_mats, x.dim());

    let inv2s = 0.5 / sigma;
    let value = fgl_penalty(&theta, data.lambda1, data.lambda2)
        + theta.dot(&data.s)
        - theta.dot(x)
        + inv2s * (&theta - &ctx.theta_k).norm_squared_total()
        - logdet
        + omega.dot(x)
        + inv2s * (&omega - &ctx.omega_k).norm_squared_total()
        - inv2s * (x - &ctx.x_k).norm_squared_total();

    let mut grad = &omega - &theta;
    grad.axpy(-1.0 / sigma, x);
    grad.axpy(1.0 / sigma, &ctx.x_k);
    let grad_norm = grad.norm();
    Ok(Evaluation { x: x.clone(), u, theta, omega, w_eigs, value, grad, grad_norm })
}

/// `phi_hat(X)`.
pub fn eval_phi_hat(ctx: &SubproblemContext<'_>, x: &MatrixCollection) -> Result<f64> {
    grad_phi_hat(ctx, x).map(|e| e.value)
}

/// `phi_hat(X)` through the two Moreau envelopes, e.g. the penalty part is
/// `env_{sigma P}(U) / sigma + (|Theta^k|^2 - |U|^2) / (2 sigma)`.
/// Mathematically equal to [`eval_phi_hat`]; loses accuracy when `|U|` is large.
pub fn eval_phi_hat_envelope(ctx: &SubproblemContext<'_>, x: &MatrixCollection) -> Result<f64> {
    x.check_shape(&ctx.data.s, "X")?;
    let sigma = ctx.sigma;
    let inv2s = 0.5 / sigma;
    let u = ctx.prox_input(x);
    let w = ctx.logdet_input(x);
    let mut total = moreau_env_fgl(&u, sigma, ctx.data.lambda1, ctx.data.lambda2)? / sigma
        + inv2s * (ctx.theta_k.norm_squared_total() - u.norm_squared_total());
    for wl in w.iter() {
        total += moreau_env_logdet(&sym_eig(wl)?, sigma)? / sigma;
    }
    total += inv2s * (ctx.omega_k.norm_squared_total() - w.norm_squared_total());
    Ok(total - inv2s * (x - &ctx.x_k).norm_squared_total())
}

/// Newton operator at an evaluated point.
pub fn newton_operator(ctx: &SubproblemContext<'_>, ev: &Evaluation) -> Result<NewtonOperator> {
    let jac = fgl_jacobian(&ev.u, ctx.sigma, ctx.data.lambda1, ctx.data.lambda2)?;
    let caches = ev
        .w_eigs
        .iter()
        .map(|e| PhiDerivativeCache::new(e.clone(), ctx.sigma))
        .collect::<Result<Vec<_>>>()?;
    NewtonOperator::new(jac, caches, ctx.sigma)
}

/// A self-adjoint linear map on matrix collections.
pub trait LinearOperator {
    fn apply(&self, x: &MatrixCollection) -> Result<MatrixCollection>;
}

impl LinearOperator for NewtonOperator {
    fn apply(&self, x: &MatrixCollection) -> Result<MatrixCollection> {
        self.apply_with_stats(x).map(|(y, _)| y)
    }
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub solution: MatrixCollection,
    pub iterations: usize,
    /// `|N[D] - rhs|` as tracked by the recurrence.
    pub residual: f64,
    pub converged: bool,
}

/// Solves `N[D] = rhs` for negative definite `N` by running conjugate
/// gradients on the positive definite system `-N[D] = -rhs`, from `D = 0`.
pub fn cg_solve(
    op: &impl LinearOperator,
    rhs: &MatrixCollection,
    tol: f64,
    max_iter: usize,
) -> Result<CgOutcome> {
    let mut d = MatrixCollection::zeros(rhs.dim(), rhs.len());
    // residual of the negated system: -rhs - (-N[d]) = -rhs at d = 0
    let mut r = rhs * -1.0;
    let mut rr = r.dot(&r);
    let mut res = rr.sqrt();
    if res <= tol {
        return Ok(CgOutcome { solution: d, iterations: 0, residual: res, converged: true });
    }
    let mut dir = r.clone();
    for it in 1..=max_iter {
        let mut q = op.apply(&dir)?;
        q.scale_mut(-1.0);
        let curvature = dir.dot(&q);
        if !(curvature > 0.0) || !curvature.is_finite() {
            return Err(FglError::CgBreakdown {
                iterations: it,
                curvature,
                partial: Box::new(d),
            });
        }
        let alpha = rr / curvature;
        d.axpy(alpha, &dir);
        r.axpy(-alpha, &q);
        let rr_new = r.dot(&r);
        res = rr_new.sqrt();
        if res <= tol {
            return Ok(CgOutcome { solution: d, iterations: it, residual: res, converged: true });
        }
        let beta = rr_new / rr;
        rr = rr_new;
        dir.scale_mut(beta);
        dir.axpy(1.0, &r);
    }
    Ok(CgOutcome { solution: d, iterations: max_iter, residual: res, converged: false })
}

#[derive(Debug, Clone)]
pub struct SsnOutcome {
    /// Evaluation at the returned iterate.
    pub eval: Evaluation,
    pub newton_iters: usize,
    pub cg_iters: usize,
    /// The caller's stopping rule accepted `eval`.
    pub converged: bool,
    pub trace: Vec<NewtonRecord>,
}

/// Maximizes `phi_hat` from `x0` until `stop` accepts an evaluation.
///
/// `stop` is consulted before every Newton step, including at `x0`, so a
/// start that already satisfies it costs one evaluation and no steps.
pub fn ssn_solve(
    ctx: &SubproblemContext<'_>,
    x0: &MatrixCollection,
    params: &SsnParams,
    mut stop: impl FnMut(&Evaluation) -> bool,
) -> Result<SsnOutcome> {
    params.validate()?;
    let mut ev = grad_phi_hat(ctx, x0)?;
    let mut trace = Vec::new();
    let mut cg_total = 0;
    for iter in 0..params.max_newton {
        if stop(&ev) || ev.grad_norm == 0.0 {
            return Ok(SsnOutcome { eval: ev, newton_iters: iter, cg_iters: cg_total, converged: true, trace });
        }
        let op = newton_operator(ctx, &ev)?;
        let g = ev.grad_norm;
        let tol = params.eta_bar.min(g.powf(1.0 + params.tau)).max(params.cg_rel_floor * g);
        let cg = cg_solve(&op, &(&ev.grad * -1.0), tol, params.max_cg)?;
        cg_total += cg.iterations;
        let dir = cg.solution;
        let slope = ev.grad.dot(&dir);
        if !(slope > 0.0) {
            return Err(FglError::NotAscent { slope });
        }
        // Values of order |phi_hat| carry rounding noise; without slack the
        // Armijo test rejects every step once the true increase drops below it.
        let slack = 100.0 * f64::EPSILON * (1.0 + ev.value.abs());
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=params.max_backtracks {
            let mut trial = ev.x.clone();
            trial.axpy(alpha, &dir);
            let tev = grad_phi_hat(ctx, &trial)?;
            if tev.value >= ev.value + params.mu * alpha * slope - slack {
                accepted = Some(tev);
                break;
            }
            alpha *= params.rho;
        }
        let Some(next) = accepted else {
            return Err(FglError::LineSearch {
                iteration: iter,
                backtracks: params.max_backtracks,
                grad_norm: g,
                slope,
            });
        };
        trace.push(NewtonRecord {
            iter,
            grad_norm: g,
            cg_iters: cg.iterations,
            step: alpha,
            phi_hat: next.value,
        });
        ev = next;
    }
    let converged = stop(&ev);
    Ok(SsnOutcome { eval: ev, newton_iters: params.max_newton, cg_iters: cg_total, converged, trace })
}

/// `-c I` on collections; handy for exercising [`cg_solve`].
#[derive(Debug, Clone, Copy)]
pub struct ScaledNegIdentity(pub f64);

impl LinearOperator for ScaledNegIdentity {
    fn apply(&self, x: &MatrixCollection) -> Result<MatrixCollection> {
        Ok(x * -self.0)
    }
}

/// Dense symmetric operator on the packed upper triangles of a collection;
/// lets tests compare CG against a direct solve.
#[derive(Debug, Clone)]
pub struct DenseOperator {
    pub matrix: DMatrix<f64>,
    pub p: usize,
    pub classes: usize,
}

impl DenseOperator {
    fn pack(&self, x: &MatrixCollection) -> Vec<f64> {
        let mut out = Vec::new();
        for m in x.iter() {
            for j in 0..self.p {
                for i in 0..=j {
                    // off-diagonals appear twice in the Frobenius product
                    let w = if i == j { 1.0 } else { std::f64::consts::SQRT_2 };
                    out.push(w * m[(i, j)]);
                }
            }
        }
        out
    }

    fn unpack(&self, v: &[f64]) -> MatrixCollection {
        let mut k = 0;
        let mut mats = Vec::with_capacity(self.classes);
        for _ in 0..self.classes {
            let mut m = DMatrix::zeros(self.p, self.p);
            for j in 0..self.p {
                for i in 0..=j {
                    let w = if i == j { 1.0 } else { std::f64::consts::FRAC_1_SQRT_2 };
                    m[(i, j)] = w * v[k];
                    m[(j, i)] = w * v[k];
                    k += 1;
                }
            }
            mats.push(m);
        }
        MatrixCollection::from_symmetric(mats, self.p)
    }

    /// Dense matrix of `op` in the orthonormal packed basis.
    pub fn assemble(op: &impl LinearOperator, p: usize, classes: usize) -> Result<Self> {
        let n = classes * p * (p + 1) / 2;
        let mut this = DenseOperator { matrix: DMatrix::zeros(n, n), p, classes };
        for c in 0..n {
            let mut e = vec![0.0; n];
            e[c] = 1.0;
            let col = this.pack(&op.apply(&this.unpack(&e))?);
            for (r, v) in col.into_iter().enumerate() {
                this.matrix[(r, c)] = v;
            }
        }
        Ok(this)
    }

    pub fn solve(&self, rhs: &MatrixCollection) -> Option<MatrixCollection> {
        let b = nalgebra::DVector::from_vec(self.pack(rhs));
        let x = self.matrix.clone().lu().solve(&b)?;
        Some(self.unpack(x.as_slice()))
    }
}

impl LinearOperator for DenseOperator {
    fn apply(&self, x: &MatrixCollection) -> Result<MatrixCollection> {
        let v = nalgebra::DVector::from_vec(self.pack(x));
        Ok(self.unpack((&self.matrix * v).as_slice()))
    }
}
