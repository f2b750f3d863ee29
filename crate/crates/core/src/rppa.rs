//! Regularized proximal point method for the fused graphical Lasso.
//!
//! Each outer step approximately maximizes the strongly concave subproblem of
//! [`crate::ssn`] and sets `Theta^{k+1} = Prox_{sigma_k P}(U_k(X^{k+1}))`,
//! `Omega^{k+1} = phi_plus_{sigma_k}(W_k(X^{k+1}))`. The inner solve stops once
//!
//! ```text
//! (A)  |grad| <= eps_k / sigma_k
//! (B)  |grad| <= (delta_k / sigma_k) |(Theta^{k+1}, Omega^{k+1}) - (Theta^k, Omega^k)|
//! ```
//!
//! both hold, with (B) checked against the update the current inner iterate
//! would produce.

use std::time::Instant;

use crate::admm::{admm_solve, inverse_residual, AdmmParams, AdmmState};
use crate::error::{FglError, Result};
use crate::linalg::MatrixCollection;
use crate::prox::{primal_objective, prox_fgl, ProblemData};
use crate::report::{OuterRecord, SolverKind, SolverReport};
use crate::ssn::{ssn_solve, Evaluation, SsnParams, SubproblemContext};

#[derive(Debug, Clone, PartialEq)]
pub struct RppaParams {
    /// Target `eta_P`.
    pub tol: f64,
    pub sigma0: f64,
    pub sigma_growth: f64,
    pub sigma_max: f64,
    /// `eps_k = eps0 * eps_ratio^k`.
    pub eps0: f64,
    pub eps_ratio: f64,
    /// `delta_k = delta0 * delta_ratio^k`.
    pub delta0: f64,
    pub delta_ratio: f64,
    pub max_outer: usize,
    /// ADMM iterations spent on the warm start; 0 starts from identities.
    pub warm_start_iters: usize,
    /// The warm start stops once `eta_A <= warm_start_factor * tol`.
    pub warm_start_factor: f64,
    /// Inner solves also stop when the gradient norm falls below this
    /// multiple of `1 + |Theta^k|`; below it the gradient is rounding noise.
    pub inner_floor: f64,
    pub ssn: SsnParams,
    /// Settings of the warm-start ADMM; `tol` and `max_iter` are overridden.
    pub admm: AdmmParams,
}

impl Default for RppaParams {
    fn default() -> Self {
        RppaParams {
            tol: 1e-6,
            sigma0: 1.0,
            sigma_growth: 1.6,
            sigma_max: 1e6,
            eps0: 0.5,
            eps_ratio: 0.7,
            delta0: 0.5,
            delta_ratio: 0.7,
            max_outer: 100,
            warm_start_iters: 200,
            warm_start_factor: 100.0,
            inner_floor: 1e-13,
            ssn: SsnParams::default(),
            admm: AdmmParams::default(),
        }
    }
}

impl RppaParams {
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("tol", self.tol),
            ("sigma0", self.sigma0),
            ("eps0", self.eps0),
            ("delta0", self.delta0),
            ("warm_start_factor", self.warm_start_factor),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(FglError::NonPositive { name, value });
            }
        }
        if !(self.sigma_growth >= 1.0) || !(self.sigma_max >= self.sigma0) {
            return Err(FglError::InvalidInput(
                "sigma schedule needs sigma_growth >= 1 and sigma_max >= sigma0".into(),
            ));
        }
        // geometric sequences are summable only with ratio < 1
        if !(self.eps_ratio > 0.0 && self.eps_ratio < 1.0 && self.delta_ratio > 0.0 && self.delta_ratio < 1.0) {
            return Err(FglError::InvalidInput("eps_ratio and delta_ratio must lie in (0, 1)".into()));
        }
        if !(self.inner_floor >= 0.0) {
            return Err(FglError::InvalidInput("inner_floor must be non-negative".into()));
        }
        self.ssn.validate()
    }
}

/// The three terms of `eta_P`.
pub fn kkt_residual_primal_parts(
    theta: &MatrixCollection,
    omega: &MatrixCollection,
    x: &MatrixCollection,
    data: &ProblemData,
) -> Result<[f64; 3]> {
    theta.check_shape(&data.s, "Theta")?;
    omega.check_shape(&data.s, "Omega")?;
    x.check_shape(&data.s, "X")?;
    let nt = 1.0 + theta.norm();
    let mut shifted = theta + x;
    shifted.axpy(-1.0, &data.s);
    let prox = prox_fgl(&shifted, data.lambda1, data.lambda2)?;
    let r1 = (theta - &prox).norm() / nt;
    let r2 = (theta - omega).norm() / nt;
    let r3 = inverse_residual(omega, x);
    Ok([r1, r2, r3])
}

/// `eta_P = max{|Theta - Prox_P(Theta + X - S)| / (1 + |Theta|), |Theta - Omega| / (1 + |Theta|),
/// max_l |Omega^(l) X^(l) - I| / (1 + sqrt p)}`.
pub fn kkt_residual_primal(
    theta: &MatrixCollection,
    omega: &MatrixCollection,
    x: &MatrixCollection,
    data: &ProblemData,
) -> Result<f64> {
    Ok(kkt_residual_primal_parts(theta, omega, x, data)?.into_iter().fold(0.0, f64::max))
}

/// Starting triple for rPPA.
#[derive(Debug, Clone)]
pub struct WarmStart {
    pub theta: MatrixCollection,
    pub omega: MatrixCollection,
    pub x: MatrixCollection,
    pub admm_iters: usize,
    pub admm_eta: f64,
}

/// At most `iters` ADMM iterations from identities, stopping at
/// `eta_A <= tol_factor * tol`; returns `(Theta_admm, Theta_admm, X_admm)`.
pub fn warm_start(
    data: &ProblemData,
    iters: usize,
    tol: f64,
    tol_factor: f64,
    admm: &AdmmParams,
) -> Result<WarmStart> {
    let (p, l) = (data.dim(), data.classes());
    if iters == 0 {
        return Ok(WarmStart {
            theta: MatrixCollection::identity(p, l),
            omega: MatrixCollection::identity(p, l),
            x: MatrixCollection::identity(p, l),
            admm_iters: 0,
            admm_eta: f64::INFINITY,
        });
    }
    let params = AdmmParams { tol: tol_factor * tol, max_iter: iters, ..admm.clone() };
    let rep = admm_solve(data, &params, Some(AdmmState::identity_start(data, params.sigma0)))?;
    Ok(WarmStart {
        omega: rep.theta.clone(),
        theta: rep.theta,
        x: rep.x,
        admm_iters: rep.outer_iters,
        admm_eta: rep.kkt_residual,
    })
}

/// Solves the FGL problem to `eta_P <= params.tol`.
///
/// Without `init` the starting point comes from [`warm_start`].
pub fn rppa_solve(
    data: &ProblemData,
    params: &RppaParams,
    init: Option<(MatrixCollection, MatrixCollection, MatrixCollection)>,
) -> Result<SolverReport> {
    params.validate()?;
    let start = Instant::now();
    let (mut theta, mut omega, mut x, warm_iters) = match init {
        Some((t, o, x)) => {
            t.check_shape(&data.s, "initial Theta")?;
            o.check_shape(&data.s, "initial Omega")?;
            x.check_shape(&data.s, "initial X")?;
            (t, o, x, 0)
        }
        None => {
            let ws = warm_start(data, params.warm_start_iters, params.tol, params.warm_start_factor, &params.admm)?;
            (ws.theta, ws.omega, ws.x, ws.admm_iters)
        }
    };

    let mut eta = kkt_residual_primal(&theta, &omega, &x, data)?;
    let mut sigma = params.sigma0;
    let mut trace = Vec::new();
    let (mut outer, mut total_newton, mut total_cg) = (0, 0, 0);
    let (mut eps_k, mut delta_k) = (params.eps0, params.delta0);

    while eta > params.tol && outer < params.max_outer {
        let ctx = SubproblemContext::new(theta.clone(), omega.clone(), x.clone(), sigma, data)?;
        let floor = params.inner_floor * (1.0 + theta.norm());
        let mut stop = |ev: &Evaluation| -> bool {
            let g = ev.grad_norm;
            if g <= floor {
                return true;
            }
            if g > eps_k / sigma {
                return false;
            }
            let step = ((&ev.theta - &ctx.theta_k).norm_squared_total()
                + (&ev.omega - &ctx.omega_k).norm_squared_total())
            .sqrt();
            if g <= delta_k / sigma * step {
                return true;
            }
            // the candidate may already solve the whole problem
            kkt_residual_primal(&ev.theta, &ev.omega, &ev.x, data).is_ok_and(|e| e <= params.tol)
        };
        let out = ssn_solve(&ctx, &x, &params.ssn, &mut stop).map_err(|e| match e {
            FglError::LineSearch { backtracks, grad_norm, slope, .. } => FglError::LineSearch {
                iteration: outer,
                backtracks,
                grad_norm,
                slope,
            },
            other => other,
        })?;
        outer += 1;
        total_newton += out.newton_iters;
        total_cg += out.cg_iters;
        let ev = out.eval;
        theta = ev.theta;
        omega = ev.omega;
        x = ev.x;
        eta = kkt_residual_primal(&theta, &omega, &x, data)?;
        trace.push(OuterRecord {
            solver: SolverKind::Rppa,
            iter: outer,
            sigma,
            eta,
            inner_iters: out.newton_iters,
            cg_iters: out.cg_iters,
            objective: primal_objective(&theta, data)?,
            elapsed_secs: start.elapsed().as_secs_f64(),
            newton: out.trace,
        });
        sigma = (sigma * params.sigma_growth).min(params.sigma_max);
        eps_k *= params.eps_ratio;
        delta_k *= params.delta_ratio;
    }

    let objective = primal_objective(&theta, data)?;
    Ok(SolverReport {
        solver: SolverKind::Rppa,
        theta,
        omega,
        x,
        z: None,
        kkt_residual: eta,
        objective,
        outer_iters: outer,
        total_newton,
        total_cg,
        warm_start_iters: warm_iters,
        trace,
        converged: eta <= params.tol,
        elapsed: start.elapsed(),
    })
}
