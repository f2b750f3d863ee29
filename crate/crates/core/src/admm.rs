//! ADMM on the dual problem
//!
//! ```text
//! min_{X, Z} sum_l -log det X^(l) + P*(Z)   s.t.  X - Z - S = 0
//! ```
//!
//! with multiplier `Theta`, which converges to the precision matrices.
//! Used as a baseline and to warm-start the proximal point solver.

use std::time::Instant;

use crate::error::{FglError, Result};
use crate::linalg::{sym_eig, MatrixCollection};
use crate::prox::{phi_plus, primal_objective, prox_fgl, ProblemData};
use crate::report::{OuterRecord, SolverKind, SolverReport};

#[derive(Debug, Clone, PartialEq)]
pub struct AdmmParams {
    /// Multiplier step length, in `(0, (1 + sqrt 5) / 2)`.
    pub tau: f64,
    pub sigma0: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Rebalance `sigma` when one feasibility measure exceeds the other by this factor.
    pub adapt_ratio: f64,
    pub adapt_scale: f64,
    /// Iterations between rebalancing checks; 0 disables adaptation.
    pub adapt_every: usize,
    /// Iterations between trace records (the last iteration is always recorded).
    pub trace_every: usize,
}

impl Default for AdmmParams {
    fn default() -> Self {
        AdmmParams {
            tau: 1.618,
            sigma0: 1.0,
            tol: 1e-6,
            max_iter: 20000,
            adapt_ratio: 5.0,
            adapt_scale: 1.5,
            adapt_every: 20,
            trace_every: 50,
        }
    }
}

impl AdmmParams {
    pub fn validate(&self) -> Result<()> {
        let golden = (1.0 + 5f64.sqrt()) / 2.0;
        if !(self.tau > 0.0 && self.tau < golden) {
            return Err(FglError::InvalidInput(format!("ADMM tau must lie in (0, {golden:.6}), got {}", self.tau)));
        }
        if !(self.sigma0 > 0.0 && self.sigma0.is_finite()) {
            return Err(FglError::NonPositive { name: "sigma0", value: self.sigma0 });
        }
        if !(self.tol > 0.0) {
            return Err(FglError::NonPositive { name: "tol", value: self.tol });
        }
        if self.adapt_every > 0 && !(self.adapt_ratio > 1.0 && self.adapt_scale > 1.0) {
            return Err(FglError::InvalidInput("ADMM adaptation ratio and scale must exceed 1".into()));
        }
        Ok(())
    }
}

/// ADMM iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub theta: MatrixCollection,
    pub x: MatrixCollection,
    pub z: MatrixCollection,
    pub sigma: f64,
}

impl AdmmState {
    /// `X = Theta = I`, `Z = X - S`.
    pub fn identity_start(data: &ProblemData, sigma: f64) -> Self {
        let (p, l) = (data.dim(), data.classes());
        let x = MatrixCollection::identity(p, l);
        let z = &x - &data.s;
        AdmmState { theta: MatrixCollection::identity(p, l), x, z, sigma }
    }
}

/// One ADMM sweep: X-update, Z-update, multiplier update.
pub fn admm_step(state: &mut AdmmState, data: &ProblemData, tau: f64) -> Result<()> {
    let sigma = state.sigma;
    let beta = 1.0 / sigma;
    // X^(l) = phi_plus_{1/sigma}(Z^(l) - Theta^(l) / sigma + S^(l))
    let mut a = state.z.clone();
    a.axpy(-beta, &state.theta);
    a.axpy(1.0, &data.s);
    let xs = a.iter().map(|m| phi_plus(&sym_eig(m)?, beta)).collect::<Result<Vec<_>>>()?;
    state.x = MatrixCollection::from_symmetric(xs, data.dim());
    // Z = V - Prox_P(V), V = X + Theta / sigma - S: the projection onto the
    // dual-norm ball, by the Moreau decomposition with unit scaling.
    let mut v = state.x.clone();
    v.axpy(beta, &state.theta);
    v.axpy(-1.0, &data.s);
    let pv = prox_fgl(&v, data.lambda1, data.lambda2)?;
    state.z = &v - &pv;
    // Theta += tau sigma (X - Z - S)
    let mut r = &state.x - &state.z;
    r.axpy(-1.0, &data.s);
    state.theta.axpy(tau * sigma, &r);
    Ok(())
}

/// The three terms of `eta_A`.
pub fn kkt_residual_dual_parts(
    theta: &MatrixCollection,
    x: &MatrixCollection,
    z: &MatrixCollection,
    data: &ProblemData,
) -> Result<[f64; 3]> {
    theta.check_shape(&data.s, "Theta")?;
    x.check_shape(&data.s, "X")?;
    z.check_shape(&data.s, "Z")?;
    let nt = 1.0 + theta.norm();
    let prox = prox_fgl(&(theta + z), data.lambda1, data.lambda2)?;
    let r1 = (theta - &prox).norm() / nt;
    let mut feas = x - z;
    feas.axpy(-1.0, &data.s);
    let r2 = feas.norm() / (1.0 + data.s.norm());
    let r3 = inverse_residual(theta, x);
    Ok([r1, r2, r3])
}

/// `max_l |A^(l) B^(l) - I| / (1 + sqrt p)`.
pub(crate) fn inverse_residual(a: &MatrixCollection, b: &MatrixCollection) -> f64 {
    let p = a.dim();
    a.iter()
        .zip(b.iter())
        .map(|(al, bl)| {
            let mut prod = al * bl;
            for i in 0..p {
                prod[(i, i)] -= 1.0;
            }
            prod.norm()
        })
        .fold(0.0, f64::max)
        / (1.0 + (p as f64).sqrt())
}

/// `eta_A = max{|Theta - Prox_P(Theta + Z)| / (1 + |Theta|), |X - Z - S| / (1 + |S|),
/// max_l |Theta^(l) X^(l) - I| / (1 + sqrt p)}`.
pub fn kkt_residual_dual(
    theta: &MatrixCollection,
    x: &MatrixCollection,
    z: &MatrixCollection,
    data: &ProblemData,
) -> Result<f64> {
    Ok(kkt_residual_dual_parts(theta, x, z, data)?.into_iter().fold(0.0, f64::max))
}

/// Runs ADMM from `init` (identity start when absent) until `eta_A <= tol`.
pub fn admm_solve(data: &ProblemData, params: &AdmmParams, init: Option<AdmmState>) -> Result<SolverReport> {
    params.validate()?;
    let start = Instant::now();
    let mut state = init.unwrap_or_else(|| AdmmState::identity_start(data, params.sigma0));
    state.theta.check_shape(&data.s, "initial Theta")?;
    state.x.check_shape(&data.s, "initial X")?;
    state.z.check_shape(&data.s, "initial Z")?;
    if !(state.sigma > 0.0 && state.sigma.is_finite()) {
        return Err(FglError::NonPositive { name: "sigma", value: state.sigma });
    }

    let mut trace = Vec::new();
    let mut parts = kkt_residual_dual_parts(&state.theta, &state.x, &state.z, data)?;
    let mut eta = parts.into_iter().fold(0.0, f64::max);
    let mut iters = 0;
    while eta > params.tol && iters < params.max_iter {
        admm_step(&mut state, data, params.tau)?;
        iters += 1;
        parts = kkt_residual_dual_parts(&state.theta, &state.x, &state.z, data)?;
        eta = parts.into_iter().fold(0.0, f64::max);
        let done = eta <= params.tol || iters == params.max_iter;
        if done || (params.trace_every > 0 && iters % params.trace_every == 0) {
            trace.push(OuterRecord {
                solver: SolverKind::Admm,
                iter: iters,
                sigma: state.sigma,
                eta,
                inner_iters: 1,
                cg_iters: 0,
                objective: primal_objective(&state.theta, data)?,
                elapsed_secs: start.elapsed().as_secs_f64(),
                newton: Vec::new(),
            });
        }
        if !done && params.adapt_every > 0 && iters % params.adapt_every == 0 {
            let primal = parts[1];
            let dual = parts[0].max(parts[2]);
            if primal > params.adapt_ratio * dual {
                state.sigma *= params.adapt_scale;
            } else if dual > params.adapt_ratio * primal {
                state.sigma /= params.adapt_scale;
            }
        }
    }

    let objective = primal_objective(&state.theta, data)?;
    Ok(SolverReport {
        solver: SolverKind::Admm,
        omega: state.theta.clone(),
        theta: state.theta,
        x: state.x,
        z: Some(state.z),
        kkt_residual: eta,
        objective,
        outer_iters: iters,
        total_newton: 0,
        total_cg: 0,
        warm_start_iters: 0,
        trace,
        converged: eta <= params.tol,
        elapsed: start.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar_pair(a: f64, b: f64) -> MatrixCollection {
        MatrixCollection::from_fn(1, 2, |l, _, _| if l == 0 { a } else { b })
    }

    #[test]
    fn params_validation() {
        AdmmParams::default().validate().unwrap();
        assert!(AdmmParams { tau: 1.7, ..AdmmParams::default() }.validate().is_err());
        assert!(AdmmParams { sigma0: 0.0, ..AdmmParams::default() }.validate().is_err());
    }

    #[test]
    fn hand_trace_one_step_from_zeros() {
        // p = 1: no off-diagonal entries, Prox_P is the identity and Z = 0.
        let data = ProblemData::new(scalar_pair(2.0, 0.5), 0.3, 0.2).unwrap();
        let sigma = 1.5;
        let tau = 1.618;
        let mut st = AdmmState {
            theta: MatrixCollection::zeros(1, 2),
            x: MatrixCollection::zeros(1, 2),
            z: MatrixCollection::zeros(1, 2),
            sigma,
        };
        admm_step(&mut st, &data, tau).unwrap();
        for (l, s) in [2.0, 0.5].into_iter().enumerate() {
            // x solves x - 1/(sigma x) = s
            let beta = 1.0 / sigma;
            let x = 0.5 * ((s * s + 4.0 * beta).sqrt() + s);
            assert!((st.x[l][(0, 0)] - x).abs() < 1e-15);
            assert!((x - beta / x - s).abs() < 1e-14);
            assert_eq!(st.z[l][(0, 0)], 0.0);
            let theta = tau * sigma * (x - s);
            assert!((st.theta[l][(0, 0)] - theta).abs() < 1e-14);
        }
    }

    #[test]
    fn hand_trace_off_diagonal_projection() {
        // p = 2, lambda2 = 0: the Z off-diagonal is V clipped to [-lambda1, lambda1].
        let s = MatrixCollection::new(vec![
            DMatrix::from_row_slice(2, 2, &[1.0, 0.9, 0.9, 1.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, -0.1, -0.1, 1.0]),
        ])
        .unwrap();
        let data = ProblemData::new(s, 0.2, 0.0).unwrap();
        let mut st = AdmmState::identity_start(&data, 1.0);
        let theta_old = st.theta.clone();
        admm_step(&mut st, &data, 1.0).unwrap();
        // sigma = 1: V = X_new + Theta_old - S
        let v = &(&st.x + &theta_old) - &data.s;
        for l in 0..2 {
            let z = st.z[l][(0, 1)];
            let vv = v[l][(0, 1)];
            assert!((z - vv.clamp(-0.2, 0.2)).abs() < 1e-14, "l={l}: {z} vs {vv}");
            assert_eq!(st.z[l][(0, 0)], 0.0);
        }
    }

    #[test]
    fn multiplier_identity_each_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = MatrixCollection::new(
            (0..3)
                .map(|_| {
                    let a = DMatrix::from_fn(5, 5, |_, _| rng.random_range(-1.0..1.0));
                    &a * a.transpose() / 5.0 + DMatrix::identity(5, 5) * 0.5
                })
                .collect(),
        )
        .unwrap();
        let data = ProblemData::new(s, 0.1, 0.05).unwrap();
        let mut st = AdmmState::identity_start(&data, 1.0);
        for _ in 0..5 {
            let before = st.theta.clone();
            admm_step(&mut st, &data, 1.618).unwrap();
            let mut r = &st.x - &st.z;
            r.axpy(-1.0, &data.s);
            let diff = &(&st.theta - &before) - &(&r * (1.618 * st.sigma));
            assert!(diff.norm() < 1e-13);
            // X-update stationarity: X - X^{-1} / sigma equals the shifted input
            for l in 0..3 {
                let inv = st.x[l].clone().try_inverse().unwrap();
                assert!((&st.x[l] * &inv - DMatrix::<f64>::identity(5, 5)).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn trivial_instance_converges_to_identity() {
        let data = ProblemData::new(MatrixCollection::identity(3, 2), 0.0, 0.0).unwrap();
        let rep = admm_solve(&data, &AdmmParams { tol: 1e-8, ..AdmmParams::default() }, None).unwrap();
        assert!(rep.converged);
        assert!((&rep.theta - &MatrixCollection::identity(3, 2)).norm() < 1e-7);
        assert!(rep.kkt_residual <= 1e-8);
    }

    #[test]
    fn residual_isolates_feasibility() {
        let data = ProblemData::new(MatrixCollection::identity(3, 2), 0.0, 0.0).unwrap();
        let theta = MatrixCollection::identity(3, 2);
        let z = MatrixCollection::zeros(3, 2);
        let x = MatrixCollection::identity(3, 2);
        assert_eq!(kkt_residual_dual(&theta, &x, &z, &data).unwrap(), 0.0);
        let e = MatrixCollection::from_fn(3, 2, |_, i, j| if i == 0 && j == 2 { 1e-3 } else { 0.0 });
        let parts = kkt_residual_dual_parts(&theta, &(&x + &e), &z, &data).unwrap();
        assert!((parts[1] - e.norm() / (1.0 + data.s.norm())).abs() < 1e-16);
    }

    #[test]
    fn residual_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut r = || MatrixCollection::from_fn(3, 3, |_, _, _| rng.random_range(-1.0..1.0));
        let (theta, x, z, s) = (r(), r(), r(), r());
        let data = ProblemData::new(s.clone(), 0.3, 0.2).unwrap();
        let got = kkt_residual_dual(&theta, &x, &z, &data).unwrap();
        let prox = prox_fgl(&(&theta + &z), 0.3, 0.2).unwrap();
        let t1 = (&theta - &prox).norm() / (1.0 + theta.norm());
        let t2 = (&(&x - &z) - &s).norm() / (1.0 + s.norm());
        let mut t3: f64 = 0.0;
        for l in 0..3 {
            t3 = t3.max((&theta[l] * &x[l] - DMatrix::<f64>::identity(3, 3)).norm() / (1.0 + 3f64.sqrt()));
        }
        assert!((got - t1.max(t2).max(t3)).abs() < 1e-15);
    }
}
