//! Solver output and convergence traces.

use std::fmt;
use std::time::Duration;

use serde::Serialize;

use crate::linalg::MatrixCollection;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Rppa,
    Admm,
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverKind::Rppa => "rppa",
            SolverKind::Admm => "admm",
        })
    }
}

/// One semismooth Newton step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NewtonRecord {
    pub iter: usize,
    /// Gradient norm at the iterate the step starts from.
    pub grad_norm: f64,
    pub cg_iters: usize,
    pub step: f64,
    /// Subproblem value after the step.
    pub phi_hat: f64,
}

/// One outer iteration. For ADMM, `inner_iters` is 1 and `cg_iters` is 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OuterRecord {
    pub solver: SolverKind,
    pub iter: usize,
    pub sigma: f64,
    pub eta: f64,
    pub inner_iters: usize,
    pub cg_iters: usize,
    pub objective: f64,
    pub elapsed_secs: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub newton: Vec<NewtonRecord>,
}

impl OuterRecord {
    pub fn to_text(&self) -> String {
        format!(
            "{} k={:>5} sigma={:.3e} eta={:.3e} inner={:>3} cg={:>5} obj={:.10e} t={}",
            self.solver,
            self.iter,
            self.sigma,
            self.eta,
            self.inner_iters,
            self.cg_iters,
            self.objective,
            format_hms(self.elapsed_secs),
        )
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("trace records serialize")
    }
}

/// Result of a full solve.
#[derive(Debug, Clone)]
pub struct SolverReport {
    pub solver: SolverKind,
    pub theta: MatrixCollection,
    /// rPPA's split copy of `theta`; ADMM reports `theta` again.
    pub omega: MatrixCollection,
    /// Dual variable; at a solution `X^(l) = (Theta^(l))^{-1}`.
    pub x: MatrixCollection,
    /// ADMM's `Z`, absent for rPPA.
    pub z: Option<MatrixCollection>,
    /// Relative KKT residual: `eta_P` for rPPA, `eta_A` for ADMM.
    pub kkt_residual: f64,
    pub objective: f64,
    pub outer_iters: usize,
    pub total_newton: usize,
    pub total_cg: usize,
    /// ADMM iterations spent on the warm start (rPPA only).
    pub warm_start_iters: usize,
    pub trace: Vec<OuterRecord>,
    pub converged: bool,
    pub elapsed: Duration,
}

impl SolverReport {
    pub fn summary(&self) -> String {
        let inner = match self.solver {
            SolverKind::Rppa => format!(
                "outer={} newton={} cg={} warm={}",
                self.outer_iters, self.total_newton, self.total_cg, self.warm_start_iters
            ),
            SolverKind::Admm => format!("iters={}", self.outer_iters),
        };
        format!(
            "{} {} eta={:.3e} obj={:.10e} {} time={}",
            self.solver,
            if self.converged { "converged" } else { "NOT converged" },
            self.kkt_residual,
            self.objective,
            inner,
            format_hms(self.elapsed.as_secs_f64()),
        )
    }
}

/// `h:mm:ss.ss`, the layout of the timing tables.
pub fn format_hms(secs: f64) -> String {
    let secs = secs.max(0.0);
    let h = (secs / 3600.0).floor();
    let m = ((secs - 3600.0 * h) / 60.0).floor();
    let s = secs - 3600.0 * h - 60.0 * m;
    format!("{}:{:02}:{:05.2}", h as u64, m as u64, s)
}
