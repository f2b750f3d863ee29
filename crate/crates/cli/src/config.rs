//! Run configuration: defaults, then flags, then a TOML file on top.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use fgl_core::admm::AdmmParams;
use fgl_core::rppa::RppaParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverChoice {
    Rppa,
    Admm,
}

/// Keys accepted in a `--config` file. Every key is optional; a key that is
/// present wins over the matching flag.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub solver: Option<SolverChoice>,
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    /// `(lambda1, lambda2)` pairs for `bench`.
    pub grid: Option<Vec<[f64; 2]>>,
    pub tol: Option<f64>,
    pub sigma0: Option<f64>,
    /// rPPA outer iterations or ADMM iterations.
    pub max_iter: Option<usize>,
    pub warm_start_iters: Option<usize>,
    pub tau: Option<f64>,
    pub seed: Option<u64>,
    pub p: Option<usize>,
    pub classes: Option<usize>,
    pub m: Option<usize>,
    pub n: Option<usize>,
    pub cov: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub trace: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn load_opt(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
    }
}

/// Solver flags shared by `solve` and `bench`.
#[derive(Debug, Clone, Default, Args)]
pub struct SolverArgs {
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub lambda2: Option<f64>,
    /// Target relative KKT residual.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub sigma0: Option<f64>,
    /// Outer iterations for rPPA, iterations for ADMM.
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// ADMM iterations used to warm-start rPPA.
    #[arg(long)]
    pub warm_start_iters: Option<usize>,
    /// ADMM multiplier step length.
    #[arg(long)]
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    pub tol: f64,
    pub rppa: RppaParams,
    pub admm: AdmmParams,
}

impl SolverSettings {
    pub fn resolve(args: &SolverArgs, cfg: &RunConfig) -> Result<Self> {
        let tol = cfg.tol.or(args.tol).unwrap_or(1e-6);
        if tol.is_nan() || tol <= 0.0 {
            bail!("tol must be positive, got {tol}");
        }
        let mut rppa = RppaParams { tol, ..RppaParams::default() };
        let mut admm = AdmmParams { tol, ..AdmmParams::default() };
        if let Some(s) = cfg.sigma0.or(args.sigma0) {
            rppa.sigma0 = s;
            admm.sigma0 = s;
        }
        if let Some(k) = cfg.max_iter.or(args.max_iter) {
            rppa.max_outer = k;
            admm.max_iter = k;
        }
        if let Some(k) = cfg.warm_start_iters.or(args.warm_start_iters) {
            rppa.warm_start_iters = k;
        }
        if let Some(t) = cfg.tau.or(args.tau) {
            admm.tau = t;
            rppa.admm.tau = t;
        }
        rppa.validate()?;
        admm.validate()?;
        Ok(SolverSettings { tol, rppa, admm })
    }
}

pub fn required<T>(value: Option<T>, name: &str) -> Result<T> {
    match value {
        Some(v) => Ok(v),
        None => bail!("missing --{name} (flag or config key)"),
    }
}
