use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

use fgl_core::admm::admm_solve;
use fgl_core::data::{
    edge_metrics, gen_nearest_neighbour, log_entropy_covariances, nnz_by_mass, objective_difference,
    sample_covariances, EdgeMetrics,
};
use fgl_core::io::{read_obs, read_smc, write_obs, write_smc};
use fgl_core::report::{format_hms, OuterRecord, SolverReport};
use fgl_core::rppa::rppa_solve;
use fgl_core::{MatrixCollection, ProblemData};

use crate::config::{required, RunConfig, SolverChoice, SolverSettings};

/// Whether every solve reached its tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Done,
    NotConverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub p: usize,
    pub classes: usize,
    pub m: usize,
    pub n: usize,
    pub seed: u64,
    pub base_edges: usize,
    pub n_edges_true: usize,
    pub truth: String,
    pub observations: Vec<String>,
}

pub struct GenArgs {
    pub p: usize,
    pub classes: usize,
    pub m: usize,
    pub n: usize,
    pub seed: u64,
    pub out: PathBuf,
}

pub fn cmd_gen(a: &GenArgs) -> Result<Manifest> {
    let inst = gen_nearest_neighbour(a.p, a.classes, a.m, a.seed)?.with_samples(a.n)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let truth = "truth.smc".to_string();
    write_smc(a.out.join(&truth), &inst.true_precisions)?;
    let mut observations = Vec::with_capacity(a.classes);
    for (l, obs) in inst.samples.iter().enumerate() {
        let name = format!("class{}.obs", l + 1);
        write_obs(a.out.join(&name), obs)?;
        observations.push(name);
    }
    let manifest = Manifest {
        p: a.p,
        classes: a.classes,
        m: a.m,
        n: a.n,
        seed: a.seed,
        base_edges: inst.base_edges.len(),
        n_edges_true: inst.n_edges_true,
        truth,
        observations,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(a.out.join("manifest.json"), json + "\n")?;
    Ok(manifest)
}

/// Covariances of observation files, or of term-count files with `log_entropy`.
pub fn cmd_cov(inputs: &[PathBuf], out: &Path, log_entropy: bool) -> Result<MatrixCollection> {
    ensure!(!inputs.is_empty(), "no input files");
    let obs = inputs
        .iter()
        .map(|p| read_obs(p).with_context(|| format!("reading {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    let cov = if log_entropy { log_entropy_covariances(&obs)? } else { sample_covariances(&obs)? };
    write_smc(out, &cov).with_context(|| format!("writing {}", out.display()))?;
    Ok(cov)
}

pub fn cmd_metrics(est: &Path, truth: &Path, zero_tol: f64) -> Result<EdgeMetrics> {
    let est = read_smc(est).with_context(|| format!("reading {}", est.display()))?;
    let truth = read_smc(truth).with_context(|| format!("reading {}", truth.display()))?;
    Ok(edge_metrics(&est, &truth, zero_tol)?)
}

/// One solver run, as written by `solve` and `bench`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub grid: usize,
    pub solver: SolverChoice,
    pub lambda1: f64,
    pub lambda2: f64,
    pub status: RunStatus,
    pub iterations: usize,
    pub newton: usize,
    pub cg: usize,
    pub warm_start_iters: usize,
    pub time_secs: f64,
    /// Absent for failed runs and when not finite.
    pub eta: Option<f64>,
    pub objective: Option<f64>,
    pub nnz: usize,
    pub density: f64,
    /// `(obj_admm - obj_rppa) / (1 + |obj_admm| + |obj_rppa|)` when both ran.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tp_edges: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fp_edges: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    NotConverged,
    Failed,
}

impl RunRecord {
    fn from_report(grid: usize, solver: SolverChoice, lambda: [f64; 2], rep: &SolverReport) -> Self {
        let nnz = nnz_by_mass(&rep.theta, 0.999);
        let (p, l) = (rep.theta.dim(), rep.theta.len());
        RunRecord {
            grid,
            solver,
            lambda1: lambda[0],
            lambda2: lambda[1],
            status: if rep.converged { RunStatus::Converged } else { RunStatus::NotConverged },
            iterations: rep.outer_iters,
            newton: rep.total_newton,
            cg: rep.total_cg,
            warm_start_iters: rep.warm_start_iters,
            time_secs: rep.elapsed.as_secs_f64(),
            eta: rep.kkt_residual.is_finite().then_some(rep.kkt_residual),
            objective: rep.objective.is_finite().then_some(rep.objective),
            nnz,
            density: nnz as f64 / (p * p * l) as f64,
            delta: None,
            tp_edges: None,
            fp_edges: None,
            sse: None,
            error: None,
        }
    }

    fn failed(grid: usize, solver: SolverChoice, lambda: [f64; 2], err: String) -> Self {
        RunRecord {
            grid,
            solver,
            lambda1: lambda[0],
            lambda2: lambda[1],
            status: RunStatus::Failed,
            iterations: 0,
            newton: 0,
            cg: 0,
            warm_start_iters: 0,
            time_secs: 0.0,
            eta: None,
            objective: None,
            nnz: 0,
            density: 0.0,
            delta: None,
            tp_edges: None,
            fp_edges: None,
            sse: None,
            error: Some(err),
        }
    }

    fn add_metrics(&mut self, m: &EdgeMetrics) {
        self.tp_edges = Some(m.tp_edges);
        self.fp_edges = Some(m.fp_edges);
        self.sse = Some(m.sse);
    }

    pub fn table_header() -> String {
        format!(
            "{:>4} {:<5} {:>9} {:>9} {:>7} {:>7} {:>7} {:>11} {:>9} {:>18} {:>7} {:>8} {:>10}  {}",
            "grid", "algo", "lambda1", "lambda2", "iter", "newton", "cg", "time", "eta", "objective", "nnz", "density",
            "delta", "status"
        )
    }

    pub fn table_row(&self) -> String {
        let delta = self.delta.map_or_else(|| "-".to_string(), |d| format!("{d:.2e}"));
        let eta = self.eta.map_or_else(|| "-".to_string(), |v| format!("{v:.2e}"));
        let objective = self.objective.map_or_else(|| "-".to_string(), |v| format!("{v:.10e}"));
        let status = match (&self.status, &self.error) {
            (RunStatus::Failed, Some(e)) => format!("FAILED: {e}"),
            (RunStatus::Failed, None) => "FAILED".to_string(),
            (RunStatus::NotConverged, _) => "not converged".to_string(),
            (RunStatus::Converged, _) => "ok".to_string(),
        };
        format!(
            "{:>4} {:<5} {:>9.3e} {:>9.3e} {:>7} {:>7} {:>7} {:>11} {:>9} {:>18} {:>7} {:>8.4} {:>10}  {}",
            self.grid,
            solver_name(self.solver),
            self.lambda1,
            self.lambda2,
            self.iterations,
            self.newton,
            self.cg,
            format_hms(self.time_secs),
            eta,
            objective,
            self.nnz,
            self.density,
            delta,
            status
        )
    }
}

fn solver_name(s: SolverChoice) -> &'static str {
    match s {
        SolverChoice::Rppa => "rppa",
        SolverChoice::Admm => "admm",
    }
}

fn run_solver(solver: SolverChoice, data: &ProblemData, settings: &SolverSettings) -> fgl_core::Result<SolverReport> {
    match solver {
        SolverChoice::Rppa => rppa_solve(data, &settings.rppa, None),
        SolverChoice::Admm => admm_solve(data, &settings.admm, None),
    }
}

/// Trace sink: JSON lines when the path ends in `.jsonl` or `.json`, text otherwise.
pub struct TraceWriter {
    out: BufWriter<File>,
    json: bool,
}

impl TraceWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let json = matches!(path.extension().and_then(|e| e.to_str()), Some("jsonl" | "json"));
        let file = File::create(path).with_context(|| format!("creating trace {}", path.display()))?;
        Ok(TraceWriter { out: BufWriter::new(file), json })
    }

    pub fn write_run(&mut self, grid: usize, lambda: [f64; 2], trace: &[OuterRecord]) -> Result<()> {
        if !self.json {
            writeln!(self.out, "# grid {grid} lambda1 {} lambda2 {}", lambda[0], lambda[1])?;
        }
        for rec in trace {
            if self.json {
                let mut v = serde_json::to_value(rec)?;
                if let Some(obj) = v.as_object_mut() {
                    obj.insert("grid".into(), grid.into());
                }
                writeln!(self.out, "{v}")?;
            } else {
                writeln!(self.out, "{}", rec.to_text())?;
                for nr in &rec.newton {
                    writeln!(
                        self.out,
                        "    newton {:>2} |g|={:.3e} cg={:>4} step={:.3e} phi={:.12e}",
                        nr.iter, nr.grad_norm, nr.cg_iters, nr.step, nr.phi_hat
                    )?;
                }
            }
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

fn load_problem(cov: &Path, lambda: [f64; 2]) -> Result<ProblemData> {
    let s = read_smc(cov).with_context(|| format!("reading {}", cov.display()))?;
    Ok(ProblemData::new(s, lambda[0], lambda[1])?)
}

pub struct SolveArgs {
    pub cov: PathBuf,
    pub lambda: [f64; 2],
    pub solver: SolverChoice,
    pub settings: SolverSettings,
    pub out: PathBuf,
    pub trace: Option<PathBuf>,
}

/// Writes `theta.smc`, `x.smc` and `result.json` into `out`.
pub fn cmd_solve(a: &SolveArgs) -> Result<(RunRecord, Outcome)> {
    let data = load_problem(&a.cov, a.lambda)?;
    let rep = run_solver(a.solver, &data, &a.settings)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write_smc(a.out.join("theta.smc"), &rep.theta)?;
    write_smc(a.out.join("x.smc"), &rep.x)?;
    let record = RunRecord::from_report(0, a.solver, a.lambda, &rep);
    fs::write(a.out.join("result.json"), serde_json::to_string_pretty(&record)? + "\n")?;
    if let Some(path) = &a.trace {
        let mut tw = TraceWriter::create(path)?;
        tw.write_run(0, a.lambda, &rep.trace)?;
        tw.finish()?;
    }
    let outcome = if rep.converged { Outcome::Done } else { Outcome::NotConverged };
    eprintln!("{}", rep.summary());
    Ok((record, outcome))
}

pub struct BenchArgs {
    pub cov: PathBuf,
    pub truth: Option<PathBuf>,
    pub grid: Vec<[f64; 2]>,
    pub solvers: Vec<SolverChoice>,
    pub settings: SolverSettings,
    pub zero_tol: f64,
    pub out: Option<PathBuf>,
    pub trace: Option<PathBuf>,
}

/// Runs every solver at every grid point. Failures become flagged rows.
pub fn cmd_bench(a: &BenchArgs, table: &mut dyn Write) -> Result<(Vec<RunRecord>, Outcome)> {
    ensure!(!a.grid.is_empty(), "empty lambda grid");
    ensure!(!a.solvers.is_empty(), "no solvers selected");
    let s = read_smc(&a.cov).with_context(|| format!("reading {}", a.cov.display()))?;
    let truth = match &a.truth {
        Some(p) => Some(read_smc(p).with_context(|| format!("reading {}", p.display()))?),
        None => None,
    };
    let mut trace = a.trace.as_deref().map(TraceWriter::create).transpose()?;
    let mut jsonl = match &a.out {
        Some(p) => Some(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => None,
    };

    writeln!(table, "{}", RunRecord::table_header())?;
    let mut records = Vec::new();
    let mut outcome = Outcome::Done;
    for (k, &lambda) in a.grid.iter().enumerate() {
        let data = ProblemData::new(s.clone(), lambda[0], lambda[1]);
        let mut rows: Vec<RunRecord> = Vec::with_capacity(a.solvers.len());
        for &solver in &a.solvers {
            let result = data.as_ref().map_err(|e| e.to_string()).and_then(|d| {
                run_solver(solver, d, &a.settings).map_err(|e| e.to_string())
            });
            let row = match result {
                Ok(rep) => {
                    let mut row = RunRecord::from_report(k, solver, lambda, &rep);
                    if let Some(t) = &truth {
                        row.add_metrics(&edge_metrics(&rep.theta, t, a.zero_tol)?);
                    }
                    if let Some(tw) = trace.as_mut() {
                        tw.write_run(k, lambda, &rep.trace)?;
                    }
                    row
                }
                Err(e) => RunRecord::failed(k, solver, lambda, e),
            };
            rows.push(row);
        }
        let obj = |which| {
            rows.iter()
                .find(|r| r.solver == which)
                .and_then(|r| r.objective)
        };
        if let (Some(oa), Some(op)) = (obj(SolverChoice::Admm), obj(SolverChoice::Rppa)) {
            let d = objective_difference(oa, op);
            rows.iter_mut().for_each(|r| r.delta = Some(d));
        }
        for row in rows {
            if row.status != RunStatus::Converged {
                outcome = Outcome::NotConverged;
            }
            writeln!(table, "{}", row.table_row())?;
            if let Some(w) = jsonl.as_mut() {
                writeln!(w, "{}", serde_json::to_string(&row)?)?;
            }
            records.push(row);
        }
    }
    if let Some(w) = jsonl.as_mut() {
        w.flush()?;
    }
    if let Some(tw) = trace {
        tw.finish()?;
    }
    Ok((records, outcome))
}

/// The grid from the config, else a single point from `lambda1`/`lambda2`.
pub fn resolve_grid(cfg: &RunConfig, lambda1: Option<f64>, lambda2: Option<f64>) -> Result<Vec<[f64; 2]>> {
    if let Some(grid) = &cfg.grid {
        if grid.is_empty() {
            bail!("config grid is empty");
        }
        return Ok(grid.clone());
    }
    let l1 = required(cfg.lambda1.or(lambda1), "lambda1")?;
    let l2 = required(cfg.lambda2.or(lambda2), "lambda2")?;
    Ok(vec![[l1, l2]])
}
