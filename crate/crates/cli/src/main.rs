//! `fgl`: generate instances, build covariances, solve, score and benchmark.
//!
//! Exit codes: 0 on success, 2 when a solve stops before reaching its
//! tolerance, 1 on usage, input or I/O errors.

mod commands;
mod config;

use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use commands::{
    cmd_bench, cmd_cov, cmd_gen, cmd_metrics, cmd_solve, resolve_grid, BenchArgs, GenArgs, Outcome, SolveArgs,
};
use config::{required, RunConfig, SolverArgs, SolverChoice, SolverSettings};

#[derive(Debug, Parser)]
#[command(name = "fgl", version, about = "Fused graphical Lasso solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a nearest-neighbour instance: truth.smc, classK.obs, manifest.json.
    Gen {
        #[arg(long)]
        p: Option<usize>,
        /// Number of classes.
        #[arg(long = "L", visible_alias = "classes")]
        classes: Option<usize>,
        /// Neighbours per point.
        #[arg(long)]
        m: Option<usize>,
        /// Observations per class.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Sample covariances of OBS files, one class per file, written as SMC.
    Cov {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Treat inputs as document-by-term counts and apply log-entropy weights.
        #[arg(long)]
        log_entropy: bool,
    },
    /// Solve one instance; writes theta.smc, x.smc and result.json.
    Solve {
        /// Covariance collection (SMC).
        #[arg(long)]
        cov: Option<PathBuf>,
        #[arg(long, value_enum)]
        solver: Option<SolverChoice>,
        #[command(flatten)]
        solver_args: SolverArgs,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Convergence trace; JSON lines for `.jsonl`/`.json`, text otherwise.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Edge-recovery metrics of an estimate against the truth, as flat JSON.
    Metrics {
        #[arg(long)]
        est: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Entries at most this large in magnitude count as zero.
        #[arg(long, default_value_t = 1e-6)]
        zero_tol: f64,
        /// Write the record here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the solvers over a lambda grid; table on stdout, JSON lines to --out.
    Bench {
        #[arg(long)]
        cov: Option<PathBuf>,
        /// Adds TP/FP/SSE columns.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Run only this solver; both by default.
        #[arg(long, value_enum)]
        solver: Option<SolverChoice>,
        #[command(flatten)]
        solver_args: SolverArgs,
        #[arg(long, default_value_t = 1e-6)]
        zero_tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Gen { p, classes, m, n, seed, out, config } => {
            let cfg = RunConfig::load_opt(config.as_deref())?;
            let args = GenArgs {
                p: required(cfg.p.or(p), "p")?,
                classes: required(cfg.classes.or(classes), "L")?,
                m: required(cfg.m.or(m), "m")?,
                n: required(cfg.n.or(n), "n")?,
                seed: cfg.seed.or(seed).unwrap_or(0),
                out: required(cfg.out.or(out), "out")?,
            };
            let man = cmd_gen(&args)?;
            println!(
                "wrote {} ({} true edges, {} observation files)",
                args.out.display(),
                man.n_edges_true,
                man.observations.len()
            );
            Ok(Outcome::Done)
        }
        Command::Cov { inputs, out, log_entropy } => {
            let cov = cmd_cov(&inputs, &out, log_entropy)?;
            println!("wrote {} (p = {}, L = {})", out.display(), cov.dim(), cov.len());
            Ok(Outcome::Done)
        }
        Command::Solve { cov, solver, solver_args, out, trace, config } => {
            let cfg = RunConfig::load_opt(config.as_deref())?;
            let args = SolveArgs {
                cov: required(cfg.cov.clone().or(cov), "cov")?,
                lambda: [
                    required(cfg.lambda1.or(solver_args.lambda1), "lambda1")?,
                    required(cfg.lambda2.or(solver_args.lambda2), "lambda2")?,
                ],
                solver: cfg.solver.or(solver).unwrap_or(SolverChoice::Rppa),
                settings: SolverSettings::resolve(&solver_args, &cfg)?,
                out: required(cfg.out.clone().or(out), "out")?,
                trace: cfg.trace.clone().or(trace),
            };
            let (record, outcome) = cmd_solve(&args)?;
            println!("{}", serde_json::to_string(&record)?);
            Ok(outcome)
        }
        Command::Metrics { est, truth, zero_tol, out } => {
            let m = cmd_metrics(&est, &truth, zero_tol)?;
            let json = serde_json::to_string_pretty(&m)?;
            match out {
                Some(path) => std::fs::write(&path, json + "\n").with_context(|| format!("writing {}", path.display()))?,
                None => println!("{json}"),
            }
            Ok(Outcome::Done)
        }
        Command::Bench { cov, truth, solver, solver_args, zero_tol, out, trace, config } => {
            let cfg = RunConfig::load_opt(config.as_deref())?;
            let solvers = match cfg.solver.or(solver) {
                Some(s) => vec![s],
                None => vec![SolverChoice::Rppa, SolverChoice::Admm],
            };
            let args = BenchArgs {
                cov: required(cfg.cov.clone().or(cov), "cov")?,
                truth: cfg.truth.clone().or(truth),
                grid: resolve_grid(&cfg, solver_args.lambda1, solver_args.lambda2)?,
                solvers,
                settings: SolverSettings::resolve(&solver_args, &cfg)?,
                zero_tol,
                out: cfg.out.clone().or(out),
                trace: cfg.trace.clone().or(trace),
            };
            let (_, outcome) = cmd_bench(&args, &mut io::stdout().lock())?;
            Ok(outcome)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::NotConverged) => {
            eprintln!("fgl: stopped before reaching the tolerance");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("fgl: {e:#}");
            ExitCode::from(1)
        }
    }
}
