//! Command-line front end: `run`, `diagnose`, `sweep-epsilon` and `export`.
//!
//! Exit codes: 0 success, 2 configuration error, 3 stopping rule not met
//! within the round limit, 4 any other failure.

mod commands;
mod config;
mod run_dir;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

pub use commands::{
    cmd_diagnose, cmd_export, cmd_run, cmd_sweep_epsilon, default_out, diagnose, export_posterior, open_run, oracle_available,
    reference_for, sample_marginals, sweep_epsilon, sweep_summary, DiagnosticsReport, KlEntry, MarginalExport, PosteriorExport, SweepRow,
};
pub use config::{Algorithm, DiagnosticsSpec, ObservationSpec, PosteriorSpec, PriorSpec, Resolved, RunConfig, SimulatorSpec};
pub use run_dir::{write_atomic, RunDir, RunHistory, RunLock, RunState, CONFIG_FILE, LOCK_FILE, ROUNDS_FILE};

use crate::error::Error;

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NOT_CONVERGED: u8 = 3;
pub const EXIT_FAILURE: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "tmnre", version, about = "Truncated marginal neural ratio estimation")]
pub struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,

    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run TMNRE or MNRE and export posteriors.
    Run(ConfigArgs),
    /// Compare a finished run against the reference posterior.
    Diagnose {
        /// Run directory.
        #[arg(long)]
        run: PathBuf,
    },
    /// Repeat TMNRE over a list of ε thresholds.
    SweepEpsilon {
        #[command(flatten)]
        base: ConfigArgs,
        /// Comma-separated thresholds, e.g. 1e-2,1e-4,1e-6.
        #[arg(long, value_delimiter = ',', required = true)]
        epsilons: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        repetitions: usize,
    },
    /// Re-emit posterior CSVs from a finished run.
    Export {
        #[arg(long)]
        run: PathBuf,
        /// Target directory (defaults to the run's posterior/).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(args: &ConfigArgs) -> crate::Result<(Resolved, PathBuf)> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let out = args
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| default_out(&args.config));
    Ok((cfg.resolve()?, out))
}

fn exit_for(e: &Error) -> u8 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        _ => EXIT_FAILURE,
    }
}

fn execute(cli: Cli) -> crate::Result<u8> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(Error::Config(vec!["--workers must be at least 1".into()]));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the worker pool: {e}");
        }
    }
    match cli.command {
        Command::Run(args) => {
            let (res, out) = load(&args)?;
            let state = cmd_run(&res, &out)?;
            println!("run written to {} ({state:?})", out.display());
            Ok(if state == RunState::MaxRounds { EXIT_NOT_CONVERGED } else { 0 })
        }
        Command::Diagnose { run } => {
            let report = cmd_diagnose(&run)?;
            if let Some(c) = &report.c2st {
                println!("c2st 1-d mean: {:?}, 2-d mean: {:?}", c.mean_1d, c.mean_2d);
            }
            println!("boundary check: {}", if report.boundary.pass { "pass" } else { "fail" });
            for n in &report.notices {
                println!("note: {n}");
            }
            Ok(0)
        }
        Command::SweepEpsilon {
            base,
            epsilons,
            repetitions,
        } => {
            let (res, out) = load(&base)?;
            let rows = cmd_sweep_epsilon(&res, &epsilons, repetitions, &out)?;
            let failed = rows.iter().filter(|r| r.error.is_some()).count();
            println!("{} runs written to {} ({failed} failed)", rows.len(), out.join("sweep.csv").display());
            Ok(0)
        }
        Command::Export { run, out } => {
            let e = cmd_export(&run, out.as_deref())?;
            println!("exported {} marginals", e.marginals.len());
            Ok(0)
        }
    }
}

/// Entry point used by the binary.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_for(&e))
        }
    }
}
