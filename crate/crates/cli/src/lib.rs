//! Command-line front end: reads an experiment config, runs one library
//! operation and writes CSV or JSON with a provenance header.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use thiserror::Error;

use seqdetect::ModelError;

mod commands;
pub mod config;
pub mod output;

pub use config::{ExperimentConfig, GridSpec};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_IO: i32 = 4;
pub const EXIT_NUMERIC: i32 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("numerical failure: {0}")]
    Numeric(#[from] ModelError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io { .. } => EXIT_IO,
            CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "seqdetect",
    version,
    about = "Sequential detection with social learning",
    arg_required_else_help = true
)]
pub struct Cli {
    /// Experiment config (JSON). Defaults are used when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output file; stdout when neither this nor the config's `output` is set.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for parallel sections.
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    pub threads: Option<u16>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Decision threshold and error probabilities per belief (CSV).
    Threshold,
    /// Updated beliefs for every history over a belief grid (CSV).
    UpdateBelief,
    /// Exact Bayes risk of the last agent with its breakdown (JSON).
    Risk,
    /// Exact risk over a belief grid (CSV).
    RiskSurface,
    /// Optimal initial beliefs (JSON).
    Optimize,
    /// Optimal beliefs across true priors (CSV).
    Trend,
    /// Monte Carlo risk estimate (JSON).
    Simulate {
        /// Overrides `simulation.trials`.
        #[arg(long)]
        trials: Option<u64>,
    },
    /// Conjecture scan (CSV) and theorem report (JSON).
    VerifyAppendix {
        /// Theorem report path; defaults to `<out>.theorems.json`.
        #[arg(long, value_name = "PATH")]
        report: Option<PathBuf>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Threshold => "threshold",
            Command::UpdateBelief => "update-belief",
            Command::Risk => "risk",
            Command::RiskSurface => "risk-surface",
            Command::Optimize => "optimize",
            Command::Trend => "trend",
            Command::Simulate { .. } => "simulate",
            Command::VerifyAppendix { .. } => "verify-appendix",
        }
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("seqdetect: {e}");
            e.exit_code()
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            ExperimentConfig::from_json(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Command::Simulate { trials: Some(t) } = cli.command {
        config.simulation.trials = t;
    }
    config.validate()?;
    Ok(config)
}

/// A file to write: `None` path means stdout.
pub(crate) struct Artifact {
    pub path: Option<PathBuf>,
    pub contents: String,
}

fn write_artifacts(artifacts: &[Artifact]) -> Result<(), CliError> {
    for a in artifacts {
        match &a.path {
            Some(path) => fs::write(path, &a.contents).map_err(|e| CliError::io(path, e))?,
            None => {
                let mut stdout = std::io::stdout().lock();
                stdout
                    .write_all(a.contents.as_bytes())
                    .and_then(|_| stdout.flush())
                    .map_err(|e| CliError::io(Path::new("<stdout>"), e))?;
            }
        }
    }
    Ok(())
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let config = load_config(cli)?;
    let out = cli.out.clone().or_else(|| config.output.clone());
    let job = || commands::dispatch(&cli.command, &config, out.as_deref());
    let artifacts = match cli.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.into())
            .build()
            .map_err(|e| CliError::Config(format!("cannot start {n} threads: {e}")))?
            .install(job)?,
        None => job()?,
    };
    write_artifacts(&artifacts)
}
