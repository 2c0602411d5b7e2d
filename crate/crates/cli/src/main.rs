//! `smbbayes` — four-zone SMB chromatography under a linear isotherm:
//! forward simulation, Bayesian sampling of the operating conditions, and
//! post-processing of sampled designs.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or arguments; exit code 2.
    Invalid(String),
    /// Numerical failure (integration, convergence); exit code 1.
    Numerical(String),
}

impl CliError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Self::Invalid(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Self::Numerical(msg.into())
    }

    fn exit_code(&self) -> u8 {
        match self {
            Self::Invalid(_) => 2,
            Self::Numerical(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Invalid(msg) => write!(f, "invalid input: {msg}"),
            Self::Numerical(msg) => write!(f, "numerical failure: {msg}"),
        }
    }
}

impl From<smbbayes_core::Error> for CliError {
    fn from(err: smbbayes_core::Error) -> Self {
        use smbbayes_core::Error as E;
        match err {
            E::InvalidGeometry(_)
            | E::InvalidDiscretization(_)
            | E::InvalidInput(_)
            | E::InfeasibleOperatingPoint(_)
            | E::InsufficientSamples(_) => Self::Invalid(err.to_string()),
            E::IntegrationFailure(_)
            | E::CssNotConverged { .. }
            | E::DegenerateSimulation(_)
            | E::UndefinedDiagnostic(_)
            | E::RankDeficientJacobian { .. }
            | E::Io(_) => Self::Numerical(err.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        Self::Numerical(err.to_string())
    }
}

#[derive(Parser)]
#[command(name = "smbbayes", version, about)]
struct Cli {
    /// Configuration file (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Bundled configuration preset.
    #[arg(long, global = true, value_parser = ["klatt-reference"])]
    preset: Option<String>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Random seed; overrides the configured one.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: available cores; SMBBAYES_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the configured operating point to cyclic steady state.
    Simulate,
    /// Sample operating conditions from the posterior.
    Sample {
        /// Continue from a checkpoint file.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Post-process a sample store into plot-ready tables.
    Analyze {
        /// Directory with chain and record CSVs (defaults to --out).
        #[arg(long)]
        store: Option<PathBuf>,
        /// Analyses to run: pareto, marginals, triangle, ppc, fits,
        /// ci-table, mdiff. Empty selects nothing.
        #[arg(long, value_delimiter = ',')]
        analyses: Option<Vec<String>>,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    match (&cli.config, &cli.preset) {
        (Some(_), Some(_)) => Err(CliError::invalid(
            "pass either --config or --preset, not both",
        )),
        (Some(path), None) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::invalid(format!("cannot read {}: {e}", path.display()))
            })?;
            RunConfig::from_json(&text)
        }
        (None, Some(name)) => match name.as_str() {
            "klatt-reference" => Ok(RunConfig::klatt_reference()),
            other => Err(CliError::invalid(format!("unknown preset {other:?}"))),
        },
        (None, None) => Err(CliError::invalid(
            "a configuration is required: --config PATH or --preset klatt-reference",
        )),
    }
}

fn thread_count(cli: &Cli) -> usize {
    cli.threads
        .or_else(|| {
            std::env::var("SMBBAYES_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
        .max(1)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let config = load_config(cli)?;
    std::fs::create_dir_all(&cli.out)?;
    // persist the effective configuration next to the outputs
    std::fs::write(cli.out.join("config.json"), config.to_json() + "\n")?;
    let threads = thread_count(cli);
    match &cli.command {
        Command::Simulate => commands::simulate::run(&config, &cli.out),
        Command::Sample { resume } => {
            commands::sample::run(&config, &cli.out, cli.seed, resume.as_deref())
        }
        Command::Analyze { store, analyses } => commands::analyze::run(
            &config,
            store.as_deref().unwrap_or(&cli.out),
            &cli.out,
            analyses.as_deref(),
            cli.seed,
            threads,
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("smbbayes: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
