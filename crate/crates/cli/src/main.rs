//! `voilab`: deterministic analyses of Bayesian demand learning in growing
//! markets. Each subcommand reads an optional `[section]` of a TOML config
//! file plus `key=value` overrides, and writes CSV/JSON with a metadata
//! header (or prints to stdout when no output path is set).
//!
//! Exit codes: 0 success, 2 invalid configuration, 3 numerical failure.

mod commands;
mod config;
mod output;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// CLI failure with the exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(voilab_core::Error),
    Io(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "invalid configuration: {msg}"),
            CliError::Core(err) => write!(f, "{err}"),
            CliError::Io(msg) => write!(f, "{msg}"),
        }
    }
}

impl From<voilab_core::Error> for CliError {
    fn from(err: voilab_core::Error) -> Self {
        CliError::Core(err)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use voilab_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(E::Config(_) | E::Domain(_)) => 2,
            CliError::Core(
                E::SingularInnovation { .. } | E::NoConvergence { .. } | E::GridEscape(_),
            ) => 3,
            CliError::Io(_) => 1,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "voilab",
    version,
    about = "Demand-learning laboratory: filtering, steady states, value-of-information sweeps, simulation, and dynamic pricing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML config file with one `[section]` per subcommand.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Parameter overrides, e.g. `d=1.1 h=0:0.25:50`. Overrides win over the
    /// config file.
    #[arg(value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Deterministic covariance/gain/weight schedule of the filter.
    Filter(RunArgs),
    /// Long-run covariance by fixed-point iteration (with closed-form echo).
    Steady(RunArgs),
    /// Stage VoI and pro-rata curves over a signal-noise sweep.
    VoiSweep(RunArgs),
    /// Growth band in which the curvature classifier puts a maximum at h=0.
    Region(RunArgs),
    /// Monte Carlo simulation of the myopic pricing loop.
    Simulate(RunArgs),
    /// Value iteration for the price-dependent-learning model.
    Bellman(RunArgs),
    /// Learning-pressure term against its large-noise limit.
    EulerLimit(RunArgs),
}

fn dispatch(command: &Command) -> Result<(), CliError> {
    match command {
        Command::Filter(args) => {
            let params = config::resolve("filter", args.config.as_deref(), &args.set)?;
            commands::run_filter(&params)
        }
        Command::Steady(args) => {
            let params = config::resolve("steady", args.config.as_deref(), &args.set)?;
            commands::run_steady(&params)
        }
        Command::VoiSweep(args) => {
            let params = config::resolve("voi-sweep", args.config.as_deref(), &args.set)?;
            commands::run_voi_sweep(&params)
        }
        Command::Region(args) => {
            let params = config::resolve("region", args.config.as_deref(), &args.set)?;
            commands::run_region(&params)
        }
        Command::Simulate(args) => {
            let params = config::resolve("simulate", args.config.as_deref(), &args.set)?;
            commands::run_simulate(&params)
        }
        Command::Bellman(args) => {
            let params = config::resolve("bellman", args.config.as_deref(), &args.set)?;
            commands::run_bellman(&params)
        }
        Command::EulerLimit(args) => {
            let params = config::resolve("euler-limit", args.config.as_deref(), &args.set)?;
            commands::run_euler_limit(&params)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
