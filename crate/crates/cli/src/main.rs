//! `fockdyn`: configuration-driven runs of the subsystem dynamics.
//!
//! Exit codes: 0 on success, 1 for configuration or setup errors, 2 when a
//! numerical step aborted (partial output is still written).

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Outcome;
use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error(transparent)]
    Core(#[from] fockdyn::Error),
}

#[derive(Parser)]
#[command(name = "fockdyn", version, about = "Unentangled-subsystem dynamics on small fermion lattices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Directory receiving the output files.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one trajectory.
    Run(Common),
    /// Repeat the run at halved step sizes and estimate the convergence order.
    Converge(Common),
    /// Compare beables across product orders of the same subsystems.
    Permtest(Common),
    /// Hilbert–Schmidt distance between two decompositions, minimized over a global phase.
    OrbitDistance(Common),
}

type Handler = fn(&RunConfig, &std::path::Path) -> Result<Outcome, CliError>;

fn execute(cli: Cli) -> Result<Outcome, CliError> {
    let (common, run): (&Common, Handler) = match &cli.command {
        Command::Run(c) => (c, commands::cmd_run),
        Command::Converge(c) => (c, commands::cmd_converge),
        Command::Permtest(c) => (c, commands::cmd_permtest),
        Command::OrbitDistance(c) => (c, commands::cmd_orbit_distance),
    };
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    run(&cfg, &common.out)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(Outcome::Completed) => ExitCode::SUCCESS,
        Ok(Outcome::Aborted) => {
            eprintln!("fockdyn: numerical abort; partial output written");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("fockdyn: {e}");
            ExitCode::from(1)
        }
    }
}
