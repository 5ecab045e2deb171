//! Scenario-driven command line for the price-dynamics library.
//!
//! Three verbs, all reading a single JSON scenario file:
//!
//! * `run <file>` — integrate the configured dynamics, write the declared
//!   CSV/JSON artifacts, print the summary to stdout.
//! * `analyze <file>` — print the characteristic-rate report of the
//!   scenario's two-price model (no simulation).
//! * `sweep <file> --param <path> --grid <v1,v2,...>` — rerun the scenario
//!   over a grid of one scalar field, printing a CSV table with one row per
//!   grid point.
//!
//! Exit codes: 0 success, 2 parse error, 3 validation error, 4 numeric
//! blow-up (with partial outputs flushed). Errors are mirrored to stderr as
//! one-line JSON. `--quiet` silences progress chatter on stderr.

mod error;
mod exec;
mod scenario;
mod summary;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "pricedyn",
    version,
    about = "Run, analyze, and sweep price-dynamics scenarios from JSON files"
)]
struct Cli {
    /// Suppress progress messages on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a scenario and write its declared artifacts.
    Run {
        /// Scenario JSON file.
        file: PathBuf,
    },
    /// Print the characteristic-rate report for a two-price scenario.
    Analyze {
        /// Scenario JSON file.
        file: PathBuf,
    },
    /// Rerun a scenario across a grid of one scalar parameter.
    Sweep {
        /// Scenario JSON file.
        file: PathBuf,
        /// Dot-separated path of the scalar field to vary
        /// (e.g. dynamics.gamma or model.delta).
        #[arg(long)]
        param: String,
        /// Comma-separated grid values, tried in order.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        grid: Vec<f64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let default_level = if cli.quiet { "error" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(default_level))
        .init();
    let result = match &cli.command {
        Command::Run { file } => exec::cmd_run(file, cli.quiet),
        Command::Analyze { file } => exec::cmd_analyze(file, cli.quiet),
        Command::Sweep { file, param, grid } => exec::cmd_sweep(file, param, grid, cli.quiet),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_stderr_json());
            ExitCode::from(e.exit_code())
        }
    }
}
