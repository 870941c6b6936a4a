//! Command-line front end: reproducible, scriptable, CSV in and out.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use opinion_cascade::csvio::CsvError;
use opinion_cascade::sequences::SequencesError;
use opinion_cascade::solver::SolverError;

/// Errors carry their exit class: 1 validation, 2 numerical, 3 I/O.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Numerical(String),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Numerical(m) | CliError::Io(m) => {
                f.write_str(m)
            }
        }
    }
}

impl From<SequencesError> for CliError {
    fn from(e: SequencesError) -> Self {
        match e {
            SequencesError::InvalidParams(_) | SequencesError::Subcritical(_) => {
                CliError::Validation(e.to_string())
            }
            SequencesError::NonConvergence { .. }
            | SequencesError::SpeedDomain { .. }
            | SequencesError::Truncated { .. } => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::Config(_)
            | SolverError::SpeedOrdering { .. }
            | SolverError::DomainTooSmall { .. } => CliError::Validation(e.to_string()),
            SolverError::CflViolation { .. } => CliError::Numerical(e.to_string()),
            SolverError::Sequences(inner) => inner.into(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<CsvError> for CliError {
    fn from(e: CsvError) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "opinion-cascade",
    version,
    about = "Analytic ladder, hierarchy simulation and front measurement for cascading opinions"
)]
struct Cli {
    /// Configuration file (flat `key = value`); defaults describe the
    /// reference setup.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory for CSV files.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Proceed despite a speed-ordering violation or an undersized domain.
    #[arg(long, global = true)]
    force: bool,
    /// Seed for the randomized self-checks.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the analytic ladder and write ladder.csv
    Sequence,
    /// Integrate the hierarchy; writes snapshot CSVs and the invariant log
    Simulate,
    /// Measure front speeds and plateaus from previously written snapshots
    Speeds,
    /// Settled-fraction sweep over initial densities (heatmap data)
    Sweep,
    /// Run the self-check suite and exit nonzero on any failure
    Check,
}

fn load_config(path: &Option<PathBuf>) -> Result<config::LabConfig, CliError> {
    match path {
        None => Ok(config::default_config()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            config::parse(&text)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let cfg = load_config(&cli.config)?;
    match cli.command {
        Command::Sequence => commands::sequence(&cfg, &cli.out),
        Command::Simulate => commands::simulate(&cfg, &cli.out, cli.force),
        Command::Speeds => commands::speeds(&cfg, &cli.out),
        Command::Sweep => commands::sweep(&cfg, &cli.out),
        Command::Check => commands::check(&cfg, cli.seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
