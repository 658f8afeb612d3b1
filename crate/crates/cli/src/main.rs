//! `inarmix`: simulate, diagnose, cluster and evaluate panels of count time series.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 unreadable
//! input, 4 malformed input, 5 every candidate model failed.

mod commands;
mod config;
mod error;
mod io;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};

use commands::{baseline, diagnose, eval, fit, simulate, study};
use config::FileConfig;

#[derive(Debug, Parser)]
#[command(
    name = "inarmix",
    version,
    about = "Cluster panels of count time series with INAR mixtures"
)]
struct Cli {
    /// TOML file with default settings; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Repeat for more log output (-v info, -vv debug).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw labelled panels from a scenario.
    Simulate(simulate::SimulateArgs),
    /// Autocorrelation and dispersion diagnostics.
    Diagnose(diagnose::DiagnoseArgs),
    /// Fit candidate mixtures and keep the one with the best BIC.
    Fit(fit::FitArgs),
    /// Adjusted Rand index between two labelings.
    Eval(eval::EvalArgs),
    /// DTW distances with fuzzy C-medoids clustering.
    Baseline(baseline::BaselineArgs),
    /// Run simulation scenarios and summarise them.
    Study(study::StudyArgs),
}

fn run(cli: &Cli) -> error::CliResult<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Simulate(a) => simulate::run(a, &file),
        Command::Diagnose(a) => diagnose::run(a, &file),
        Command::Fit(a) => fit::run(a, &file),
        Command::Eval(a) => eval::run(a),
        Command::Baseline(a) => baseline::run(a, &file),
        Command::Study(a) => study::run(a, &file),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
