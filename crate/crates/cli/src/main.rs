//! `gppm`: fit, forecast, simulate, compare, detect and dashboard commands.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

use crate::config::{Overrides, RunConfig};
use crate::error::CliResult;

#[derive(Debug, Parser)]
#[command(
    name = "gppm",
    version,
    about = "Gaussian process propensity model for customer spending"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration. Missing sections take their defaults; unknown
    /// keys are rejected. Relative paths resolve against the file's directory.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for sampling, prediction and simulation (overrides the file).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Days of calendar time held out from training [default: 30].
    #[arg(long = "holdout-days", global = true)]
    holdout_days: Option<u32>,

    /// Output directory [default: <config dir>/out].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Estimate the model and save draws, a parameter table and diagnostics.
    Fit,
    /// Fit on all but the holdout days and score the forecast.
    Forecast,
    /// Write a synthetic panel and its ground truth.
    Simulate,
    /// Fit GPPM, rGPPM, rGPPM-c, BG/NBD and log-logistic models and tabulate fit.
    Compare,
    /// Refit on expanding windows and emit the calendar curves of each.
    Detect,
    /// Render curve panels from a saved draw file.
    Dashboard,
}

fn run(cli: &Cli) -> CliResult<()> {
    let ov = Overrides {
        seed: cli.seed,
        holdout_days: cli.holdout_days,
        out: cli.out.clone(),
    };
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p, &ov)?,
        None => {
            return Err(error::CliError::Config {
                path: ".".into(),
                message: "--config is required".into(),
            })
        }
    };
    match cli.command {
        Command::Fit => commands::fit(&cfg),
        Command::Forecast => commands::forecast(&cfg),
        Command::Simulate => commands::simulate(&cfg),
        Command::Compare => commands::compare(&cfg),
        Command::Detect => commands::detect(&cfg),
        Command::Dashboard => commands::dashboard(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let defaults = serde_json::to_string_pretty(&RunConfig::default()).unwrap_or_default();
    let matches = Cli::command()
        .after_long_help(format!("Configuration defaults:\n{defaults}"))
        .get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
