//! `teleportsim` — experiments with single-photon packet teleportation over
//! an energy–time entangled pair.
//!
//! Exit codes: 0 success, 1 run or check failure, 2 configuration error.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::DetuningRange;
use config::{OutputFormat, RunConfig};
use error::CliError;

#[derive(Parser)]
#[command(
    name = "teleportsim",
    about = "Simulate teleportation of a single-photon wave packet via an \
             energy-time entangled pair",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON configuration file; built-in defaults apply when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format override.
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
    /// Switch the outcome policy to seeded sampling.
    #[arg(long)]
    seed: Option<u64>,
    /// Coupling value; repeat to provide the list for the scaling fit.
    #[arg(long = "chi")]
    chi: Vec<f64>,
}

#[derive(Args)]
struct RangeArgs {
    /// Smallest detuning (pump minus detector frequency).
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    detuning_min: f64,
    /// Largest detuning.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    detuning_max: f64,
    /// Number of sweep points.
    #[arg(long, default_value_t = 1)]
    detuning_steps: usize,
}

impl RangeArgs {
    fn range(&self) -> DetuningRange {
        DetuningRange {
            min: self.detuning_min,
            max: self.detuning_max,
            steps: self.detuning_steps,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the teleportation protocol once and report the fidelity record.
    Teleport(CommonArgs),
    /// Sweep the measured sum frequency away from the pump and tabulate
    /// weight and fidelity per detuning.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        range: RangeArgs,
    },
    /// Run the two-crystal optical scheme; JSON reports the run record and
    /// coupling exponent, CSV sweeps the detector frequency.
    Scheme {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        range: RangeArgs,
    },
    /// Run the invariant check suite and report pass/fail per check.
    Check {
        #[command(flatten)]
        common: CommonArgs,
        /// Drop half the time nodes (negative control: completeness must fail).
        #[arg(long)]
        truncate_time_grid: bool,
    },
}

fn load_config(common: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    config.apply_overrides(
        common.seed,
        &common.chi,
        common.out.as_deref().and_then(|p| p.to_str()),
        common.format,
    );
    Ok(config)
}

fn emit(config: &RunConfig, text: &str) -> Result<(), CliError> {
    match &config.output.path {
        None => {
            print!("{text}");
            Ok(())
        }
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::Run {
            component: "io",
            message: format!("cannot write {path}: {e}"),
        }),
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Teleport(common) => {
            let config = load_config(&common)?;
            let text = commands::cmd_teleport(&config)?;
            emit(&config, &text)
        }
        Command::Sweep { common, range } => {
            let config = load_config(&common)?;
            let text = commands::cmd_sweep(&config, range.range())?;
            emit(&config, &text)
        }
        Command::Scheme { common, range } => {
            let config = load_config(&common)?;
            let text = commands::cmd_scheme(&config, range.range())?;
            emit(&config, &text)
        }
        Command::Check { common, truncate_time_grid } => {
            let config = load_config(&common)?;
            let (text, all_passed) = commands::cmd_check(&config, truncate_time_grid)?;
            emit(&config, &text)?;
            if all_passed {
                Ok(())
            } else {
                Err(CliError::ChecksFailed)
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            err.report();
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
