//! `telapart`: synthesize, calibrate, train, diagnose and evaluate.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::Loaded;

/// Failures the CLI itself detects, each with its own exit status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("configuration is not calibrated; missing: {0} (run `train`)")]
    Uncalibrated(String),
    #[error("unknown {0}")]
    UnknownEntity(String),
}

#[derive(Parser)]
#[command(name = "telapart", version, about = "Maintenance versus service fault diagnosis from device telemetry")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Override the configuration's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to one per core.
    #[arg(long)]
    jobs: Option<usize>,
    /// Train on data up to this epoch second, evaluate on data after it.
    #[arg(long)]
    split_ts: Option<f64>,
    /// Similarity mesh step for every feature.
    #[arg(long)]
    mesh_step: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate labeled synthetic telemetry, tickets and ground truth.
    Synth(Common),
    /// Calibrate epoch detection and the missing threshold.
    Calibrate(Common),
    /// Calibrate every hyper-parameter from telemetry and tickets.
    Train(Common),
    /// Diagnose every device once per day; writes diagnosis.csv.
    Batch(Common),
    /// Diagnose the device of one ticket at its open time.
    Reactive {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        ticket: String,
    },
    /// Score diagnoses against tickets and, when present, ground truth.
    Eval(Common),
}

fn exit_code(e: &anyhow::Error) -> u8 {
    use telapart_core::Error as E;
    for cause in e.chain() {
        if let Some(c) = cause.downcast_ref::<CliError>() {
            return match c {
                CliError::Config(_) => 2,
                CliError::Uncalibrated(_) => 4,
                CliError::UnknownEntity(_) => 5,
            };
        }
        if let Some(c) = cause.downcast_ref::<E>() {
            return match c {
                E::InvalidConfig(_)
                | E::MalformedRow { .. }
                | E::UnknownChannel { .. }
                | E::UnknownKind { .. }
                | E::Io { .. } => 2,
                E::NoTickets | E::NoMaintenanceTickets => 3,
                E::UnknownDevice(_) => 5,
                _ => 1,
            };
        }
    }
    1
}

fn load(common: &Common) -> anyhow::Result<Loaded> {
    let mut l = Loaded::read(&common.config)?;
    let c = &mut l.config;
    if let Some(s) = common.seed {
        c.seed = s;
    }
    if let Some(t) = common.split_ts {
        c.split_ts = Some(t);
    }
    if let Some(step) = common.mesh_step {
        if !(step > 0.0) {
            return Err(CliError::Config(format!("mesh step must be positive, got {step}")).into());
        }
        c.mesh_step.pearson = step;
        c.mesh_step.missing = step;
    }
    if let Some(n) = common.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--jobs {n}: {e}")))?;
    }
    Ok(l)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Synth(c) => commands::synth(&load(c)?),
        Command::Calibrate(c) => commands::calibrate(&load(c)?),
        Command::Train(c) => commands::train(&load(c)?),
        Command::Batch(c) => commands::batch(&load(c)?),
        Command::Reactive { common, ticket } => commands::reactive(&load(common)?, ticket),
        Command::Eval(c) => commands::eval(&load(c)?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
