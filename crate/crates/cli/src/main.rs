//! `evpinn`: synthesize drive logs, train the power and energy networks,
//! and evaluate them.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use config::LoadedConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("data not found: {}", .0.display())]
    DataNotFound(PathBuf),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Run(#[from] evpinn::Error),
}

impl CliError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::DataNotFound(_) => 2,
            CliError::Io { .. } | CliError::Run(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "evpinn", version, about = "Physics-informed EV battery power and energy models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Directory holding trained models (default: the output directory).
    #[arg(long)]
    models: Option<PathBuf>,
    /// Log to run on instead of the configured data.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the configured synthetic cycle as CSV.
    Synth(Common),
    /// Train the power network, then the energy network on its predictions.
    Train(Common),
    /// Compare predictions with ground-truth power and its RK4 energy.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        models: ModelArgs,
    },
    /// Predict power and cumulative energy from speed and time.
    Predict {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        models: ModelArgs,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let common = match &cli.command {
        Command::Synth(c) | Command::Train(c) => c,
        Command::Eval { common, .. } | Command::Predict { common, .. } => common,
    };
    let loaded = LoadedConfig::read(&common.config)?;
    let out = loaded.output_dir(common.out.as_deref())?;
    match &cli.command {
        Command::Synth(_) => commands::synth(&loaded, &out),
        Command::Train(_) => commands::train(&loaded, &out),
        Command::Eval { models, .. } => commands::eval(
            &loaded,
            &out,
            &commands::models_dir(models.models.as_deref(), &out),
            models.log.as_deref(),
        ),
        Command::Predict { models, .. } => commands::predict(
            &loaded,
            &out,
            &commands::models_dir(models.models.as_deref(), &out),
            models.log.as_deref(),
        ),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
