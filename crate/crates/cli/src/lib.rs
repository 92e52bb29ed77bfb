//! Command-line front end: synthesize, prepare, tune, train and predict.
//!
//! Every command is a plain function so tests can drive the pipeline
//! in-process. Exit codes: 0 success, 1 internal error, 2 invalid input or
//! configuration.

pub mod commands;
pub mod config;
pub mod predict;
pub mod report;

use std::ffi::OsString;

use clap::{Parser, Subcommand};
use thiserror::Error;

use config::{CommonArgs, ForestArgs, GridArgs, RunConfig, SynthArgs};

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, config, input files or data.
    #[error("{0}")]
    Invalid(String),
    /// Anything else, such as failing to write outputs.
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::Internal(_) => 1,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "synrf", version, about = "Random forest SYN flood detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a synthetic flow dataset as CSV
    Synth {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        synth: SynthArgs,
        /// Output file (default: <output-dir>/synthetic.csv)
        #[arg(long, value_name = "FILE")]
        output: Option<std::path::PathBuf>,
    },
    /// Clean a flow CSV into a numeric dataset with binary labels
    Prepare {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Cross-validate the hyperparameter grid and pick the best configuration
    Tune {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Train one configuration, evaluate it on the held-out rows, save the model
    Train {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        forest: ForestArgs,
        /// Take the configuration from a tune result instead of the forest flags
        #[arg(long, value_name = "FILE")]
        tune_result: Option<std::path::PathBuf>,
    },
    /// Label every row of a CSV with a saved model
    Predict {
        #[command(flatten)]
        common: CommonArgs,
        /// Model file written by `train`
        #[arg(long, value_name = "FILE")]
        model: Option<std::path::PathBuf>,
    },
}

/// Parses `args` (program name first) and runs the command.
pub fn run_from<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Invalid(e.to_string()))?;
    run(cli)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = build_config(&cli.command)?;
    let threads = cfg.threads;
    let go = move || match cli.command {
        Command::Synth { .. } => commands::cmd_synth(&cfg),
        Command::Prepare { .. } => commands::cmd_prepare(&cfg),
        Command::Tune { .. } => commands::cmd_tune(&cfg).map(|_| ()),
        Command::Train { .. } => commands::cmd_train(&cfg).map(|_| ()),
        Command::Predict { .. } => commands::cmd_predict(&cfg).map(|_| ()),
    };
    match threads {
        Some(0) => Err(CliError::Invalid("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Internal(format!("cannot start thread pool: {e}")))?
            .install(go),
        None => go(),
    }
}

fn build_config(command: &Command) -> Result<RunConfig, CliError> {
    Ok(match command {
        Command::Synth { common, synth, output } => {
            let mut cfg = RunConfig::load(common)?;
            cfg.apply_synth(synth);
            if output.is_some() {
                cfg.output = output.clone();
            }
            cfg
        }
        Command::Prepare { common } => RunConfig::load(common)?,
        Command::Tune { common, grid } => {
            let mut cfg = RunConfig::load(common)?;
            cfg.apply_grid(grid);
            cfg
        }
        Command::Train { common, forest, tune_result } => {
            let mut cfg = RunConfig::load(common)?;
            cfg.apply_forest(forest);
            if tune_result.is_some() {
                cfg.tune_result = tune_result.clone();
            }
            cfg
        }
        Command::Predict { common, model } => {
            let mut cfg = RunConfig::load(common)?;
            if model.is_some() {
                cfg.model = model.clone();
            }
            cfg
        }
    })
}
