//! Command-line front end: simulate a dataset, train, evaluate, diagnose a
//! single recording and run the ablation study.

pub mod checkpoint;
pub mod commands;
pub mod config;
mod error;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use error::{CliError, CliResult};

use commands::Console;
use config::RunConfig;

/// Caps rayon's worker threads.
pub const THREADS_ENV: &str = "MOTORGRAPH_THREADS";

#[derive(Debug, Parser)]
#[command(name = "motorgraph", version, about = "Window-graph fault diagnosis for induction machines")]
pub struct Cli {
    /// JSON run configuration; omitted sections take defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, overriding `paths.out`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Suppress progress messages.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize the labelled recording catalog.
    Simulate,
    /// Train a model on a dataset directory.
    Train {
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Score a checkpoint on its test split.
    Evaluate {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Diagnose one recording CSV; prints JSON.
    Diagnose {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Recording CSV (`t` then one column per channel).
        recording: Option<PathBuf>,
    },
    /// Train and test all four model variants on one split.
    Ablate {
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
}

fn pick(flag: Option<PathBuf>, file: &Option<PathBuf>, what: &'static str, flag_name: &'static str, key: &'static str) -> CliResult<PathBuf> {
    flag.or_else(|| file.clone())
        .ok_or(CliError::MissingPath { what, flag: flag_name, key })
}

/// Loads the config file (if any), applies flag overrides and resolves
/// derived seeds.
pub fn resolve_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.paths.out = Some(out.clone());
    }
    config.resolve()
}

/// Runs one invocation. Diagnosis JSON is returned for printing.
pub fn run(cli: Cli) -> CliResult<Option<String>> {
    let mut config = resolve_config(&cli)?;
    let console = Console { quiet: cli.quiet };
    let paths = config.paths.clone();
    let out = || pick(None, &paths.out, "output directory", "--out", "out");
    match cli.command {
        Command::Simulate => {
            let out = out()?;
            config.paths.out = Some(out.clone());
            commands::cmd_simulate(&config, &out, console)?;
        }
        Command::Train { dataset } => {
            let dataset = pick(dataset, &paths.dataset, "dataset directory", "--dataset", "dataset")?;
            let out = out()?;
            config.paths.dataset = Some(dataset.clone());
            commands::cmd_train(&config, &dataset, &out, console)?;
        }
        Command::Evaluate { checkpoint, dataset } => {
            let checkpoint = pick(checkpoint, &paths.checkpoint, "checkpoint", "--checkpoint", "checkpoint")?;
            let dataset = pick(dataset, &paths.dataset, "dataset directory", "--dataset", "dataset")?;
            let out = out()?;
            commands::cmd_evaluate(&checkpoint, &dataset, &out, console)?;
        }
        Command::Diagnose { checkpoint, recording } => {
            let checkpoint = pick(checkpoint, &paths.checkpoint, "checkpoint", "--checkpoint", "checkpoint")?;
            let recording = pick(recording, &paths.recording, "recording CSV", "RECORDING", "recording")?;
            let report = commands::cmd_diagnose(&checkpoint, &recording)?;
            let json = serde_json::to_string_pretty(&report).expect("diagnosis serializes");
            return Ok(Some(json));
        }
        Command::Ablate { dataset } => {
            let dataset = pick(dataset, &paths.dataset, "dataset directory", "--dataset", "dataset")?;
            let out = out()?;
            config.paths.dataset = Some(dataset.clone());
            commands::cmd_ablate(&config, &dataset, &out, console)?;
        }
    }
    Ok(None)
}
