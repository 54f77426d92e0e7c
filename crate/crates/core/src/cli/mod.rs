//! Command-line front end. Each subcommand is also callable as a library
//! function so experiments can be scripted without spawning a process.

mod experiment;
mod sweep;
mod tools;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};

pub use experiment::{
    eval_checkpoint, evaluate_model, load_run, train_experiment, train_model, validation_sets, MetricsReport,
    MultiShotSummary, RunManifest, Trained, MANIFEST_FILE, METRICS_FILE, REPORT_FILE, SCORES_FILE,
};
pub use sweep::{run_sweep, ModelKind, SweepRow};
pub use tools::{
    compress_command, compress_series, load_normalized, stream_command, stream_series, synth_command,
    CompressStats, StreamRow, StreamSummary,
};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "lossy-tcn", version, about = "Rate-distortion trained TCN autoencoder for anomaly detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write checkpoint, manifest and per-epoch report.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides training.seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep the 1-shot threshold on the validation sets of a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Also evaluate multi-shot decisions (slower: one window per sample).
        #[arg(long)]
        multi_shot: bool,
        /// Defaults to the checkpoint directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stride-1 confidence scoring of one labelled series.
    Stream {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        series: PathBuf,
        /// Defaults to detection.delta of the run.
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Entropy-code the latents of one series and verify the round trip.
    Compress {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        series: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and evaluate every (model, anomaly fraction, seed) combination.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.05])]
        p: Vec<f64>,
        #[arg(long, value_delimiter = ',', value_enum, default_values_t = vec![ModelKind::Rdo, ModelKind::Ae])]
        models: Vec<ModelKind>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0])]
        seeds: Vec<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the configured synthetic corpus as CSV files.
    Synth {
        #[arg(long)]
        config: PathBuf,
        /// Overrides data.synth_seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        Error::NonFinite(_) => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, seed, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.training.seed = s;
            }
            let out = out.unwrap_or_else(|| cfg.output_dir.clone());
            let trained = train_experiment(&cfg, &out)?;
            print_json(&serde_json::json!({
                "config_sha256": cfg.sha256(),
                "checkpoint": out,
                "best_epoch": trained.report.best_epoch,
                "final": trained.report.last(),
            }))
        }
        Command::Eval { checkpoint, multi_shot, out } => {
            let out = out.unwrap_or_else(|| checkpoint.clone());
            print_json(&eval_checkpoint(&checkpoint, multi_shot, &out)?)
        }
        Command::Stream { checkpoint, series, delta, out } => {
            print_json(&stream_command(&checkpoint, &series, delta, &out)?)
        }
        Command::Compress { checkpoint, series, out } => print_json(&compress_command(&checkpoint, &series, &out)?),
        Command::Sweep { config, p, models, seeds, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out = out.unwrap_or_else(|| cfg.output_dir.clone());
            let rows = run_sweep(&cfg, &p, &models, &seeds, &out)?;
            let failed = rows.iter().filter(|r| r.status != "ok").count();
            print_json(&serde_json::json!({ "cells": rows.len(), "failed": failed, "csv": out.join("sweep.csv") }))
        }
        Command::Synth { config, seed, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.data.synth_seed = s;
            }
            let paths = synth_command(&cfg, &out)?;
            print_json(&paths)
        }
    }
}
