//! Command-line driver for the rationalization workbench: synthetic data
//! generation, training, evaluation, diagnostics, and the scripted
//! comparison/sweep experiments.

mod commands;
mod manifest;

pub use manifest::{version_string, RunManifest};

use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

#[derive(Parser, Debug)]
#[command(name = "plmr", version, about = "Selective rationalization workbench")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Plmr,
    Rnp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MaskModeArg {
    StatesOnly,
    StatesAndBias,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic corpus: train/dev/test JSONL plus the vocab
    /// manifest.
    GenData {
        /// Corpus spec JSON; toy defaults when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Generation seed; overrides the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Train/dev/test fractions.
        #[arg(long, default_value = "0.8,0.1,0.1", value_parser = parse_fractions)]
        split: (f64, f64, f64),
    },
    /// Train a model and write checkpoints plus a per-epoch trace.
    Train {
        #[arg(long, value_enum)]
        model: ModelKind,
        /// Full training configuration JSON; built-in toy defaults when
        /// omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory holding train.jsonl / dev.jsonl / test.jsonl.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Resume from a checkpoint, bit-exactly.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Override how pruned tokens are hidden from the predictor.
        #[arg(long, value_enum)]
        mask_mode: Option<MaskModeArg>,
        /// Average the loss terms instead of summing them.
        #[arg(long)]
        loss_mean: bool,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        /// Target fraction of tokens kept.
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Evaluate a checkpoint: selection metrics and the failure grid.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        /// Test set JSONL file.
        #[arg(long)]
        data: PathBuf,
        /// Overlap thresholds for the failure grid.
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.2, 0.3])]
        theta1: Vec<f64>,
        /// Meaningless-fraction thresholds for the failure grid.
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.3, 0.4, 0.5])]
        theta2: Vec<f64>,
        /// Directory for eval.json; print-only when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Representation diagnostics: per-layer homogeneity traces and the
    /// attention-vector PCA export.
    Diagnose {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// "all" or a comma-separated list of layer indices (0 is the
        /// embedding output).
        #[arg(long, default_value = "all")]
        layers: String,
        #[arg(long)]
        out: PathBuf,
        /// Example whose attention vectors are projected.
        #[arg(long, default_value_t = 0)]
        example: usize,
    },
    /// Train the split model and the baseline over several seeds and
    /// summarize both arms.
    Compare {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        /// Number of seeds (0..n).
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Sweep one hyperparameter of the split model.
    Sweep {
        /// One of: l, m, lambda.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 3)]
        seeds: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_fractions(s: &str) -> Result<(f64, f64, f64), String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    if parts.len() != 3 {
        return Err("expected three comma-separated fractions".into());
    }
    Ok((parts[0], parts[1], parts[2]))
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenData {
            spec,
            seed,
            out,
            split,
        } => commands::gen_data::run(spec.as_deref(), seed, &out, split),
        Command::Train {
            model,
            config,
            data,
            seed,
            out,
            resume,
            mask_mode,
            loss_mean,
            epochs,
            batch_size,
            alpha,
        } => commands::train::run(commands::train::Args {
            model,
            config,
            data,
            seed,
            out,
            resume,
            mask_mode,
            loss_mean,
            epochs,
            batch_size,
            alpha,
        }),
        Command::Eval {
            ckpt,
            data,
            theta1,
            theta2,
            out,
        } => commands::eval::run(&ckpt, &data, &theta1, &theta2, out.as_deref()),
        Command::Diagnose {
            ckpt,
            data,
            layers,
            out,
            example,
        } => commands::diagnose::run(&ckpt, &data, &layers, &out, example),
        Command::Compare {
            config,
            data,
            seeds,
            out,
            alpha,
        } => commands::compare::run(config.as_deref(), &data, seeds, &out, alpha),
        Command::Sweep {
            param,
            values,
            config,
            data,
            seeds,
            out,
        } => commands::sweep::run(&param, &values, config.as_deref(), &data, seeds, &out),
    }
}
