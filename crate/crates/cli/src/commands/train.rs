use super::{default_plmr_config, default_train_config, load_data_dir, load_train_config};
use crate::{MaskModeArg, ModelKind, RunManifest};
use anyhow::{bail, Context};
use plmr_core::rationalizer::{MaskMode, RnpConfig};
use plmr_core::trainer::{
    evaluate, load_checkpoint, resume, train, ModelConfig, TrainConfig,
};
use std::path::PathBuf;

pub struct Args {
    pub model: ModelKind,
    pub config: Option<PathBuf>,
    pub data: PathBuf,
    pub seed: u64,
    pub out: PathBuf,
    pub resume: Option<PathBuf>,
    pub mask_mode: Option<MaskModeArg>,
    pub loss_mean: bool,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub alpha: Option<f64>,
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let data = load_data_dir(&args.data)?;

    let mut config = match &args.config {
        Some(path) => load_train_config(path)?,
        None => {
            let plmr = default_plmr_config(&data);
            let model = match args.model {
                ModelKind::Plmr => ModelConfig::Plmr(plmr),
                ModelKind::Rnp => ModelConfig::Rnp(RnpConfig::matching(&plmr)),
            };
            default_train_config(model)
        }
    };
    let wants = matches!(args.model, ModelKind::Plmr);
    let has = matches!(config.model, ModelConfig::Plmr(_));
    if wants != has {
        bail!("--model does not match the model type in the configuration file");
    }

    config.seed = args.seed;
    config.loss_mean = args.loss_mean;
    if let Some(epochs) = args.epochs {
        config.epochs = epochs;
    }
    if let Some(batch) = args.batch_size {
        config.batch_size = batch;
    }
    apply_overrides(&mut config, args.mask_mode, args.alpha);
    config.validate()?;

    let outputs = vec![
        args.out.join("last.ckpt"),
        args.out.join("best.ckpt"),
        args.out.join("trace.csv"),
        args.out.join("trace.json"),
        args.out.join("eval.json"),
    ];
    RunManifest::new("train", serde_json::to_value(&config)?, args.seed, outputs)
        .write(&args.out)?;

    let outcome = match &args.resume {
        Some(ckpt_path) => {
            let ckpt = load_checkpoint(ckpt_path)
                .with_context(|| format!("loading checkpoint {}", ckpt_path.display()))?;
            println!("resuming from epoch {} of {}", ckpt.epoch + 1, config.epochs);
            resume(&config, &data.train, &data.dev, Some(&args.out), ckpt)?
        }
        None => train(&config, &data.train, &data.dev, Some(&args.out))?,
    };

    std::fs::write(args.out.join("trace.csv"), outcome.trace.to_csv())?;
    std::fs::write(
        args.out.join("trace.json"),
        serde_json::to_string_pretty(&outcome.trace)?,
    )?;

    let eval = evaluate(&outcome.model, &data.test)?;
    let report = super::eval::report_json(&eval);
    std::fs::write(
        args.out.join("eval.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    println!(
        "done: best dev F1 {:.3}; test S {:.3} ACC {:.3} P {:.3} R {:.3} F1 {:.3}",
        outcome.best_dev_f1,
        eval.metrics.s,
        eval.metrics.acc,
        eval.metrics.precision,
        eval.metrics.recall,
        eval.metrics.f1,
    );
    Ok(())
}

fn apply_overrides(config: &mut TrainConfig, mask_mode: Option<MaskModeArg>, alpha: Option<f64>) {
    let mode = mask_mode.map(|m| match m {
        MaskModeArg::StatesOnly => MaskMode::StatesOnly,
        MaskModeArg::StatesAndBias => MaskMode::StatesAndBias,
    });
    match &mut config.model {
        ModelConfig::Plmr(c) => {
            if let Some(mode) = mode {
                c.mask_mode = mode;
            }
            if let Some(alpha) = alpha {
                c.alpha = alpha;
            }
        }
        ModelConfig::Rnp(c) => {
            if let Some(mode) = mode {
                c.mask_mode = mode;
            }
            if let Some(alpha) = alpha {
                c.alpha = alpha;
            }
        }
    }
}
