pub mod compare;
pub mod diagnose;
pub mod eval;
pub mod gen_data;
pub mod sweep;
pub mod train;

use anyhow::{bail, Context};
use plmr_core::corpus::{load_jsonl, Corpus};
use plmr_core::rationalizer::{ModelSize, PlmrConfig, RnpConfig};
use plmr_core::trainer::{ModelConfig, TrainConfig};
use std::path::Path;

pub(crate) struct DataDir {
    pub train: Corpus,
    pub dev: Corpus,
    pub test: Corpus,
}

pub(crate) fn load_data_dir(dir: &Path) -> anyhow::Result<DataDir> {
    let load = |name: &str| {
        load_jsonl(dir.join(name)).with_context(|| format!("loading {}/{name}", dir.display()))
    };
    Ok(DataDir {
        train: load("train.jsonl")?,
        dev: load("dev.jsonl")?,
        test: load("test.jsonl")?,
    })
}

/// Toy defaults sized to the corpus at hand: the vocabulary must cover
/// every token id and max_len the longest sequence.
pub(crate) fn default_plmr_config(data: &DataDir) -> PlmrConfig {
    let mut cfg = PlmrConfig::default_config(ModelSize::Base);
    let max_id = data
        .train
        .max_token_id()
        .max(data.dev.max_token_id())
        .max(data.test.max_token_id());
    let max_len = data.train.max_len().max(data.dev.max_len()).max(data.test.max_len());
    cfg.encoder.vocab_size = cfg.encoder.vocab_size.max(max_id + 1);
    cfg.encoder.max_len = cfg.encoder.max_len.max(max_len);
    cfg
}

pub(crate) fn default_train_config(model: ModelConfig) -> TrainConfig {
    let mut tc = TrainConfig::new(model);
    tc.epochs = 10;
    tc.batch_size = 16;
    tc
}

/// Read a complete training configuration. Unknown keys are errors: silent
/// typos in experiment configs are the main reproducibility hazard.
pub(crate) fn load_train_config(path: &Path) -> anyhow::Result<TrainConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let config: TrainConfig = serde_json::from_str(&text)
        .with_context(|| format!("parsing config {}", path.display()))?;
    config.validate()?;
    Ok(config)
}

/// The capacity-matched baseline arm for a split-model training config.
pub(crate) fn rnp_arm_of(config: &TrainConfig) -> anyhow::Result<TrainConfig> {
    let plmr = match &config.model {
        ModelConfig::Plmr(c) => c,
        ModelConfig::Rnp(_) => bail!("expected a split-model configuration"),
    };
    let mut arm = config.clone();
    arm.model = ModelConfig::Rnp(RnpConfig::matching(plmr));
    Ok(arm)
}
