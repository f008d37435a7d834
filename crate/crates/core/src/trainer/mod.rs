//! Training loop (combined objective, Adam, temperature anneal),
//! evaluation, checkpointing, and the scripted experiments.

mod checkpoint;
mod experiments;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use experiments::{
    compare, sweep, worker_threads, ArmSummary, CompareReport, RunSummary, SweepParam, SweepReport,
};

use crate::corpus::{Corpus, CorpusError};
use crate::diagnostics::{
    failure_grid, rationale_metrics, DiagnosticsError, FailureReport, RationaleMetrics,
    FAILURE_GRID,
};
use crate::encoder::ModelError;
use crate::objective::{
    cross_entropy, linear_alpha_schedule, match_loss, sparsity_continuity_loss, total_objective,
    AdamHyper, AdamState, LossBreakdown, ObjectiveError,
};
use crate::params::Params;
use crate::rationalizer::{PlmrConfig, PlmrModel, RnpConfig, RnpModel};
use crate::tensor::{GradientMap, Tape, TensorError, Var};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum TrainError {
    #[error("training diverged at epoch {epoch}: {source}")]
    Diverged {
        epoch: usize,
        #[source]
        source: TensorError,
        /// Most recent checkpoint written before the divergence, if any.
        last_checkpoint: Option<PathBuf>,
    },
    #[error("invalid training configuration: {0}")]
    BadConfig(String),
    #[error("checkpoint format error: {0}")]
    CheckpointFormat(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Which model a run trains.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ModelConfig {
    Plmr(PlmrConfig),
    Rnp(RnpConfig),
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        match self {
            ModelConfig::Plmr(c) => c.validate(),
            ModelConfig::Rnp(c) => c.validate(),
        }
    }

    pub fn alpha(&self) -> f64 {
        match self {
            ModelConfig::Plmr(c) => c.alpha,
            ModelConfig::Rnp(c) => c.alpha,
        }
    }
}

pub enum Model {
    Plmr(PlmrModel),
    Rnp(RnpModel),
}

impl Model {
    pub fn init(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Result<Model, ModelError> {
        Ok(match cfg {
            ModelConfig::Plmr(c) => Model::Plmr(PlmrModel::init(c.clone(), rng)?),
            ModelConfig::Rnp(c) => Model::Rnp(RnpModel::init(c.clone(), rng)?),
        })
    }

    pub fn from_parts(cfg: ModelConfig, params: Params) -> Result<Model, ModelError> {
        cfg.validate()?;
        Ok(match cfg {
            ModelConfig::Plmr(c) => Model::Plmr(PlmrModel { cfg: c, params }),
            ModelConfig::Rnp(c) => Model::Rnp(RnpModel { cfg: c, params }),
        })
    }

    pub fn config(&self) -> ModelConfig {
        match self {
            Model::Plmr(m) => ModelConfig::Plmr(m.cfg.clone()),
            Model::Rnp(m) => ModelConfig::Rnp(m.cfg.clone()),
        }
    }

    pub fn params(&self) -> &Params {
        match self {
            Model::Plmr(m) => &m.params,
            Model::Rnp(m) => &m.params,
        }
    }

    pub fn params_mut(&mut self) -> &mut Params {
        match self {
            Model::Plmr(m) => &mut m.params,
            Model::Rnp(m) => &mut m.params,
        }
    }

    /// Deterministic inference: final mask plus prediction. An empty
    /// rationale yields an all-zero mask and no prediction.
    pub fn infer(&self, tokens: &[usize]) -> Result<(Vec<f64>, Option<usize>), ModelError> {
        match self {
            Model::Plmr(m) => match m.generate(tokens) {
                Ok(r) => {
                    let logits = m.predict_rationale(tokens, &r.mask)?;
                    Ok((r.mask, Some(usize::from(logits[1] > logits[0]))))
                }
                Err(ModelError::EmptyRationale) => Ok((vec![0.0; tokens.len()], None)),
                Err(e) => Err(e),
            },
            Model::Rnp(m) => match m.generate(tokens) {
                Ok(mask) => {
                    let logits = m.predict_rationale(tokens, &mask)?;
                    Ok((mask, Some(usize::from(logits[1] > logits[0]))))
                }
                Err(ModelError::EmptyRationale) => Ok((vec![0.0; tokens.len()], None)),
                Err(e) => Err(e),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamHyper,
    /// Dev evaluation (and checkpoint) cadence in epochs.
    pub eval_every: usize,
    /// Average the four loss terms instead of summing them.
    pub loss_mean: bool,
    /// Optional global-norm gradient clip; off by default.
    pub grad_clip: Option<f64>,
    /// Halt after this many epochs while keeping the full schedule
    /// (models an interrupted run; resume picks up where it stopped).
    #[serde(default)]
    pub stop_after: Option<usize>,
}

impl TrainConfig {
    pub fn new(model: ModelConfig) -> Self {
        TrainConfig {
            model,
            epochs: 4,
            batch_size: 16,
            seed: 0,
            adam: AdamHyper::default(),
            eval_every: 1,
            loss_mean: false,
            grad_clip: None,
            stop_after: None,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs < 1 || self.batch_size < 1 || self.eval_every < 1 {
            return Err(TrainError::BadConfig(
                "epochs, batch_size and eval_every must be at least 1".into(),
            ));
        }
        self.model.validate()?;
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceRecord {
    pub epoch: usize,
    pub losses: LossBreakdown,
    pub dev: Option<RationaleMetrics>,
    pub tau: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct MetricsTrace {
    pub records: Vec<TraceRecord>,
}

impl MetricsTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "epoch,loss_total,loss_task_r,loss_task_x,loss_match,loss_s,tau,dev_s,dev_acc,dev_p,dev_r,dev_f1,seconds\n",
        );
        for r in &self.records {
            let dev = r.dev.unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.epoch,
                r.losses.total,
                r.losses.task_r,
                r.losses.task_x,
                r.losses.match_term,
                r.losses.sparsity,
                r.tau,
                dev.s,
                dev.acc,
                dev.precision,
                dev.recall,
                dev.f1,
                r.seconds,
            ));
        }
        out
    }
}

pub struct TrainOutcome {
    /// Model after the final epoch.
    pub model: Model,
    /// Parameters at the best dev-F1 evaluation point (retained alongside
    /// the best checkpoint on disk).
    pub best_params: Option<Params>,
    pub trace: MetricsTrace,
    pub best_dev_f1: f64,
}

struct LossVars {
    total: Var,
    breakdown: LossBreakdown,
}

/// Build the full split-model objective for one example on the tape.
pub fn plmr_example_loss(
    tape: &mut Tape,
    model: &PlmrModel,
    tokens: &[usize],
    label: usize,
    tau: f64,
    rng: &mut ChaCha8Rng,
    loss_mean: bool,
) -> Result<(Var, LossBreakdown), TrainError> {
    let fwd = model.forward_train(tape, tokens, tau, rng)?;
    let task_r = cross_entropy(tape, fwd.logits_r, label)?;
    let task_x = cross_entropy(tape, fwd.logits_x, label)?;
    let cfg = &model.cfg;
    let schedule = linear_alpha_schedule(cfg.m, cfg.alpha);
    let sparsity =
        sparsity_continuity_loss(tape, &fwd.constraint_masks, &schedule, cfg.lambda1, cfg.lambda2)?;
    let match_term = if cfg.lambda > 0.0 {
        match_loss(tape, task_r, task_x, cfg.lambda, cfg.match_transform)?
    } else {
        let zero_r = tape.scalar_mul(task_r, 0.0)?;
        // Keeps every parameter reachable from the total even when the
        // regularizer is ablated.
        tape.mul(zero_r, zero_r)?
    };
    let total = total_objective(tape, task_r, task_x, match_term, sparsity, loss_mean)?;
    let vars = LossVars {
        total,
        breakdown: LossBreakdown {
            task_r: tape.value(task_r).item(),
            task_x: tape.value(task_x).item(),
            match_term: tape.value(match_term).item(),
            sparsity: tape.value(sparsity).item(),
            total: tape.value(total).item(),
        },
    };
    Ok((vars.total, vars.breakdown))
}

/// Baseline objective: task loss from the rationale plus the single-layer
/// sparsity/continuity constraint.
pub fn rnp_example_loss(
    tape: &mut Tape,
    model: &RnpModel,
    tokens: &[usize],
    label: usize,
    tau: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(Var, LossBreakdown), TrainError> {
    let fwd = model.forward_train(tape, tokens, tau, rng)?;
    let task = cross_entropy(tape, fwd.logits, label)?;
    let cfg = &model.cfg;
    let schedule = linear_alpha_schedule(1, cfg.alpha);
    let sparsity =
        sparsity_continuity_loss(tape, &[fwd.constraint_mask], &schedule, cfg.lambda1, cfg.lambda2)?;
    let total = tape.add(task, sparsity)?;
    let breakdown = LossBreakdown {
        task_r: tape.value(task).item(),
        task_x: 0.0,
        match_term: 0.0,
        sparsity: tape.value(sparsity).item(),
        total: tape.value(total).item(),
    };
    Ok((total, breakdown))
}

fn anneal_tau(config: &TrainConfig, epoch: usize) -> f64 {
    match &config.model {
        ModelConfig::Plmr(c) => c.anneal.at(epoch, config.epochs),
        ModelConfig::Rnp(c) => c.anneal.at(epoch, config.epochs),
    }
}

fn shuffle(order: &mut [usize], rng: &mut ChaCha8Rng) {
    use rand::Rng;
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
}

/// Train from scratch. Deterministic given the seed: single-threaded,
/// fixed iteration order, fixed rng stream.
pub fn train(
    config: &TrainConfig,
    train_set: &Corpus,
    dev_set: &Corpus,
    checkpoint_dir: Option<&Path>,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::BadConfig("empty training corpus".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let model = Model::init(&config.model, &mut rng)?;
    let adam = AdamState::new(config.adam);
    train_loop(
        config,
        train_set,
        dev_set,
        checkpoint_dir,
        model,
        adam,
        rng,
        0,
        MetricsTrace::default(),
    )
}

/// Continue a run from a checkpoint, bit-identically to the uninterrupted
/// run with the same seed.
pub fn resume(
    config: &TrainConfig,
    train_set: &Corpus,
    dev_set: &Corpus,
    checkpoint_dir: Option<&Path>,
    ckpt: Checkpoint,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if ckpt.model != config.model {
        return Err(TrainError::BadConfig(
            "checkpoint model configuration does not match the training configuration".into(),
        ));
    }
    let model = Model::from_parts(ckpt.model, ckpt.params)?;
    let mut adam = AdamState::new(config.adam);
    adam.step = ckpt.adam_step;
    adam.m = ckpt.adam_m;
    adam.v = ckpt.adam_v;
    train_loop(
        config,
        train_set,
        dev_set,
        checkpoint_dir,
        model,
        adam,
        ckpt.rng,
        ckpt.epoch + 1,
        MetricsTrace::default(),
    )
}

#[allow(clippy::too_many_arguments)]
fn train_loop(
    config: &TrainConfig,
    train_set: &Corpus,
    dev_set: &Corpus,
    checkpoint_dir: Option<&Path>,
    mut model: Model,
    mut adam: AdamState,
    mut rng: ChaCha8Rng,
    from_epoch: usize,
    mut trace: MetricsTrace,
) -> Result<TrainOutcome, TrainError> {
    let mut best_dev_f1 = f64::NEG_INFINITY;
    let mut best_params: Option<Params> = None;
    let mut last_checkpoint: Option<PathBuf> = None;

    let until = config.stop_after.unwrap_or(config.epochs).min(config.epochs);
    for epoch in from_epoch..until {
        let started = Instant::now();
        let tau = anneal_tau(config, epoch);
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        shuffle(&mut order, &mut rng);

        let mut sums = LossBreakdown::default();
        let mut steps = 0usize;
        for batch in order.chunks(config.batch_size) {
            let mut acc = GradientMap::new();
            for &idx in batch {
                let ex = &train_set.examples[idx];
                let mut tape = Tape::new();
                let step = match &model {
                    Model::Plmr(m) => plmr_example_loss(
                        &mut tape,
                        m,
                        &ex.tokens,
                        ex.label,
                        tau,
                        &mut rng,
                        config.loss_mean,
                    ),
                    Model::Rnp(m) => {
                        rnp_example_loss(&mut tape, m, &ex.tokens, ex.label, tau, &mut rng)
                    }
                };
                let (total, breakdown) = match step {
                    Ok(v) => v,
                    Err(TrainError::Tensor(e @ TensorError::NonFinite { .. })) => {
                        return Err(TrainError::Diverged {
                            epoch,
                            source: e,
                            last_checkpoint,
                        })
                    }
                    Err(TrainError::Model(ModelError::Tensor(
                        e @ TensorError::NonFinite { .. },
                    ))) => {
                        return Err(TrainError::Diverged {
                            epoch,
                            source: e,
                            last_checkpoint,
                        })
                    }
                    Err(e) => return Err(e),
                };
                let grads = tape.backward(total)?;
                acc.accumulate(&grads);
                sums.task_r += breakdown.task_r;
                sums.task_x += breakdown.task_x;
                sums.match_term += breakdown.match_term;
                sums.sparsity += breakdown.sparsity;
                sums.total += breakdown.total;
                steps += 1;
            }
            acc.scale(1.0 / batch.len() as f64);
            if let Some(max_norm) = config.grad_clip {
                let norm = acc.global_norm();
                if norm > max_norm {
                    acc.scale(max_norm / norm);
                }
            }
            adam.step(model.params_mut(), &acc)?;
        }

        let mean = |v: f64| v / steps.max(1) as f64;
        let losses = LossBreakdown {
            task_r: mean(sums.task_r),
            task_x: mean(sums.task_x),
            match_term: mean(sums.match_term),
            sparsity: mean(sums.sparsity),
            total: mean(sums.total),
        };

        let is_eval_epoch =
            (epoch + 1) % config.eval_every == 0 || epoch + 1 == config.epochs;
        let dev = if is_eval_epoch && !dev_set.is_empty() {
            Some(evaluate(&model, dev_set)?.metrics)
        } else {
            None
        };

        if let Some(dir) = checkpoint_dir {
            if is_eval_epoch {
                std::fs::create_dir_all(dir)?;
                let ckpt = Checkpoint::capture(&model, &adam, &rng, epoch);
                let last = dir.join("last.ckpt");
                save_checkpoint(&last, &ckpt)?;
                last_checkpoint = Some(last);
                if let Some(metrics) = &dev {
                    if metrics.f1 > best_dev_f1 {
                        save_checkpoint(dir.join("best.ckpt"), &ckpt)?;
                    }
                }
            }
        }
        if let Some(metrics) = &dev {
            if metrics.f1 > best_dev_f1 {
                best_dev_f1 = metrics.f1;
                best_params = Some(model.params().clone());
            }
        }

        trace.records.push(TraceRecord {
            epoch,
            losses,
            dev,
            tau,
            seconds: started.elapsed().as_secs_f64(),
        });
    }

    Ok(TrainOutcome {
        model,
        best_params,
        trace,
        best_dev_f1,
    })
}

/// Inference results plus selection metrics and the failure grid.
pub struct EvalOutcome {
    pub metrics: RationaleMetrics,
    pub failure: Vec<FailureReport>,
    pub empty_rationales: usize,
    pub pred_masks: Vec<Vec<f64>>,
    pub predictions: Vec<Option<usize>>,
}

pub fn evaluate(model: &Model, test_set: &Corpus) -> Result<EvalOutcome, TrainError> {
    evaluate_with_grid(model, test_set, &FAILURE_GRID)
}

pub fn evaluate_with_grid(
    model: &Model,
    test_set: &Corpus,
    grid: &[(f64, f64)],
) -> Result<EvalOutcome, TrainError> {
    if test_set.is_empty() {
        return Err(TrainError::BadConfig("empty evaluation corpus".into()));
    }
    let mut pred_masks = Vec::with_capacity(test_set.len());
    let mut predictions = Vec::with_capacity(test_set.len());
    let mut empty = 0usize;
    for ex in &test_set.examples {
        let (mask, pred) = model.infer(&ex.tokens)?;
        if pred.is_none() {
            empty += 1;
        }
        pred_masks.push(mask);
        predictions.push(pred);
    }
    let gold: Vec<Vec<u8>> = test_set
        .examples
        .iter()
        .map(|e| e.gold_mask.clone())
        .collect();
    let labels: Vec<usize> = test_set.examples.iter().map(|e| e.label).collect();
    let metrics = rationale_metrics(&pred_masks, &gold, &predictions, &labels)?;
    let failure = failure_grid(&test_set.examples, &pred_masks, &predictions, grid)?;
    Ok(EvalOutcome {
        metrics,
        failure,
        empty_rationales: empty,
        pred_masks,
        predictions,
    })
}
