//! The split-encoder rationalization model (standard generator layers,
//! token-pruning reduction layers, rationale-only predictor) and the
//! vanilla generator/predictor baseline built on the same encoder.

mod gumbel;
mod plmr;
mod rnp;

pub use gumbel::{gumbel_softmax_keep, sample_gumbel};
pub use plmr::{MaskSource, PlmrForward, PlmrModel};
pub use rnp::{RnpForward, RnpModel};

use crate::encoder::{EncoderConfig, ModelError};
use crate::objective::MatchTransform;
use crate::params::BoundParams;
use crate::tensor::{Tape, TensorError, Var};
use serde::{Deserialize, Serialize};

/// How pruned tokens are hidden from the predictor at inference time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskMode {
    /// Hidden states are zeroed only; attention still sees pruned keys
    /// through their (zero-score) softmax weight.
    StatesOnly,
    /// Hidden states are zeroed and pruned keys are overwritten out of
    /// every attention row, so nothing can flow from a pruned position.
    StatesAndBias,
}

/// Linear temperature schedule for the relaxed mask sampling.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TempAnneal {
    pub start: f64,
    pub end: f64,
}

impl TempAnneal {
    /// Temperature after `epoch` of `total` epochs (linear interpolation).
    pub fn at(&self, epoch: usize, total: usize) -> f64 {
        if total <= 1 {
            return self.start;
        }
        let frac = epoch as f64 / (total - 1) as f64;
        self.start + (self.end - self.start) * frac
    }
}

impl Default for TempAnneal {
    fn default() -> Self {
        TempAnneal {
            start: 1.0,
            end: 0.3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelSize {
    Base,
    Large,
}

/// Configuration of the split model: the first `l` encoder layers form the
/// generator (the last `m` of them prune tokens), the rest the predictor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlmrConfig {
    pub encoder: EncoderConfig,
    /// Generator layer count.
    pub l: usize,
    /// Reduction (pruning) layer count; the generator's last m layers.
    pub m: usize,
    /// Target fraction of tokens retained.
    pub alpha: f64,
    /// Sampling temperature used when no schedule applies.
    pub tau: f64,
    pub anneal: TempAnneal,
    /// Sample hard {0,1} masks with straight-through gradients during
    /// training instead of soft relaxed masks.
    pub straight_through: bool,
    pub match_transform: MatchTransform,
    pub lambda: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub mask_mode: MaskMode,
    /// Under straight-through training, constrain the deterministic
    /// thresholded masks instead of the keep probabilities.
    pub threshold_constraint: bool,
}

impl PlmrConfig {
    /// Toy defaults; layer counts keep the published base/large split
    /// fractions at a depth trainable from scratch on a CPU.
    pub fn default_config(size: ModelSize) -> PlmrConfig {
        let (layers, l, m) = match size {
            ModelSize::Base => (6, 4, 2),
            ModelSize::Large => (12, 7, 3),
        };
        PlmrConfig {
            encoder: EncoderConfig::toy(240, layers),
            l,
            m,
            alpha: 0.2,
            tau: 1.0,
            anneal: TempAnneal::default(),
            straight_through: true,
            match_transform: MatchTransform::Identity,
            lambda: 1.0,
            lambda1: 10.0,
            lambda2: 0.2,
            mask_mode: MaskMode::StatesAndBias,
            threshold_constraint: false,
        }
    }

    /// Standard generator layers before the first reduction layer.
    pub fn k(&self) -> usize {
        self.l - self.m
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.encoder.validate()?;
        if !(1 <= self.l && self.l < self.encoder.n_layers_total) {
            return Err(ModelError::BadConfig(format!(
                "l = {} must satisfy 1 <= l < {}",
                self.l, self.encoder.n_layers_total
            )));
        }
        if !(1 <= self.m && self.m <= self.l) {
            return Err(ModelError::BadConfig(format!(
                "m = {} must satisfy 1 <= m <= l = {}",
                self.m, self.l
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(ModelError::BadConfig(format!(
                "alpha = {} must lie in (0,1)",
                self.alpha
            )));
        }
        if self.tau <= 0.0 || self.anneal.start <= 0.0 || self.anneal.end <= 0.0 {
            return Err(ModelError::BadConfig(
                "temperatures must be positive".into(),
            ));
        }
        if self.lambda < 0.0 || self.lambda1 < 0.0 || self.lambda2 < 0.0 {
            return Err(ModelError::BadConfig(
                "lambda weights must be nonnegative".into(),
            ));
        }
        self.match_transform
            .validate()
            .map_err(ModelError::BadConfig)?;
        Ok(())
    }
}

/// Baseline configuration: two separate towers of equal depth, one mask
/// selection at the generator's top.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RnpConfig {
    /// Per-tower encoder (generator and predictor each get this depth).
    pub encoder: EncoderConfig,
    pub alpha: f64,
    pub tau: f64,
    pub anneal: TempAnneal,
    pub straight_through: bool,
    pub lambda1: f64,
    pub lambda2: f64,
    pub mask_mode: MaskMode,
    pub threshold_constraint: bool,
}

impl RnpConfig {
    /// Capacity-matched baseline: each tower gets half the split model's
    /// total depth.
    pub fn matching(plmr: &PlmrConfig) -> RnpConfig {
        let mut encoder = plmr.encoder.clone();
        encoder.n_layers_total = (plmr.encoder.n_layers_total / 2).max(2);
        RnpConfig {
            encoder,
            alpha: plmr.alpha,
            tau: plmr.tau,
            anneal: plmr.anneal,
            straight_through: plmr.straight_through,
            lambda1: plmr.lambda1,
            lambda2: plmr.lambda2,
            mask_mode: plmr.mask_mode,
            threshold_constraint: plmr.threshold_constraint,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.encoder.validate()?;
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(ModelError::BadConfig(format!(
                "alpha = {} must lie in (0,1)",
                self.alpha
            )));
        }
        if self.tau <= 0.0 || self.anneal.start <= 0.0 || self.anneal.end <= 0.0 {
            return Err(ModelError::BadConfig(
                "temperatures must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Final rationale of one sequence: the per-layer masks, their running
/// products, and the binary (at inference) final mask.
#[derive(Clone, Debug, PartialEq)]
pub struct RationaleOutput {
    /// M_j' for each reduction layer.
    pub layer_masks: Vec<Vec<f64>>,
    /// Running products M_j = M_j' ⊙ M_{j-1}; the last one is the mask.
    pub cum_masks: Vec<Vec<f64>>,
    /// Final mask, same length as the token sequence.
    pub mask: Vec<f64>,
    pub tokens: Vec<usize>,
}

impl RationaleOutput {
    pub fn kept(&self) -> usize {
        self.mask.iter().filter(|&&m| m > 0.5).count()
    }

    pub fn selected_fraction(&self) -> f64 {
        self.kept() as f64 / self.mask.len() as f64
    }
}

/// Mask-weighted mean pooling over token positions. The stabilizer in the
/// denominator keeps hard-sampled all-zero masks from dividing by zero
/// during training; inference rejects empty rationales before this point.
pub(crate) fn weighted_pool(tape: &mut Tape, h: Var, mask: Var) -> Result<Var, TensorError> {
    let weighted = tape.scale_rows(h, mask)?;
    let summed = tape.sum_axis0(weighted)?;
    let denom = tape.sum_all(mask)?;
    let denom = tape.scalar_add(denom, 1e-9)?;
    let inv = tape.recip(denom)?;
    tape.mul_scalar_var(summed, inv)
}

/// Pooled representation through the shared classification head.
pub(crate) fn head_logits(
    tape: &mut Tape,
    bound: &BoundParams,
    prefix: &str,
    pooled: Var,
) -> Result<Var, TensorError> {
    let z = tape.matmul(pooled, bound.var(&format!("{prefix}head.w")))?;
    tape.add_row(z, bound.var(&format!("{prefix}head.b")))
}

/// Mask logits live inside this band so the relaxed sampler never
/// saturates to an exact 0/1 keep probability, where its gradient (and any
/// hope of recovery) vanishes. The clamp backward is straight-through, so
/// pressure against the bound still reaches the parameters.
pub(crate) const MASK_LOGIT_BOUND: f64 = 2.5;

/// Per-token 2-logit head: layer norm followed by a linear map.
/// Logit 0 votes prune, logit 1 votes keep. Under straight-through
/// training the logits are clamped into the band; relaxed (soft) graphs
/// stay free of straight-through ops so finite differences can check them.
pub(crate) fn mask_logits(
    tape: &mut Tape,
    bound: &BoundParams,
    prefix: &str,
    h: Var,
    clamp: bool,
) -> Result<Var, TensorError> {
    let normed = tape.layer_norm(h)?;
    let normed = tape.mul_row(normed, bound.var(&format!("{prefix}ln.g")))?;
    let normed = tape.add_row(normed, bound.var(&format!("{prefix}ln.b")))?;
    let z = tape.matmul(normed, bound.var(&format!("{prefix}w")))?;
    let z = tape.add_row(z, bound.var(&format!("{prefix}b")))?;
    if clamp {
        tape.clamp_st(z, -MASK_LOGIT_BOUND, MASK_LOGIT_BOUND)
    } else {
        Ok(z)
    }
}
