//! Loss terms and their combination, plus the Adam optimizer.
//!
//! The rationale objective is the sum of four parts: the rationale task
//! loss, the full-text task loss, a match regularizer coupling the two
//! through a monotone transform, and a multi-layer sparsity/continuity
//! constraint driven by a linearly decreasing retention schedule.

use crate::params::Params;
use crate::tensor::{GradientMap, Tape, Tensor, TensorError, Var};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum ObjectiveError {
    #[error("mask length {got} does not match expected {expected}")]
    MaskLengthMismatch { got: usize, expected: usize },
    #[error("schedule has {schedule} entries but {masks} masks were given")]
    ScheduleLengthMismatch { schedule: usize, masks: usize },
    #[error("missing gradient for parameter {0}")]
    MissingGradient(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Monotone transform h applied to L_r - L_x inside the match regularizer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MatchTransform {
    Identity,
    /// h(x) = a^x with a > 1, so h stays monotone increasing.
    ExpBase { base: f64 },
}

impl MatchTransform {
    pub fn validate(&self) -> Result<(), String> {
        match self {
            MatchTransform::Identity => Ok(()),
            MatchTransform::ExpBase { base } if *base > 1.0 => Ok(()),
            MatchTransform::ExpBase { base } => {
                Err(format!("exp-base transform requires base > 1, got {base}"))
            }
        }
    }

    pub fn apply(&self, x: f64) -> f64 {
        match self {
            MatchTransform::Identity => x,
            MatchTransform::ExpBase { base } => base.powf(x),
        }
    }
}

/// Per-layer retention targets, strictly nonincreasing, ending at the
/// overall target sparsity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsitySchedule {
    pub alphas: Vec<f64>,
}

/// alpha_j = 1 - j * (1 - alpha) / m for j = 1..m: gentle pruning pressure
/// in the first layer, the exact target in the last.
pub fn linear_alpha_schedule(m: usize, alpha: f64) -> SparsitySchedule {
    assert!(m >= 1, "schedule needs at least one layer");
    assert!((0.0..1.0).contains(&alpha) && alpha > 0.0, "alpha in (0,1)");
    let alphas = (1..=m)
        .map(|j| 1.0 - j as f64 * (1.0 - alpha) / m as f64)
        .collect();
    SparsitySchedule { alphas }
}

/// The four loss components and their combination.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub task_r: f64,
    pub task_x: f64,
    pub match_term: f64,
    pub sparsity: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn components_sum(&self) -> f64 {
        self.task_r + self.task_x + self.match_term + self.sparsity
    }
}

/// -log softmax(logits)[label], computed through log-sum-exp so huge logits
/// cannot overflow.
pub fn cross_entropy(tape: &mut Tape, logits: Var, label: usize) -> Result<Var, TensorError> {
    let lse = tape.log_sum_exp(logits)?;
    let picked = tape.select_index(logits, label)?;
    tape.sub(lse, picked)
}

/// Multi-layer sparsity + continuity constraint:
/// (1/m) Σ_j [ λ1·|α_j - mean(M_j)| + λ2·Σ_i |M_j[i+1] - M_j[i]| ].
/// Continuity sums interior transitions only.
pub fn sparsity_continuity_loss(
    tape: &mut Tape,
    masks: &[Var],
    schedule: &SparsitySchedule,
    lambda1: f64,
    lambda2: f64,
) -> Result<Var, ObjectiveError> {
    if masks.len() != schedule.alphas.len() {
        return Err(ObjectiveError::ScheduleLengthMismatch {
            schedule: schedule.alphas.len(),
            masks: masks.len(),
        });
    }
    let n = tape.value(masks[0]).numel();
    for &m in masks {
        let len = tape.value(m).numel();
        if len != n {
            return Err(ObjectiveError::MaskLengthMismatch {
                got: len,
                expected: n,
            });
        }
    }

    let mut acc: Option<Var> = None;
    for (&mask, &alpha_j) in masks.iter().zip(&schedule.alphas) {
        let mean = tape.mean_all(mask)?;
        let dev = tape.scalar_add(mean, -alpha_j)?;
        let dev = tape.abs(dev)?;
        let sparsity = tape.scalar_mul(dev, lambda1)?;

        let diffs = tape.adjacent_diff(mask)?;
        let diffs = tape.abs(diffs)?;
        let cont = tape.sum_all(diffs)?;
        let cont = tape.scalar_mul(cont, lambda2)?;

        let layer_term = tape.add(sparsity, cont)?;
        acc = Some(match acc {
            Some(prev) => tape.add(prev, layer_term)?,
            None => layer_term,
        });
    }
    let total = acc.expect("at least one layer");
    Ok(tape.scalar_mul(total, 1.0 / masks.len() as f64)?)
}

/// λ·h(L_r - L_x). Requires λ > 0; a zero λ means the term is simply
/// omitted from the objective by the caller.
pub fn match_loss(
    tape: &mut Tape,
    task_r: Var,
    task_x: Var,
    lambda: f64,
    h: MatchTransform,
) -> Result<Var, TensorError> {
    debug_assert!(lambda > 0.0, "match_loss requires lambda > 0");
    let gap = tape.sub(task_r, task_x)?;
    let transformed = match h {
        MatchTransform::Identity => gap,
        MatchTransform::ExpBase { base } => {
            let scaled = tape.scalar_mul(gap, base.ln())?;
            tape.exp(scaled)?
        }
    };
    tape.scalar_mul(transformed, lambda)
}

/// Unweighted sum of the four terms. `mean` divides by 4 instead, which
/// only rescales the effective learning rate.
pub fn total_objective(
    tape: &mut Tape,
    task_r: Var,
    task_x: Var,
    match_term: Var,
    sparsity: Var,
    mean: bool,
) -> Result<Var, TensorError> {
    let a = tape.add(task_r, task_x)?;
    let b = tape.add(a, match_term)?;
    let total = tape.add(b, sparsity)?;
    if mean {
        tape.scalar_mul(total, 0.25)
    } else {
        Ok(total)
    }
}

/// Learning-rate groups matched by parameter-name predicate, mirroring the
/// convention of training transformer layers slower than the freshly added
/// mask-predictor and classifier-head linear maps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamHyper {
    pub lr_encoder: f64,
    pub lr_head: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            lr_encoder: 1e-3,
            lr_head: 3e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Mask predictors and classification heads train at the faster rate.
pub fn is_head_param(name: &str) -> bool {
    name.contains("maskpred") || name.contains("genhead") || name.starts_with("head.")
}

/// Adam with bias correction. Moments live per parameter, keyed like the
/// parameters themselves.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub hyper: AdamHyper,
    pub step: u64,
    pub m: BTreeMap<String, Tensor>,
    pub v: BTreeMap<String, Tensor>,
}

impl AdamState {
    pub fn new(hyper: AdamHyper) -> Self {
        AdamState {
            hyper,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    /// One update over all parameters. Every parameter must have a gradient.
    pub fn step(&mut self, params: &mut Params, grads: &GradientMap) -> Result<(), ObjectiveError> {
        for name in params.names() {
            if grads.get(name).is_none() {
                return Err(ObjectiveError::MissingGradient(name.clone()));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.hyper.beta1.powi(t);
        let bc2 = 1.0 - self.hyper.beta2.powi(t);

        for (name, param) in params.iter_mut() {
            let grad = grads.get(name).expect("checked above");
            let lr = if is_head_param(name) {
                self.hyper.lr_head
            } else {
                self.hyper.lr_encoder
            };
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(param.shape().to_vec()));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(param.shape().to_vec()));
            let (b1, b2, eps) = (self.hyper.beta1, self.hyper.beta2, self.hyper.epsilon);
            for i in 0..param.numel() {
                let g = grad.data()[i];
                let mi = b1 * m.data()[i] + (1.0 - b1) * g;
                let vi = b2 * v.data()[i] + (1.0 - b2) * g * g;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                let m_hat = mi / bc1;
                let v_hat = vi / bc2;
                param.data_mut()[i] -= lr * m_hat / (v_hat + eps).sqrt();
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_of(tape: &Tape, v: Var) -> f64 {
        tape.value(v).item()
    }

    #[test]
    fn cross_entropy_uniform_and_extreme_logits() {
        let mut tape = Tape::new();
        let l = tape.leaf(Tensor::vector(vec![0.0, 0.0]));
        let ce = cross_entropy(&mut tape, l, 0).unwrap();
        assert!((scalar_of(&tape, ce) - 2.0f64.ln()).abs() < 1e-12);

        let l = tape.leaf(Tensor::vector(vec![1000.0, 0.0]));
        let ce = cross_entropy(&mut tape, l, 0).unwrap();
        assert!(scalar_of(&tape, ce).abs() < 1e-9);

        let l = tape.leaf(Tensor::vector(vec![0.0, 1000.0]));
        let ce = cross_entropy(&mut tape, l, 0).unwrap();
        assert!((scalar_of(&tape, ce) - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn schedule_values_match_the_formula() {
        let s = linear_alpha_schedule(2, 0.2);
        assert!((s.alphas[0] - 0.6).abs() < 1e-12);
        assert!((s.alphas[1] - 0.2).abs() < 1e-12);

        let s = linear_alpha_schedule(1, 0.1);
        assert!((s.alphas[0] - 0.1).abs() < 1e-12);

        let s = linear_alpha_schedule(3, 0.1);
        for (got, want) in s.alphas.iter().zip([0.7, 0.4, 0.1]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn sparsity_continuity_hand_cases() {
        // One layer, M = [1,1,0,0], alpha = 0.5: sparsity 0, continuity 1.
        let mut tape = Tape::new();
        let m = tape.leaf(Tensor::vector(vec![1.0, 1.0, 0.0, 0.0]));
        let s = SparsitySchedule {
            alphas: vec![0.5],
        };
        let ls = sparsity_continuity_loss(&mut tape, &[m], &s, 1.0, 1.0).unwrap();
        assert!((scalar_of(&tape, ls) - 1.0).abs() < 1e-12);

        // Alternating mask: 4 transitions.
        let mut tape = Tape::new();
        let m = tape.leaf(Tensor::vector(vec![1.0, 0.0, 1.0, 0.0, 1.0]));
        let s = SparsitySchedule {
            alphas: vec![0.5],
        };
        let ls = sparsity_continuity_loss(&mut tape, &[m], &s, 0.0, 1.0).unwrap();
        assert!((scalar_of(&tape, ls) - 4.0).abs() < 1e-12);

        // Constant masks have zero continuity.
        let mut tape = Tape::new();
        let m = tape.leaf(Tensor::vector(vec![0.3; 6]));
        let s = SparsitySchedule {
            alphas: vec![0.3],
        };
        let ls = sparsity_continuity_loss(&mut tape, &[m], &s, 0.0, 5.0).unwrap();
        assert_eq!(scalar_of(&tape, ls), 0.0);
    }

    #[test]
    fn sparsity_term_is_zero_exactly_at_target_mean() {
        let mut tape = Tape::new();
        let m = tape.leaf(Tensor::vector(vec![1.0, 0.0, 1.0, 0.0]));
        let s = SparsitySchedule {
            alphas: vec![0.5],
        };
        let ls = sparsity_continuity_loss(&mut tape, &[m], &s, 7.0, 0.0).unwrap();
        assert_eq!(scalar_of(&tape, ls), 0.0);
    }

    #[test]
    fn match_loss_identity_and_exp_base() {
        let mut tape = Tape::new();
        let r = tape.leaf(Tensor::scalar(0.9));
        let x = tape.leaf(Tensor::scalar(0.4));
        let m = match_loss(&mut tape, r, x, 1.0, MatchTransform::Identity).unwrap();
        assert!((scalar_of(&tape, m) - 0.5).abs() < 1e-12);

        let m = match_loss(&mut tape, r, r, 1.0, MatchTransform::Identity).unwrap();
        assert_eq!(scalar_of(&tape, m), 0.0);

        let m = match_loss(
            &mut tape,
            r,
            r,
            1.0,
            MatchTransform::ExpBase {
                base: std::f64::consts::E,
            },
        )
        .unwrap();
        assert!((scalar_of(&tape, m) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn total_objective_is_the_plain_sum() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::scalar(0.5));
        let b = tape.leaf(Tensor::scalar(0.4));
        let c = tape.leaf(Tensor::scalar(0.1));
        let d = tape.leaf(Tensor::scalar(0.2));
        let t = total_objective(&mut tape, a, b, c, d, false).unwrap();
        assert!((scalar_of(&tape, t) - 1.2).abs() < 1e-12);

        let zero = tape.leaf(Tensor::scalar(0.0));
        let t = total_objective(&mut tape, zero, zero, zero, zero, false).unwrap();
        assert_eq!(scalar_of(&tape, t), 0.0);

        let t = total_objective(&mut tape, a, b, c, d, true).unwrap();
        assert!((scalar_of(&tape, t) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn adam_first_step_matches_closed_form() {
        let mut params = Params::new();
        params.insert("w", Tensor::scalar(0.0));
        let mut grads = GradientMap::new();
        grads.insert("w".into(), Tensor::scalar(1.0));
        let mut adam = AdamState::new(AdamHyper {
            lr_encoder: 1e-3,
            lr_head: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        });
        adam.step(&mut params, &grads).unwrap();
        // m_hat = v_hat = 1 at step 1, so the update is -lr / sqrt(1 + eps).
        let expected = -1e-3 / (1.0f64 + 1e-8).sqrt();
        assert!((params.get("w").item() - expected).abs() < 1e-15);
        assert!((params.get("w").item() - (-9.99999995e-4)).abs() < 1e-12);
    }

    #[test]
    fn adam_zero_gradient_keeps_parameters_but_advances_step() {
        let mut params = Params::new();
        params.insert("w", Tensor::vector(vec![1.5, -2.0]));
        let mut grads = GradientMap::new();
        grads.insert("w".into(), Tensor::vector(vec![0.0, 0.0]));
        let mut adam = AdamState::new(AdamHyper::default());
        adam.step(&mut params, &grads).unwrap();
        assert_eq!(params.get("w").data(), &[1.5, -2.0]);
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn adam_groups_update_at_their_own_rates() {
        let mut params = Params::new();
        params.insert("layer0.ff.w1", Tensor::scalar(0.0));
        params.insert("head.w", Tensor::scalar(0.0));
        let mut grads = GradientMap::new();
        grads.insert("layer0.ff.w1".into(), Tensor::scalar(1.0));
        grads.insert("head.w".into(), Tensor::scalar(1.0));
        let mut adam = AdamState::new(AdamHyper::default());
        adam.step(&mut params, &grads).unwrap();
        let ratio = params.get("head.w").item() / params.get("layer0.ff.w1").item();
        assert!((ratio - 3.0).abs() < 1e-9);
    }

    #[test]
    fn adam_rejects_missing_gradients() {
        let mut params = Params::new();
        params.insert("w", Tensor::scalar(0.0));
        let grads = GradientMap::new();
        let mut adam = AdamState::new(AdamHyper::default());
        assert!(matches!(
            adam.step(&mut params, &grads),
            Err(ObjectiveError::MissingGradient(_))
        ));
    }

    #[test]
    fn match_transform_validation() {
        assert!(MatchTransform::Identity.validate().is_ok());
        assert!(MatchTransform::ExpBase { base: 2.0 }.validate().is_ok());
        assert!(MatchTransform::ExpBase { base: 1.0 }.validate().is_err());
        assert!(MatchTransform::ExpBase { base: 0.5 }.validate().is_err());
    }
}
