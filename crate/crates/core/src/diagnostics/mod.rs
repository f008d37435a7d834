//! Representation and rationale-quality diagnostics: per-layer homogeneity
//! traces, token-level selection metrics, and the three-condition
//! rationalization-failure detector with its threshold grid.

mod pca;

pub use pca::{pca_project, ProjectionResult};

use crate::corpus::{Corpus, Example, TokenClass};
use crate::encoder::ModelError;
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum DiagnosticsError {
    #[error("covariance trace needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("pca needs at least 3 vectors, got {0}")]
    TooFewVectors(usize),
    #[error("inputs are misaligned: {0}")]
    Misaligned(String),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Anything that can expose per-layer hidden states of its encoder stack,
/// with index 0 being the embedding output.
pub trait EncoderStates {
    fn hidden_states_all_layers(&self, tokens: &[usize]) -> Result<Vec<Tensor>, ModelError>;
    fn layer_count(&self) -> usize;
}

impl EncoderStates for crate::rationalizer::PlmrModel {
    fn hidden_states_all_layers(&self, tokens: &[usize]) -> Result<Vec<Tensor>, ModelError> {
        PlmrStatesHelper::hidden_states(self, tokens)
    }
    fn layer_count(&self) -> usize {
        self.cfg.encoder.n_layers_total
    }
}

impl EncoderStates for crate::rationalizer::RnpModel {
    fn hidden_states_all_layers(&self, tokens: &[usize]) -> Result<Vec<Tensor>, ModelError> {
        self.hidden_states_all_layers(tokens)
    }
    fn layer_count(&self) -> usize {
        self.cfg.encoder.n_layers_total
    }
}

struct PlmrStatesHelper;
impl PlmrStatesHelper {
    fn hidden_states(
        model: &crate::rationalizer::PlmrModel,
        tokens: &[usize],
    ) -> Result<Vec<Tensor>, ModelError> {
        model.hidden_states_all_layers(tokens)
    }
}

/// Trace of the token-representation sample covariance: the sum of
/// per-dimension variances (n-1 denominator) of the column-centered rows.
/// Small values mean the tokens of a sentence have collapsed onto nearly
/// identical representations.
pub fn covariance_trace(h: &Tensor) -> Result<f64, DiagnosticsError> {
    let n = h.rows();
    if n < 2 {
        return Err(DiagnosticsError::TooFewRows(n));
    }
    let p = h.cols();
    let mut trace = 0.0;
    for d in 0..p {
        let mut mean = 0.0;
        for k in 0..n {
            mean += h.data()[k * p + d];
        }
        mean /= n as f64;
        let mut var = 0.0;
        for k in 0..n {
            let c = h.data()[k * p + d] - mean;
            var += c * c;
        }
        trace += var / (n - 1) as f64;
    }
    Ok(trace)
}

/// Mean covariance trace per layer over a corpus of sentences.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HomogeneityReport {
    /// (layer index, mean trace); layer 0 is the embedding output.
    pub layers: Vec<(usize, f64)>,
    pub sentence_count: usize,
}

impl HomogeneityReport {
    pub fn trace_of(&self, layer: usize) -> Option<f64> {
        self.layers
            .iter()
            .find(|(l, _)| *l == layer)
            .map(|(_, t)| *t)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer,trace\n");
        for (layer, trace) in &self.layers {
            out.push_str(&format!("{layer},{trace}\n"));
        }
        out
    }
}

pub fn layer_homogeneity(
    model: &impl EncoderStates,
    corpus: &Corpus,
    layers: &[usize],
) -> Result<HomogeneityReport, DiagnosticsError> {
    if corpus.is_empty() {
        return Err(DiagnosticsError::EmptyCorpus);
    }
    let mut sums = vec![0.0f64; layers.len()];
    for ex in &corpus.examples {
        let states = model.hidden_states_all_layers(&ex.tokens)?;
        for (slot, &layer) in sums.iter_mut().zip(layers) {
            let state = states.get(layer).ok_or_else(|| {
                DiagnosticsError::Misaligned(format!(
                    "layer {layer} out of range for a {}-layer stack",
                    states.len() - 1
                ))
            })?;
            *slot += covariance_trace(state)?;
        }
    }
    let n = corpus.len() as f64;
    Ok(HomogeneityReport {
        layers: layers.iter().zip(&sums).map(|(&l, &s)| (l, s / n)).collect(),
        sentence_count: corpus.len(),
    })
}

/// Selection quality: S (mean kept fraction), ACC, and micro-averaged
/// token-level precision/recall/F1, all in [0,1].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RationaleMetrics {
    pub s: f64,
    pub acc: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// `predictions` may be None for examples the model could not classify
/// (empty rationale); those are excluded from the accuracy denominator but
/// still count toward token precision/recall and S.
pub fn rationale_metrics(
    pred_masks: &[Vec<f64>],
    gold_masks: &[Vec<u8>],
    predictions: &[Option<usize>],
    labels: &[usize],
) -> Result<RationaleMetrics, DiagnosticsError> {
    if pred_masks.len() != gold_masks.len()
        || pred_masks.len() != predictions.len()
        || pred_masks.len() != labels.len()
    {
        return Err(DiagnosticsError::Misaligned(format!(
            "{} masks, {} golds, {} predictions, {} labels",
            pred_masks.len(),
            gold_masks.len(),
            predictions.len(),
            labels.len()
        )));
    }

    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    let mut s_sum = 0.0;
    let (mut correct, mut judged) = (0usize, 0usize);
    for i in 0..pred_masks.len() {
        let pred = &pred_masks[i];
        let gold = &gold_masks[i];
        if pred.len() != gold.len() {
            return Err(DiagnosticsError::Misaligned(format!(
                "example {i}: {} predicted vs {} gold tokens",
                pred.len(),
                gold.len()
            )));
        }
        let mut kept = 0usize;
        for (p, &g) in pred.iter().zip(gold.iter()) {
            let p = *p > 0.5;
            let g = g == 1;
            kept += usize::from(p);
            match (p, g) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        s_sum += kept as f64 / pred.len().max(1) as f64;
        if let Some(pred_label) = predictions[i] {
            judged += 1;
            correct += usize::from(pred_label == labels[i]);
        }
    }

    let precision = if tp + fp > 0 {
        tp as f64 / (tp + fp) as f64
    } else {
        0.0
    };
    let recall = if tp + fn_ > 0 {
        tp as f64 / (tp + fn_) as f64
    } else {
        0.0
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(RationaleMetrics {
        s: s_sum / pred_masks.len().max(1) as f64,
        acc: if judged > 0 {
            correct as f64 / judged as f64
        } else {
            0.0
        },
        precision,
        recall,
        f1,
    })
}

/// Thresholds and token classes for the three-condition failure test.
#[derive(Clone, Debug)]
pub struct FailureCriteria {
    pub theta1: f64,
    pub theta2: f64,
    pub meaningless_classes: BTreeSet<TokenClass>,
}

impl FailureCriteria {
    pub fn new(theta1: f64, theta2: f64) -> Self {
        FailureCriteria {
            theta1,
            theta2,
            meaningless_classes: BTreeSet::from([TokenClass::Meaningless]),
        }
    }
}

/// The canonical 2x3 threshold grid used in failure reports.
pub const FAILURE_GRID: [(f64, f64); 6] = [
    (0.2, 0.3),
    (0.2, 0.4),
    (0.2, 0.5),
    (0.3, 0.3),
    (0.3, 0.4),
    (0.3, 0.5),
];

/// A failure flag for one example, or None when the example has an empty
/// gold rationale (the overlap condition is undefined there).
///
/// Failure requires all three of: the prediction is correct, the selected
/// tokens overlap at most theta1 of the gold set, and at least theta2 of
/// the selection is made of meaningless tokens.
pub fn detect_failure(
    example: &Example,
    pred_mask: &[f64],
    prediction: Option<usize>,
    criteria: &FailureCriteria,
) -> Option<bool> {
    let gold: Vec<usize> = example.gold_indices();
    if gold.is_empty() {
        return None;
    }
    let prediction = match prediction {
        Some(p) => p,
        None => return Some(false), // no prediction, so condition 1 cannot hold
    };
    if prediction != example.label {
        return Some(false);
    }
    let selected: Vec<usize> = pred_mask
        .iter()
        .enumerate()
        .filter(|(_, &m)| m > 0.5)
        .map(|(i, _)| i)
        .collect();
    if selected.is_empty() {
        return Some(false);
    }
    let overlap = selected.iter().filter(|i| gold.contains(i)).count();
    if overlap as f64 / gold.len() as f64 > criteria.theta1 {
        return Some(false);
    }
    let meaningless = selected
        .iter()
        .filter(|&&i| criteria.meaningless_classes.contains(&example.token_classes[i]))
        .count();
    Some(meaningless as f64 / selected.len() as f64 >= criteria.theta2)
}

/// Failure percentage at one threshold pair.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FailureReport {
    pub theta1: f64,
    pub theta2: f64,
    pub flagged: usize,
    /// Examples with a nonempty gold rationale.
    pub total: usize,
    /// Examples excluded for an empty gold rationale.
    pub excluded: usize,
    pub percentage: f64,
    pub flags: Vec<bool>,
}

/// Apply the failure detector across a grid of (theta1, theta2) cells.
pub fn failure_grid(
    examples: &[Example],
    pred_masks: &[Vec<f64>],
    predictions: &[Option<usize>],
    grid: &[(f64, f64)],
) -> Result<Vec<FailureReport>, DiagnosticsError> {
    if examples.len() != pred_masks.len() || examples.len() != predictions.len() {
        return Err(DiagnosticsError::Misaligned(format!(
            "{} examples, {} masks, {} predictions",
            examples.len(),
            pred_masks.len(),
            predictions.len()
        )));
    }
    let mut reports = Vec::with_capacity(grid.len());
    for &(theta1, theta2) in grid {
        let criteria = FailureCriteria::new(theta1, theta2);
        let mut flags = Vec::new();
        let mut excluded = 0usize;
        for i in 0..examples.len() {
            match detect_failure(&examples[i], &pred_masks[i], predictions[i], &criteria) {
                Some(flag) => flags.push(flag),
                None => excluded += 1,
            }
        }
        let flagged = flags.iter().filter(|&&f| f).count();
        let total = flags.len();
        reports.push(FailureReport {
            theta1,
            theta2,
            flagged,
            total,
            excluded,
            percentage: if total > 0 {
                100.0 * flagged as f64 / total as f64
            } else {
                0.0
            },
            flags,
        });
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_of_identical_rows_is_zero() {
        let h = Tensor::matrix(3, 4, vec![1.0, 2.0, 3.0, 4.0].repeat(3)).unwrap();
        assert_eq!(covariance_trace(&h).unwrap(), 0.0);
    }

    #[test]
    fn trace_hand_example() {
        // var([1,3]) with the n-1 denominator is 2; the zero column adds 0.
        let h = Tensor::matrix(2, 2, vec![1.0, 0.0, 3.0, 0.0]).unwrap();
        assert!((covariance_trace(&h).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn trace_is_translation_invariant() {
        let h = Tensor::matrix(3, 2, vec![1.0, -2.0, 0.5, 4.0, -1.5, 2.0]).unwrap();
        let shifted = Tensor::matrix(
            3,
            2,
            h.data()
                .chunks(2)
                .flat_map(|row| [row[0] + 100.0, row[1] - 7.0])
                .collect(),
        )
        .unwrap();
        let a = covariance_trace(&h).unwrap();
        let b = covariance_trace(&shifted).unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn trace_needs_two_rows() {
        let h = Tensor::matrix(1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(
            covariance_trace(&h),
            Err(DiagnosticsError::TooFewRows(1))
        ));
    }

    #[test]
    fn metrics_hand_cases() {
        // gold [1,1,0,0], pred [1,0,1,0]: P = R = F1 = 0.5.
        let m = rationale_metrics(
            &[vec![1.0, 0.0, 1.0, 0.0]],
            &[vec![1, 1, 0, 0]],
            &[Some(1)],
            &[1],
        )
        .unwrap();
        assert_eq!(m.precision, 0.5);
        assert_eq!(m.recall, 0.5);
        assert_eq!(m.f1, 0.5);
        assert_eq!(m.acc, 1.0);
        assert_eq!(m.s, 0.5);

        // Perfect selection.
        let m = rationale_metrics(
            &[vec![1.0, 1.0, 0.0]],
            &[vec![1, 1, 0]],
            &[Some(0)],
            &[0],
        )
        .unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));

        // All-ones selection: P = k/n, R = 1.
        let m = rationale_metrics(
            &[vec![1.0, 1.0, 1.0, 1.0]],
            &[vec![1, 0, 0, 1]],
            &[Some(0)],
            &[1],
        )
        .unwrap();
        assert_eq!(m.precision, 0.5);
        assert_eq!(m.recall, 1.0);
        assert_eq!(m.acc, 0.0);
    }

    fn failure_example() -> Example {
        Example {
            tokens: vec![200; 8],
            label: 1,
            gold_mask: vec![0, 0, 0, 0, 0, 1, 1, 1],
            aspect: 0,
            token_classes: vec![
                TokenClass::Meaningless,
                TokenClass::Meaningless,
                TokenClass::Meaningless,
                TokenClass::Filler,
                TokenClass::Filler,
                TokenClass::Signal(0),
                TokenClass::Signal(0),
                TokenClass::Signal(0),
            ],
        }
    }

    #[test]
    fn failure_detector_three_conditions() {
        let ex = failure_example();
        let criteria = FailureCriteria::new(0.2, 0.5);
        // Selected {0,1,2}: all meaningless, zero gold overlap, correct
        // prediction: flagged.
        let pred = vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(detect_failure(&ex, &pred, Some(1), &criteria), Some(true));
        // Wrong prediction defeats condition 1.
        assert_eq!(detect_failure(&ex, &pred, Some(0), &criteria), Some(false));
        // Overlap above theta1 defeats condition 2.
        let pred = vec![1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0];
        let loose = FailureCriteria::new(0.3, 0.5);
        assert_eq!(detect_failure(&ex, &pred, Some(1), &loose), Some(false));
    }

    #[test]
    fn empty_gold_examples_are_excluded() {
        let mut ex = failure_example();
        ex.gold_mask = vec![0; 8];
        let criteria = FailureCriteria::new(0.2, 0.3);
        assert_eq!(
            detect_failure(&ex, &[1.0; 8], Some(1), &criteria),
            None
        );

        let reports = failure_grid(
            &[ex],
            &[vec![1.0; 8]],
            &[Some(1)],
            &[(0.2, 0.3)],
        )
        .unwrap();
        assert_eq!(reports[0].excluded, 1);
        assert_eq!(reports[0].total, 0);
        assert_eq!(reports[0].percentage, 0.0);
    }

    #[test]
    fn grid_is_monotone_in_both_thresholds() {
        // Random-ish fixed scenario exercised across the grid.
        let examples: Vec<Example> = (0..40)
            .map(|i| {
                let mut ex = failure_example();
                ex.label = i % 2;
                ex
            })
            .collect();
        let pred_masks: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let mut m = vec![0.0; 8];
                m[i % 8] = 1.0;
                m[(i + 3) % 8] = 1.0;
                m
            })
            .collect();
        let predictions: Vec<Option<usize>> =
            (0..40).map(|i| Some(usize::from(i % 3 != 0))).collect();
        let reports =
            failure_grid(&examples, &pred_masks, &predictions, &FAILURE_GRID).unwrap();
        let rate = |t1: f64, t2: f64| {
            reports
                .iter()
                .find(|r| r.theta1 == t1 && r.theta2 == t2)
                .unwrap()
                .percentage
        };
        for t1 in [0.2, 0.3] {
            assert!(rate(t1, 0.5) <= rate(t1, 0.4) + 1e-12);
            assert!(rate(t1, 0.4) <= rate(t1, 0.3) + 1e-12);
        }
        for t2 in [0.3, 0.4, 0.5] {
            assert!(rate(0.3, t2) + 1e-12 >= rate(0.2, t2));
        }
    }
}
