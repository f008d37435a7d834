//! Relaxed categorical sampling for the per-token keep/prune decision.

use crate::tensor::{Tape, Tensor, TensorError, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Standard Gumbel draw: -ln(-ln(u)) with u in the open unit interval.
pub fn sample_gumbel(rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.sample(rand::distr::Open01);
    -(-u.ln()).ln()
}

/// Keep probability per token from 2-logit rows (column 0 prune, column 1
/// keep): softmax((logits + g) / tau) sampled with Gumbel noise.
///
/// Soft mode returns the relaxed keep component. Hard mode emits exact
/// {0,1} by argmax of the noisy logits and backpropagates through the soft
/// value (straight-through). Argmax ties break to keep.
pub fn gumbel_softmax_keep(
    tape: &mut Tape,
    logits: Var,
    tau: f64,
    hard: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Var, TensorError> {
    assert!(tau > 0.0, "temperature must be positive");
    let n = tape.value(logits).rows();
    let noise: Vec<f64> = (0..n * 2).map(|_| sample_gumbel(rng)).collect();
    let noise = tape.leaf(Tensor::matrix(n, 2, noise)?);
    let z = tape.add(logits, noise)?;
    let z = tape.scalar_mul(z, 1.0 / tau)?;
    let p = tape.row_softmax(z)?;
    let keep = tape.select_column(p, 1)?;
    if hard {
        tape.hard_threshold_st(keep)
    } else {
        Ok(keep)
    }
}
