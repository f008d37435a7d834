//! Token/position embeddings and a stack of post-norm transformer blocks
//! with per-head attention exposure and optional key masking.
//!
//! Pruned tokens are excluded from attention by overwriting their key
//! scores with -1e9 before the softmax (in addition to hidden-state
//! zeroing). Overwriting rather than adding keeps downstream values
//! bit-independent of whatever sits in a pruned position.

use crate::params::{embedding_init, xavier, zeros_vec, BoundParams, Params};
use crate::tensor::{Tape, Tensor, TensorError, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Error, Debug)]
pub enum ModelError {
    #[error("token id {id} out of vocabulary (size {vocab})")]
    OutOfVocab { id: usize, vocab: usize },
    #[error("sequence length {len} exceeds max_len {max}")]
    Overlength { len: usize, max: usize },
    #[error("attention is degenerate: every key position is masked out")]
    AllKeysMasked,
    #[error("bad layer range {from}..{to} for a {total}-layer stack")]
    BadLayerRange {
        from: usize,
        to: usize,
        total: usize,
    },
    #[error("inference produced an empty rationale")]
    EmptyRationale,
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub max_len: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_k: usize,
    pub d_ff: usize,
    pub n_layers_total: usize,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.d_model != self.n_heads * self.d_k {
            return Err(ModelError::BadConfig(format!(
                "d_model {} != n_heads {} * d_k {}",
                self.d_model, self.n_heads, self.d_k
            )));
        }
        if self.n_layers_total < 2 {
            return Err(ModelError::BadConfig(format!(
                "n_layers_total {} < 2",
                self.n_layers_total
            )));
        }
        if self.vocab_size == 0 || self.max_len == 0 || self.d_ff == 0 {
            return Err(ModelError::BadConfig(
                "vocab_size, max_len and d_ff must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Toy encoder sized for CPU training from scratch.
    pub fn toy(vocab_size: usize, n_layers_total: usize) -> Self {
        EncoderConfig {
            vocab_size,
            max_len: 64,
            d_model: 32,
            n_heads: 4,
            d_k: 8,
            d_ff: 64,
            n_layers_total,
        }
    }
}

/// One attention matrix A_h (n x n, rows summing to 1) captured during a
/// forward pass.
#[derive(Clone, Debug)]
pub struct AttentionRecord {
    pub layer: usize,
    pub head: usize,
    pub weights: Tensor,
}

/// Initialize embeddings plus `n_layers` transformer blocks under a name
/// prefix ("" for the split model, "gen."/"pred." for the baseline's two
/// towers).
pub fn init_encoder_params(
    params: &mut Params,
    cfg: &EncoderConfig,
    prefix: &str,
    rng: &mut impl Rng,
) {
    params.insert(
        format!("{prefix}tok_emb"),
        embedding_init(rng, cfg.vocab_size, cfg.d_model),
    );
    params.insert(
        format!("{prefix}pos_emb"),
        embedding_init(rng, cfg.max_len, cfg.d_model),
    );
    for layer in 0..cfg.n_layers_total {
        init_block_params(params, cfg, &format!("{prefix}layer{layer}."), rng);
    }
}

pub fn init_block_params(params: &mut Params, cfg: &EncoderConfig, prefix: &str, rng: &mut impl Rng) {
    for head in 0..cfg.n_heads {
        params.insert(
            format!("{prefix}attn.head{head}.wq"),
            xavier(rng, cfg.d_model, cfg.d_k),
        );
        params.insert(
            format!("{prefix}attn.head{head}.wk"),
            xavier(rng, cfg.d_model, cfg.d_k),
        );
        params.insert(
            format!("{prefix}attn.head{head}.wv"),
            xavier(rng, cfg.d_model, cfg.d_k),
        );
    }
    params.insert(
        format!("{prefix}attn.wo"),
        xavier(rng, cfg.d_model, cfg.d_model),
    );
    params.insert(format!("{prefix}attn.bo"), zeros_vec(cfg.d_model));
    params.insert(
        format!("{prefix}ff.w1"),
        xavier(rng, cfg.d_model, cfg.d_ff),
    );
    params.insert(format!("{prefix}ff.b1"), zeros_vec(cfg.d_ff));
    params.insert(
        format!("{prefix}ff.w2"),
        xavier(rng, cfg.d_ff, cfg.d_model),
    );
    params.insert(format!("{prefix}ff.b2"), zeros_vec(cfg.d_model));
    params.insert(
        format!("{prefix}ln1.g"),
        Tensor::vector(vec![1.0; cfg.d_model]),
    );
    params.insert(format!("{prefix}ln1.b"), zeros_vec(cfg.d_model));
    params.insert(
        format!("{prefix}ln2.g"),
        Tensor::vector(vec![1.0; cfg.d_model]),
    );
    params.insert(format!("{prefix}ln2.b"), zeros_vec(cfg.d_model));
}

/// Sum of learned token and position embeddings, one row per position.
pub fn embed(
    tape: &mut Tape,
    bound: &BoundParams,
    cfg: &EncoderConfig,
    prefix: &str,
    tokens: &[usize],
) -> Result<Var, ModelError> {
    if tokens.len() > cfg.max_len {
        return Err(ModelError::Overlength {
            len: tokens.len(),
            max: cfg.max_len,
        });
    }
    if let Some(&id) = tokens.iter().find(|&&id| id >= cfg.vocab_size) {
        return Err(ModelError::OutOfVocab {
            id,
            vocab: cfg.vocab_size,
        });
    }
    let tok = tape.embed(bound.var(&format!("{prefix}tok_emb")), tokens)?;
    let positions: Vec<usize> = (0..tokens.len()).collect();
    let pos = tape.embed(bound.var(&format!("{prefix}pos_emb")), &positions)?;
    Ok(tape.add(tok, pos)?)
}

/// Scaled dot-product attention for one head: A = softmax(Q Kᵀ / sqrt(d_k))
/// with masked keys overwritten to -1e9 before the softmax.
pub fn attention_head(
    tape: &mut Tape,
    bound: &BoundParams,
    cfg: &EncoderConfig,
    head_prefix: &str,
    h: Var,
    key_mask: Option<&[f64]>,
) -> Result<(Var, Var), ModelError> {
    if let Some(mask) = key_mask {
        if mask.iter().all(|&k| k == 0.0) {
            return Err(ModelError::AllKeysMasked);
        }
    }
    let q = tape.matmul(h, bound.var(&format!("{head_prefix}wq")))?;
    let k = tape.matmul(h, bound.var(&format!("{head_prefix}wk")))?;
    let v = tape.matmul(h, bound.var(&format!("{head_prefix}wv")))?;
    let scores = tape.matmul_nt(q, k)?;
    let scores = tape.scalar_mul(scores, 1.0 / (cfg.d_k as f64).sqrt())?;
    let scores = match key_mask {
        Some(mask) => tape.masked_fill_cols(scores, mask, -1e9)?,
        None => scores,
    };
    let attn = tape.row_softmax(scores)?;
    let out = tape.matmul(attn, v)?;
    Ok((out, attn))
}

fn ln_affine(
    tape: &mut Tape,
    bound: &BoundParams,
    prefix: &str,
    x: Var,
) -> Result<Var, TensorError> {
    let normed = tape.layer_norm(x)?;
    let scaled = tape.mul_row(normed, bound.var(&format!("{prefix}g")))?;
    tape.add_row(scaled, bound.var(&format!("{prefix}b")))
}

/// Post-norm block: multi-head attention, residual, LN, feed-forward
/// (gelu), residual, LN. Shape preserved.
pub fn transformer_block(
    tape: &mut Tape,
    bound: &BoundParams,
    cfg: &EncoderConfig,
    block_prefix: &str,
    h: Var,
    key_mask: Option<&[f64]>,
    mut record: Option<&mut Vec<Var>>,
) -> Result<Var, ModelError> {
    let mut heads = Vec::with_capacity(cfg.n_heads);
    for head in 0..cfg.n_heads {
        let (out, attn) = attention_head(
            tape,
            bound,
            cfg,
            &format!("{block_prefix}attn.head{head}."),
            h,
            key_mask,
        )?;
        if let Some(rec) = record.as_deref_mut() {
            rec.push(attn);
        }
        heads.push(out);
    }
    let cat = tape.concat_cols(&heads)?;
    let proj = tape.matmul(cat, bound.var(&format!("{block_prefix}attn.wo")))?;
    let proj = tape.add_row(proj, bound.var(&format!("{block_prefix}attn.bo")))?;

    let x = tape.add(h, proj)?;
    let x = ln_affine(tape, bound, &format!("{block_prefix}ln1."), x)?;

    let ff = tape.matmul(x, bound.var(&format!("{block_prefix}ff.w1")))?;
    let ff = tape.add_row(ff, bound.var(&format!("{block_prefix}ff.b1")))?;
    let ff = tape.gelu(ff)?;
    let ff = tape.matmul(ff, bound.var(&format!("{block_prefix}ff.w2")))?;
    let ff = tape.add_row(ff, bound.var(&format!("{block_prefix}ff.b2")))?;

    let y = tape.add(x, ff)?;
    Ok(ln_affine(tape, bound, &format!("{block_prefix}ln2."), y)?)
}

/// Apply blocks `from..to` in sequence. An empty range is the identity.
/// Attention matrices are captured per layer and head when requested.
#[allow(clippy::too_many_arguments)]
pub fn run_layers(
    tape: &mut Tape,
    bound: &BoundParams,
    cfg: &EncoderConfig,
    prefix: &str,
    mut h: Var,
    from: usize,
    to: usize,
    key_mask: Option<&[f64]>,
    record_attention: bool,
) -> Result<(Var, Vec<AttentionRecord>), ModelError> {
    if from > to || to > cfg.n_layers_total {
        return Err(ModelError::BadLayerRange {
            from,
            to,
            total: cfg.n_layers_total,
        });
    }
    let mut records = Vec::new();
    for layer in from..to {
        let mut captured = Vec::new();
        h = transformer_block(
            tape,
            bound,
            cfg,
            &format!("{prefix}layer{layer}."),
            h,
            key_mask,
            record_attention.then_some(&mut captured),
        )?;
        for (head, attn) in captured.into_iter().enumerate() {
            records.push(AttentionRecord {
                layer,
                head,
                weights: tape.value(attn).clone(),
            });
        }
    }
    Ok((h, records))
}
