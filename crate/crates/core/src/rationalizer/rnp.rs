//! Vanilla generator/predictor baseline: two separate towers, one mask
//! selection at the generator's top, predictor fed masked embeddings.

use super::gumbel::gumbel_softmax_keep;
use super::{head_logits, mask_logits, weighted_pool, MaskMode, RnpConfig};
use crate::encoder::{embed, init_encoder_params, run_layers, transformer_block, ModelError};
use crate::params::{xavier, zeros_vec, BoundParams, Params};
use crate::tensor::{Tape, Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub struct RnpForward {
    /// Sampled mask driving the predictor's masked embeddings.
    pub mask: Var,
    /// Constraint-facing mask: the noise-free keep probability under
    /// straight-through training, the relaxed sample otherwise.
    pub constraint_mask: Var,
    pub logits: Var,
}

pub struct RnpModel {
    pub cfg: RnpConfig,
    pub params: Params,
}

impl RnpModel {
    pub fn init(cfg: RnpConfig, rng: &mut impl Rng) -> Result<Self, ModelError> {
        cfg.validate()?;
        let mut params = Params::new();
        init_encoder_params(&mut params, &cfg.encoder, "gen.", rng);
        init_encoder_params(&mut params, &cfg.encoder, "pred.", rng);
        let d = cfg.encoder.d_model;
        params.insert("genhead.ln.g", Tensor::vector(vec![1.0; d]));
        params.insert("genhead.ln.b", zeros_vec(d));
        params.insert("genhead.w", xavier(rng, d, 2));
        // Keep-biased start, same reasoning as the split model's mask
        // predictors: approach the sparsity target from above.
        params.insert("genhead.b", Tensor::vector(vec![0.0, 1.5]));
        params.insert("head.w", xavier(rng, d, 2));
        params.insert("head.b", zeros_vec(2));
        Ok(RnpModel { cfg, params })
    }

    /// (sampled-or-thresholded mask, noise-free keep probability).
    fn mask_var(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        tokens: &[usize],
        sample: Option<(f64, &mut ChaCha8Rng)>,
    ) -> Result<(Var, Var), ModelError> {
        let cfg = &self.cfg;
        let emb = embed(tape, bound, &cfg.encoder, "gen.", tokens)?;
        let (h, _) = run_layers(
            tape,
            bound,
            &cfg.encoder,
            "gen.",
            emb,
            0,
            cfg.encoder.n_layers_total,
            None,
            false,
        )?;
        let logits = mask_logits(tape, bound, "genhead.", h, cfg.straight_through)?;
        let keep_prob = {
            let p = tape.row_softmax(logits)?;
            tape.select_column(p, 1)?
        };
        let decision = tape.hard_threshold_st(keep_prob)?;
        let mask = match sample {
            Some((tau, rng)) => {
                gumbel_softmax_keep(tape, logits, tau, cfg.straight_through, rng)?
            }
            None => decision,
        };
        let constraint = if cfg.straight_through {
            if cfg.threshold_constraint {
                decision
            } else {
                keep_prob
            }
        } else {
            mask
        };
        Ok((mask, constraint))
    }

    /// Predictor tower over mask-scaled embeddings.
    fn predict_from_mask(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        tokens: &[usize],
        mask: Var,
        key_mask: Option<&[f64]>,
    ) -> Result<Var, ModelError> {
        let cfg = &self.cfg;
        let emb = embed(tape, bound, &cfg.encoder, "pred.", tokens)?;
        let mut h = tape.scale_rows(emb, mask)?;
        for layer in 0..cfg.encoder.n_layers_total {
            h = transformer_block(
                tape,
                bound,
                &cfg.encoder,
                &format!("pred.layer{layer}."),
                h,
                key_mask,
                None,
            )?;
            if key_mask.is_some() {
                h = tape.scale_rows(h, mask)?;
            }
        }
        let pooled = weighted_pool(tape, h, mask)?;
        Ok(head_logits(tape, bound, "", pooled)?)
    }

    pub fn forward_train(
        &self,
        tape: &mut Tape,
        tokens: &[usize],
        tau: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<RnpForward, ModelError> {
        let bound = self.params.bind(tape);
        let (mask, constraint_mask) = self.mask_var(tape, &bound, tokens, Some((tau, rng)))?;
        let key_mask = if self.cfg.straight_through && self.cfg.mask_mode == MaskMode::StatesAndBias
        {
            // Hard-sampled all-zero masks fall back to state zeroing alone.
            let values = tape.value(mask).data().to_vec();
            values.iter().any(|&v| v != 0.0).then_some(values)
        } else {
            None
        };
        let logits = self.predict_from_mask(tape, &bound, tokens, mask, key_mask.as_deref())?;
        Ok(RnpForward {
            mask,
            constraint_mask,
            logits,
        })
    }

    /// Deterministic inference mask.
    pub fn generate(&self, tokens: &[usize]) -> Result<Vec<f64>, ModelError> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        let (mask, _) = self.mask_var(&mut tape, &bound, tokens, None)?;
        let mask = tape.value(mask).data().to_vec();
        if mask.iter().all(|&m| m == 0.0) {
            return Err(ModelError::EmptyRationale);
        }
        Ok(mask)
    }

    /// Classification from a given rationale.
    pub fn predict_rationale(&self, tokens: &[usize], mask: &[f64]) -> Result<[f64; 2], ModelError> {
        assert_eq!(tokens.len(), mask.len(), "mask length mismatch");
        if mask.iter().all(|&m| m == 0.0) {
            return Err(ModelError::EmptyRationale);
        }
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        let mask_var = tape.leaf(Tensor::vector(mask.to_vec()));
        let key_mask = match self.cfg.mask_mode {
            MaskMode::StatesAndBias => Some(mask),
            MaskMode::StatesOnly => None,
        };
        let logits = self.predict_from_mask(&mut tape, &bound, tokens, mask_var, key_mask)?;
        let v = tape.value(logits);
        Ok([v.data()[0], v.data()[1]])
    }

    pub fn predict(&self, tokens: &[usize]) -> Result<(Vec<f64>, [f64; 2], usize), ModelError> {
        let mask = self.generate(tokens)?;
        let logits = self.predict_rationale(tokens, &mask)?;
        let label = usize::from(logits[1] > logits[0]);
        Ok((mask, logits, label))
    }

    /// Generator-tower hidden states without masking (for diagnostics).
    pub fn hidden_states_all_layers(&self, tokens: &[usize]) -> Result<Vec<Tensor>, ModelError> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        let cfg = &self.cfg.encoder;
        let mut states = Vec::with_capacity(cfg.n_layers_total + 1);
        let mut h = embed(&mut tape, &bound, cfg, "gen.", tokens)?;
        states.push(tape.value(h).clone());
        for layer in 0..cfg.n_layers_total {
            h = transformer_block(
                &mut tape,
                &bound,
                cfg,
                &format!("gen.layer{layer}."),
                h,
                None,
                None,
            )?;
            states.push(tape.value(h).clone());
        }
        Ok(states)
    }
}
