// scratch debug (not part of the repo tests)
use plmr_core::corpus::{split, synthesize, CorpusSpec};
use plmr_core::rationalizer::{ModelSize, PlmrConfig, RnpConfig};
use plmr_core::trainer::{evaluate, train, ModelConfig, TrainConfig};
use std::time::Instant;

fn env_f(name: &str, default: f64) -> f64 {
    std::env::var(name).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

#[test]
fn dbg_bench_scale() {
    let size = env_f("DBG_SIZE", 1500.0) as usize;
    let spec = CorpusSpec { size, ..CorpusSpec::default() };
    let corpus = synthesize(&spec, 4).unwrap();
    let (train_set, dev, test) = split(&corpus, (0.8, 0.1, 0.1), 0).unwrap();
    let mut cfg = PlmrConfig::default_config(ModelSize::Base);
    cfg.lambda1 = env_f("DBG_L1", 10.0);
    cfg.lambda2 = env_f("DBG_L2", 1.0);
    cfg.lambda = env_f("DBG_LM", 1.0);
    let expb = env_f("DBG_EXPB", 0.0);
    if expb > 0.5 {
        let base = if expb > 1.0 { expb } else { std::f64::consts::E };
        cfg.match_transform = plmr_core::objective::MatchTransform::ExpBase { base };
    }
    cfg.anneal.end = env_f("DBG_TAU_END", 0.3);
    cfg.anneal.start = env_f("DBG_TAU_START", 1.0);
    cfg.straight_through = env_f("DBG_ST", 0.0) > 0.5;
    cfg.alpha = env_f("DBG_ALPHA", 0.2);
    cfg.threshold_constraint = env_f("DBG_THRC", 0.0) > 0.5;
    let rnp_mode = env_f("DBG_RNP", 0.0) > 0.5;
    let model = if rnp_mode {
        ModelConfig::Rnp(RnpConfig::matching(&cfg))
    } else {
        ModelConfig::Plmr(cfg)
    };
    let mut tc = TrainConfig::new(model);
    tc.epochs = env_f("DBG_EPOCHS", 3.0) as usize;
    tc.batch_size = env_f("DBG_BATCH", 16.0) as usize;
    tc.seed = env_f("DBG_SEED", 13.0) as u64;
    tc.adam.lr_encoder = env_f("DBG_LR_ENC", 1e-3);
    tc.adam.lr_head = env_f("DBG_LR_HEAD", 3e-3);
    let t0 = Instant::now();
    let out = match train(&tc, &train_set, &dev, None) {
        Ok(o) => o,
        Err(e) => { eprintln!("TRAIN ERROR: {e}"); return; }
    };
    eprintln!("train time {:.1}s", t0.elapsed().as_secs_f64());
    for r in &out.trace.records {
        eprintln!("epoch {} tau {:.2} r {:.3} x {:.3} match {:+.3} s {:.3} dev {}",
            r.epoch, r.tau, r.losses.task_r, r.losses.task_x, r.losses.match_term, r.losses.sparsity,
            r.dev.map(|d| format!("S {:.2} P {:.2} R {:.2} F1 {:.2} ACC {:.2}", d.s, d.precision, d.recall, d.f1, d.acc)).unwrap_or_default());
    }
    {
        use plmr_core::trainer::Model;
        if let Model::Plmr(m) = &out.model {
            let b0 = m.params.get("maskpred0.b");
            let b1 = m.params.get("maskpred1.b");
            let w0 = m.params.get("maskpred0.w");
            let wnorm: f64 = w0.data().iter().map(|v| v * v).sum::<f64>().sqrt();
            eprintln!("maskpred0.b {:?} maskpred1.b {:?} |w0| {:.3}", b0.data(), b1.data(), wnorm);
            let mut rng2 = rand_chacha::ChaCha8Rng::seed_from_u64(5);
            use rand_chacha::rand_core::SeedableRng;
            let _ = &mut rng2;
            let ex = &dev.examples[0];
            let mut tape = plmr_core::tensor::Tape::new();
            let fwd = m.forward_train(&mut tape, &ex.tokens, 0.7, &mut rng2).unwrap();
            let vals: Vec<f64> = tape.value(fwd.final_mask).data().to_vec();
            let mn = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let mx = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            eprintln!("soft mask min {:.6} max {:.6} mean {:.6}", mn, mx, vals.iter().sum::<f64>()/vals.len() as f64);
        }
    }
    let ev = evaluate(&out.model, &test).unwrap();
    let headline = ev.failure.iter().find(|r| r.theta1 == 0.2 && r.theta2 == 0.3).unwrap();
    eprintln!("TEST S {:.3} P {:.3} R {:.3} F1 {:.3} ACC {:.3} fail% {:.1} empty {}",
        ev.metrics.s, ev.metrics.precision, ev.metrics.recall, ev.metrics.f1, ev.metrics.acc,
        headline.percentage, ev.empty_rationales);
}

#[test]
fn dbg_attribution() {
    use plmr_core::rationalizer::MaskSource;
    use plmr_core::objective::cross_entropy;
    use plmr_core::tensor::{Tape, Tensor};
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    let spec = CorpusSpec { size: 1500, ..CorpusSpec::default() };
    let corpus = synthesize(&spec, 4).unwrap();
    let (train_set, dev, _t) = split(&corpus, (0.8, 0.1, 0.1), 0).unwrap();
    let mut cfg = PlmrConfig::default_config(ModelSize::Base);
    cfg.lambda1 = env_f("DBG_L1", 10.0);
    cfg.lambda2 = env_f("DBG_L2", 0.2);
    let mut tc = TrainConfig::new(ModelConfig::Plmr(cfg));
    tc.epochs = env_f("DBG_EPOCHS", 3.0) as usize;
    tc.batch_size = 16;
    tc.seed = 13;
    let out = train(&tc, &train_set, &dev, None).unwrap();
    let model = match &out.model { plmr_core::trainer::Model::Plmr(m) => m, _ => unreachable!() };

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut ce_gold, mut ce_rand, mut ce_ones) = (0.0, 0.0, 0.0);
    let n_probe = 40;
    for ex in dev.examples.iter().take(n_probe) {
        let n = ex.tokens.len();
        let gold: Vec<f64> = ex.gold_mask.iter().map(|&g| g as f64).collect();
        let k = gold.iter().filter(|&&g| g > 0.5).count();
        let mut randm = vec![0.0; n];
        let mut chosen = 0;
        while chosen < k {
            let i = rng.random_range(0..n);
            if randm[i] == 0.0 { randm[i] = 1.0; chosen += 1; }
        }
        for (mask, acc) in [(&gold, &mut ce_gold), (&randm, &mut ce_rand), (&vec![1.0; n], &mut ce_ones)] {
            let fixed: Vec<Tensor> = (0..model.cfg.m).map(|_| Tensor::vector(mask.clone())).collect();
            let mut tape = Tape::new();
            let fwd = model.forward_paths(&mut tape, &ex.tokens, MaskSource::Fixed(&fixed)).unwrap();
            let ce = cross_entropy(&mut tape, fwd.logits_r, ex.label).unwrap();
            *acc += tape.value(ce).item() / n_probe as f64;
        }
    }
    eprintln!("CE gold {:.4}  random {:.4}  ones {:.4}", ce_gold, ce_rand, ce_ones);
}
