// scratch bisection (not part of the repo tests)
use plmr_core::corpus::{synthesize, CorpusSpec};
use plmr_core::encoder::EncoderConfig;
use plmr_core::rationalizer::{ModelSize, PlmrConfig};
use plmr_core::trainer::{load_checkpoint, resume, train, ModelConfig, TrainConfig};

fn digest(params: &plmr_core::Params) -> f64 {
    params.iter().flat_map(|(_, t)| t.data()).sum()
}

#[test]
fn dbg_resume_bisect() {
    let spec = CorpusSpec {
        size: 24, min_len: 10, max_len: 14, min_span: 2, max_span: 3,
        signal_words_per_polarity: 5, filler_words: 20, meaningless_words: 10,
        ..CorpusSpec::default()
    };
    let corpus = synthesize(&spec, 3).unwrap();
    let mut cfg = PlmrConfig::default_config(ModelSize::Base);
    cfg.encoder = EncoderConfig {
        vocab_size: spec.vocab_size(), max_len: 16, d_model: 16, n_heads: 2,
        d_k: 8, d_ff: 24, n_layers_total: 3,
    };
    cfg.l = 2; cfg.m = 1;
    let mut tc = TrainConfig::new(ModelConfig::Plmr(cfg));
    tc.batch_size = 6; tc.seed = 77;

    // Reference digests after each number of epochs.
    for epochs in 1..=6 {
        let mut c = tc.clone(); c.epochs = epochs;
        let out = train(&c, &corpus, &corpus, None).unwrap();
        eprintln!("full {} epochs: {:.12}", epochs, digest(out.model.params()));
    }
    // Interrupted at 3 + resume to 6.
    let dir = tempfile::tempdir().unwrap();
    let mut c3 = tc.clone(); c3.epochs = 3;
    let out3 = train(&c3, &corpus, &corpus, Some(dir.path())).unwrap();
    eprintln!("interrupted 3 epochs: {:.12}", digest(out3.model.params()));
    let ckpt = load_checkpoint(dir.path().join("last.ckpt")).unwrap();
    eprintln!("ckpt params digest:   {:.12}", digest(&ckpt.params));
    let mut c6 = tc.clone(); c6.epochs = 6;
    let r = resume(&c6, &corpus, &corpus, None, ckpt).unwrap();
    eprintln!("resumed to 6 epochs:  {:.12}", digest(r.model.params()));
}
