use crate::RunManifest;
use anyhow::Context;
use plmr_core::corpus::{save_jsonl, save_manifest, split, synthesize, CorpusSpec};
use std::path::Path;

pub fn run(
    spec_path: Option<&Path>,
    seed: Option<u64>,
    out: &Path,
    fractions: (f64, f64, f64),
) -> anyhow::Result<()> {
    let spec: CorpusSpec = match spec_path {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading corpus spec {}", path.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("parsing corpus spec {}", path.display()))?
        }
        None => CorpusSpec::default(),
    };
    spec.validate()?;
    let seed = seed.unwrap_or(spec.seed);

    let outputs = ["train.jsonl", "dev.jsonl", "test.jsonl", "vocab.json"]
        .iter()
        .map(|name| out.join(name))
        .collect();
    RunManifest::new("gen-data", serde_json::to_value(&spec)?, seed, outputs).write(out)?;

    let corpus = synthesize(&spec, seed)?;
    let (train, dev, test) = split(&corpus, fractions, seed)?;
    save_jsonl(&train, out.join("train.jsonl"))?;
    save_jsonl(&dev, out.join("dev.jsonl"))?;
    save_jsonl(&test, out.join("test.jsonl"))?;
    save_manifest(&spec.manifest(), out.join("vocab.json"))?;

    println!(
        "wrote {} train / {} dev / {} test examples (vocab {}) to {}",
        train.len(),
        dev.len(),
        test.len(),
        spec.vocab_size(),
        out.display()
    );
    Ok(())
}
