use crate::RunManifest;
use anyhow::{bail, Context};
use plmr_core::corpus::load_jsonl;
use plmr_core::diagnostics::{layer_homogeneity, pca_project, EncoderStates, HomogeneityReport};
use plmr_core::encoder::AttentionRecord;
use plmr_core::trainer::{load_checkpoint, Model};
use serde_json::json;
use std::path::Path;

pub fn run(
    ckpt: &Path,
    data: &Path,
    layers: &str,
    out: &Path,
    example: usize,
) -> anyhow::Result<()> {
    let checkpoint = load_checkpoint(ckpt)
        .with_context(|| format!("loading checkpoint {}", ckpt.display()))?;
    let model = Model::from_parts(checkpoint.model.clone(), checkpoint.params)?;
    let corpus = load_jsonl(data)?;
    if example >= corpus.len() {
        bail!(
            "--example {example} out of range: the corpus has {} examples",
            corpus.len()
        );
    }

    RunManifest::new(
        "diagnose",
        json!({ "ckpt": ckpt, "data": data, "layers": layers, "example": example }),
        0,
        vec![
            out.join("homogeneity.csv"),
            out.join("homogeneity.json"),
            out.join("attention_pca.csv"),
        ],
    )
    .write(out)?;

    let report = match &model {
        Model::Plmr(m) => homogeneity_of(m, &corpus, layers)?,
        Model::Rnp(m) => homogeneity_of(m, &corpus, layers)?,
    };
    std::fs::write(out.join("homogeneity.csv"), report.to_csv())?;
    std::fs::write(
        out.join("homogeneity.json"),
        serde_json::to_string_pretty(&report)?,
    )?;

    println!("layer,trace");
    for (layer, trace) in &report.layers {
        println!("{layer},{trace}");
    }
    qualitative_note(&report);

    // Attention-weight vectors of one example, all layers and heads,
    // projected onto two principal components.
    let records: Vec<AttentionRecord> = match &model {
        Model::Plmr(m) => m.attention_records(&corpus.examples[example].tokens)?,
        Model::Rnp(_) => {
            bail!("attention projection is only defined for the split model checkpoint")
        }
    };
    let mut vectors = Vec::new();
    let mut labels = Vec::new();
    for rec in &records {
        for token in 0..rec.weights.rows() {
            vectors.push(rec.weights.row(token).to_vec());
            labels.push((rec.layer, rec.head, token));
        }
    }
    let projection = pca_project(&vectors)?;
    let mut csv = String::from("x,y,layer,head,token\n");
    for ((layer, head, token), xy) in labels.iter().zip(&projection.coords) {
        csv.push_str(&format!("{},{},{layer},{head},{token}\n", xy[0], xy[1]));
    }
    std::fs::write(out.join("attention_pca.csv"), csv)?;
    println!(
        "attention pca: {} vectors, explained variance {:.4} + {:.4}",
        vectors.len(),
        projection.explained[0],
        projection.explained[1]
    );
    Ok(())
}

fn homogeneity_of(
    model: &impl EncoderStates,
    corpus: &plmr_core::corpus::Corpus,
    layers: &str,
) -> anyhow::Result<HomogeneityReport> {
    let requested: Vec<usize> = if layers.trim() == "all" {
        (0..=model.layer_count()).collect()
    } else {
        layers
            .split(',')
            .map(|p| p.trim().parse::<usize>().context("parsing --layers"))
            .collect::<Result<_, _>>()?
    };
    Ok(layer_homogeneity(model, corpus, &requested)?)
}

/// Reported, not asserted: whether the deepest layer is more homogeneous
/// (smaller trace) than the middle of the stack depends on the weights.
fn qualitative_note(report: &HomogeneityReport) {
    if report.layers.len() < 3 {
        return;
    }
    let (last_layer, last) = *report.layers.last().unwrap();
    let (mid_layer, mid) = report.layers[report.layers.len() / 2];
    let direction = if last < mid { "below" } else { "not below" };
    println!(
        "note: final-layer trace {last:.4} (layer {last_layer}) is {direction} the mid-stack trace {mid:.4} (layer {mid_layer})"
    );
}
