use crate::RunManifest;
use anyhow::Context;
use plmr_core::corpus::load_jsonl;
use plmr_core::trainer::{evaluate_with_grid, load_checkpoint, EvalOutcome, Model};
use serde_json::json;
use std::path::Path;

pub fn run(
    ckpt: &Path,
    data: &Path,
    theta1: &[f64],
    theta2: &[f64],
    out: Option<&Path>,
) -> anyhow::Result<()> {
    let checkpoint = load_checkpoint(ckpt)
        .with_context(|| format!("loading checkpoint {}", ckpt.display()))?;
    let model = Model::from_parts(checkpoint.model.clone(), checkpoint.params)?;
    let test = load_jsonl(data)?;

    let grid: Vec<(f64, f64)> = theta1
        .iter()
        .flat_map(|&t1| theta2.iter().map(move |&t2| (t1, t2)))
        .collect();
    let eval = evaluate_with_grid(&model, &test, &grid)?;
    let report = report_json(&eval);

    if let Some(dir) = out {
        RunManifest::new(
            "eval",
            json!({ "ckpt": ckpt, "data": data, "theta1": theta1, "theta2": theta2 }),
            0,
            vec![dir.join("eval.json")],
        )
        .write(dir)?;
        std::fs::write(dir.join("eval.json"), serde_json::to_string_pretty(&report)?)?;
    }

    // The printed row and the JSON report carry the same numbers.
    let m = &eval.metrics;
    println!("        S      ACC        P        R       F1");
    println!(
        "{:>9.4}{:>9.4}{:>9.4}{:>9.4}{:>9.4}",
        m.s, m.acc, m.precision, m.recall, m.f1
    );
    println!();
    println!("failure grid (% of test examples):");
    println!("theta1  theta2   failed%   flagged/total (excluded)");
    for r in &eval.failure {
        println!(
            "{:>6.2}{:>8.2}{:>9.2}   {}/{} ({})",
            r.theta1, r.theta2, r.percentage, r.flagged, r.total, r.excluded
        );
    }
    if eval.empty_rationales > 0 {
        println!();
        println!("empty rationales: {}", eval.empty_rationales);
    }
    Ok(())
}

pub(crate) fn report_json(eval: &EvalOutcome) -> serde_json::Value {
    json!({
        "metrics": {
            "s": eval.metrics.s,
            "acc": eval.metrics.acc,
            "p": eval.metrics.precision,
            "r": eval.metrics.recall,
            "f1": eval.metrics.f1,
        },
        "failure_grid": eval.failure.iter().map(|r| json!({
            "theta1": r.theta1,
            "theta2": r.theta2,
            "percentage": r.percentage,
            "flagged": r.flagged,
            "total": r.total,
            "excluded": r.excluded,
        })).collect::<Vec<_>>(),
        "empty_rationales": eval.empty_rationales,
    })
}
