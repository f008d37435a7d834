use super::{default_plmr_config, default_train_config, load_data_dir, load_train_config, rnp_arm_of};
use crate::RunManifest;
use plmr_core::trainer::{compare, ModelConfig};
use std::path::Path;

pub fn run(
    config: Option<&Path>,
    data: &Path,
    seeds: u64,
    out: &Path,
    alpha: Option<f64>,
) -> anyhow::Result<()> {
    let data = load_data_dir(data)?;
    let mut base = match config {
        Some(path) => load_train_config(path)?,
        None => default_train_config(ModelConfig::Plmr(default_plmr_config(&data))),
    };
    if let (Some(alpha), ModelConfig::Plmr(c)) = (alpha, &mut base.model) {
        c.alpha = alpha;
    }
    let rnp = rnp_arm_of(&base)?;
    let seeds: Vec<u64> = (0..seeds).collect();

    RunManifest::new(
        "compare",
        serde_json::json!({ "plmr": &base, "rnp": &rnp, "seeds": &seeds }),
        seeds.first().copied().unwrap_or(0),
        vec![out.join("report.json"), out.join("report.csv")],
    )
    .write(out)?;

    let arms = vec![("plmr".to_string(), base), ("rnp".to_string(), rnp)];
    let report = compare(&arms, &data.train, &data.dev, &data.test, &seeds)?;

    std::fs::write(out.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    std::fs::write(out.join("report.csv"), report.to_csv())?;

    println!("arm     mean_F1   sd_F1   mean_ACC  mean_S  failure%");
    for arm in &report.arms {
        println!(
            "{:<7}{:>8.3}{:>8.3}{:>10.3}{:>8.3}{:>9.2}",
            arm.name, arm.mean_f1, arm.sd_f1, arm.mean_acc, arm.mean_s, arm.mean_failure_rate
        );
    }
    Ok(())
}
