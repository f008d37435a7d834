use super::{default_plmr_config, default_train_config, load_data_dir, load_train_config};
use crate::RunManifest;
use plmr_core::trainer::{sweep, ModelConfig, SweepParam};
use std::path::Path;

pub fn run(
    param: &str,
    values: &[f64],
    config: Option<&Path>,
    data: &Path,
    seeds: u64,
    out: &Path,
) -> anyhow::Result<()> {
    let param = SweepParam::parse(param).map_err(anyhow::Error::msg)?;
    let data = load_data_dir(data)?;
    let base = match config {
        Some(path) => load_train_config(path)?,
        None => default_train_config(ModelConfig::Plmr(default_plmr_config(&data))),
    };
    let seeds: Vec<u64> = (0..seeds).collect();

    RunManifest::new(
        "sweep",
        serde_json::json!({ "param": param, "values": values, "base": &base, "seeds": &seeds }),
        seeds.first().copied().unwrap_or(0),
        vec![out.join("report.json"), out.join("report.csv")],
    )
    .write(out)?;

    let report = sweep(param, values, &base, &data.train, &data.dev, &data.test, &seeds)?;
    std::fs::write(out.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    std::fs::write(out.join("report.csv"), report.to_csv())?;

    println!("value   mean_F1   sd_F1   mean_S   best");
    for (value, arm) in &report.rows {
        println!(
            "{:<8}{:>8.3}{:>8.3}{:>8.3}{:>6}",
            value,
            arm.mean_f1,
            arm.sd_f1,
            arm.mean_s,
            if *value == report.best_value { "*" } else { "" }
        );
    }
    Ok(())
}
