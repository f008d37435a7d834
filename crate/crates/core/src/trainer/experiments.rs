//! Scripted experiments: paired model comparison over seeds and the
//! layer-split / reduction-depth / lambda sweeps.

use super::{evaluate, train, Model, ModelConfig, TrainConfig, TrainError};
use crate::corpus::Corpus;
use crate::diagnostics::RationaleMetrics;
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

/// One trained run scored on the test set.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub metrics: RationaleMetrics,
    /// Failure percentage at the loosest grid cell (theta1 0.2, theta2 0.3).
    pub failure_rate: f64,
    pub empty_rationales: usize,
    pub train_seconds: f64,
}

/// Mean and standard deviation over a set of runs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ArmSummary {
    pub name: String,
    pub runs: Vec<RunSummary>,
    pub mean_f1: f64,
    pub sd_f1: f64,
    pub mean_acc: f64,
    pub mean_s: f64,
    pub mean_failure_rate: f64,
    pub sd_failure_rate: f64,
}

impl ArmSummary {
    fn from_runs(name: String, mut runs: Vec<RunSummary>) -> ArmSummary {
        runs.sort_by_key(|r| r.seed);
        let n = runs.len() as f64;
        let mean = |f: &dyn Fn(&RunSummary) -> f64| runs.iter().map(|r| f(r)).sum::<f64>() / n;
        let mean_f1 = mean(&|r| r.metrics.f1);
        let mean_failure = mean(&|r| r.failure_rate);
        let sd = |f: &dyn Fn(&RunSummary) -> f64, mu: f64| {
            if runs.len() < 2 {
                0.0
            } else {
                (runs.iter().map(|r| (f(r) - mu).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            }
        };
        ArmSummary {
            mean_f1,
            sd_f1: sd(&|r| r.metrics.f1, mean_f1),
            mean_acc: mean(&|r| r.metrics.acc),
            mean_s: mean(&|r| r.metrics.s),
            mean_failure_rate: mean_failure,
            sd_failure_rate: sd(&|r| r.failure_rate, mean_failure),
            name,
            runs,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompareReport {
    pub arms: Vec<ArmSummary>,
    pub seeds: Vec<u64>,
}

impl CompareReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("arm,seed,s,acc,p,r,f1,failure_rate,empty_rationales\n");
        for arm in &self.arms {
            for run in &arm.runs {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    arm.name,
                    run.seed,
                    run.metrics.s,
                    run.metrics.acc,
                    run.metrics.precision,
                    run.metrics.recall,
                    run.metrics.f1,
                    run.failure_rate,
                    run.empty_rationales,
                ));
            }
        }
        out
    }
}

/// Worker-thread cap: the PLMR_THREADS environment variable, else the
/// machine's parallelism, never more than the job count.
pub fn worker_threads(jobs: usize) -> usize {
    let available = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    let cap = std::env::var("PLMR_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(available);
    cap.min(jobs).max(1)
}

struct Job {
    arm: usize,
    seed: u64,
}

/// Train every (arm, seed) pair and summarize per arm. Arms must share the
/// same target sparsity so the comparison is at matched selection budgets.
/// Runs are independent; they may execute on parallel workers, and results
/// are aggregated in seed order so the report is thread-count invariant.
pub fn compare(
    arms: &[(String, TrainConfig)],
    train_set: &Corpus,
    dev_set: &Corpus,
    test_set: &Corpus,
    seeds: &[u64],
) -> Result<CompareReport, TrainError> {
    if arms.is_empty() || seeds.is_empty() {
        return Err(TrainError::BadConfig("compare needs arms and seeds".into()));
    }
    let alpha0 = arms[0].1.model.alpha();
    for (name, config) in arms {
        config.validate()?;
        if (config.model.alpha() - alpha0).abs() > 1e-12 {
            return Err(TrainError::BadConfig(format!(
                "arm {name} has target sparsity {} but the first arm uses {alpha0}",
                config.model.alpha()
            )));
        }
    }

    let jobs: Vec<Job> = (0..arms.len())
        .flat_map(|arm| seeds.iter().map(move |&seed| Job { arm, seed }))
        .collect();
    let results: Mutex<Vec<(usize, RunSummary)>> = Mutex::new(Vec::with_capacity(jobs.len()));
    let next = AtomicUsize::new(0);
    let workers = worker_threads(jobs.len());

    std::thread::scope(|scope| -> Result<(), TrainError> {
        let mut handles = Vec::new();
        for _ in 0..workers {
            handles.push(scope.spawn(|| -> Result<(), TrainError> {
                loop {
                    let idx = next.fetch_add(1, Ordering::Relaxed);
                    if idx >= jobs.len() {
                        return Ok(());
                    }
                    let job = &jobs[idx];
                    let summary = run_one(&arms[job.arm].1, job.seed, train_set, dev_set, test_set)?;
                    results.lock().unwrap().push((job.arm, summary));
                }
            }));
        }
        for handle in handles {
            handle.join().expect("worker panicked")?;
        }
        Ok(())
    })?;

    let results = results.into_inner().unwrap();
    let mut per_arm: Vec<Vec<RunSummary>> = vec![Vec::new(); arms.len()];
    for (arm, summary) in results {
        per_arm[arm].push(summary);
    }
    let arms = arms
        .iter()
        .zip(per_arm)
        .map(|((name, _), runs)| ArmSummary::from_runs(name.clone(), runs))
        .collect();
    Ok(CompareReport {
        arms,
        seeds: seeds.to_vec(),
    })
}

fn run_one(
    base: &TrainConfig,
    seed: u64,
    train_set: &Corpus,
    dev_set: &Corpus,
    test_set: &Corpus,
) -> Result<RunSummary, TrainError> {
    let mut config = base.clone();
    config.seed = seed;
    let started = std::time::Instant::now();
    let out = train(&config, train_set, dev_set, None)?;
    let train_seconds = started.elapsed().as_secs_f64();
    // Score the retained best-dev model, falling back to the final one.
    let model = match out.best_params {
        Some(params) => Model::from_parts(config.model.clone(), params)?,
        None => out.model,
    };
    summarize(&model, seed, test_set, train_seconds)
}

fn summarize(
    model: &Model,
    seed: u64,
    test_set: &Corpus,
    train_seconds: f64,
) -> Result<RunSummary, TrainError> {
    let eval = evaluate(model, test_set)?;
    let failure_rate = eval
        .failure
        .iter()
        .find(|r| r.theta1 == 0.2 && r.theta2 == 0.3)
        .map(|r| r.percentage)
        .unwrap_or(0.0);
    Ok(RunSummary {
        seed,
        metrics: eval.metrics,
        failure_rate,
        empty_rationales: eval.empty_rationales,
        train_seconds,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    L,
    M,
    Lambda,
}

impl SweepParam {
    pub fn parse(s: &str) -> Result<SweepParam, String> {
        match s {
            "l" => Ok(SweepParam::L),
            "m" => Ok(SweepParam::M),
            "lambda" => Ok(SweepParam::Lambda),
            other => Err(format!("unknown sweep parameter {other:?} (use l, m, lambda)")),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepReport {
    pub param: SweepParam,
    pub rows: Vec<(f64, ArmSummary)>,
    pub best_value: f64,
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("value,mean_f1,sd_f1,mean_acc,mean_s,mean_failure_rate,best\n");
        for (value, arm) in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                value,
                arm.mean_f1,
                arm.sd_f1,
                arm.mean_acc,
                arm.mean_s,
                arm.mean_failure_rate,
                if *value == self.best_value { 1 } else { 0 },
            ));
        }
        out
    }
}

/// Sweep one hyperparameter of the split model over the given values,
/// training `seeds` runs per value. The best-F1 row is flagged.
pub fn sweep(
    param: SweepParam,
    values: &[f64],
    base: &TrainConfig,
    train_set: &Corpus,
    dev_set: &Corpus,
    test_set: &Corpus,
    seeds: &[u64],
) -> Result<SweepReport, TrainError> {
    let plmr = match &base.model {
        ModelConfig::Plmr(c) => c.clone(),
        ModelConfig::Rnp(_) => {
            return Err(TrainError::BadConfig(
                "sweeps are defined over the split model".into(),
            ))
        }
    };
    if values.is_empty() {
        return Err(TrainError::BadConfig("sweep needs at least one value".into()));
    }

    let mut arms = Vec::with_capacity(values.len());
    for &value in values {
        let mut cfg = plmr.clone();
        match param {
            SweepParam::L => {
                cfg.l = value as usize;
                cfg.m = cfg.m.min(cfg.l);
            }
            SweepParam::M => cfg.m = value as usize,
            SweepParam::Lambda => cfg.lambda = value,
        }
        cfg.validate().map_err(|e| {
            TrainError::BadConfig(format!("sweep value {value} is invalid: {e}"))
        })?;
        let mut config = base.clone();
        config.model = ModelConfig::Plmr(cfg);
        arms.push((format!("{param:?}={value}").to_lowercase(), config));
    }

    let report = compare(&arms, train_set, dev_set, test_set, seeds)?;
    let rows: Vec<(f64, ArmSummary)> = values
        .iter()
        .copied()
        .zip(report.arms.into_iter())
        .collect();
    let best_value = rows
        .iter()
        .max_by(|a, b| a.1.mean_f1.partial_cmp(&b.1.mean_f1).unwrap())
        .map(|(v, _)| *v)
        .expect("nonempty rows");
    Ok(SweepReport {
        param,
        rows,
        best_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{synthesize, CorpusSpec};

    fn tiny_setup() -> (Corpus, TrainConfig) {
        let spec = CorpusSpec {
            size: 12,
            min_len: 12,
            max_len: 16,
            min_span: 2,
            max_span: 3,
            signal_words_per_polarity: 5,
            filler_words: 20,
            meaningless_words: 10,
            ..CorpusSpec::default()
        };
        let corpus = synthesize(&spec, 1).unwrap();
        let mut config = TrainConfig::new(ModelConfig::Plmr(
            super::super::tests::tiny_plmr_config(spec.vocab_size()),
        ));
        config.epochs = 1;
        config.batch_size = 6;
        (corpus, config)
    }

    #[test]
    fn compare_produces_one_summary_per_arm_and_seed() {
        let (corpus, config) = tiny_setup();
        let arms = vec![
            ("a".to_string(), config.clone()),
            ("b".to_string(), config),
        ];
        let report = compare(&arms, &corpus, &corpus, &corpus, &[1, 2]).unwrap();
        assert_eq!(report.arms.len(), 2);
        for arm in &report.arms {
            assert_eq!(arm.runs.len(), 2);
            assert_eq!(arm.runs[0].seed, 1);
            assert_eq!(arm.runs[1].seed, 2);
        }
    }

    #[test]
    fn identical_configs_give_identical_distributions() {
        let (corpus, config) = tiny_setup();
        let arms = vec![
            ("x".to_string(), config.clone()),
            ("y".to_string(), config),
        ];
        let report = compare(&arms, &corpus, &corpus, &corpus, &[7]).unwrap();
        assert_eq!(report.arms[0].mean_f1, report.arms[1].mean_f1);
    }

    #[test]
    fn mismatched_sparsity_is_rejected() {
        let (corpus, config) = tiny_setup();
        let mut other = config.clone();
        if let ModelConfig::Plmr(c) = &mut other.model {
            c.alpha = 0.4;
        }
        let arms = vec![("a".to_string(), config), ("b".to_string(), other)];
        assert!(compare(&arms, &corpus, &corpus, &corpus, &[1]).is_err());
    }

    #[test]
    fn sweep_flags_a_best_row_and_validates_values() {
        let (corpus, config) = tiny_setup();
        let report = sweep(
            SweepParam::Lambda,
            &[0.5, 1.0],
            &config,
            &corpus,
            &corpus,
            &corpus,
            &[3],
        )
        .unwrap();
        assert_eq!(report.rows.len(), 2);
        assert!(report.rows.iter().any(|(v, _)| *v == report.best_value));

        // l >= total layers is invalid.
        let res = sweep(
            SweepParam::L,
            &[3.0],
            &config,
            &corpus,
            &corpus,
            &corpus,
            &[3],
        );
        assert!(res.is_err());
    }
}
