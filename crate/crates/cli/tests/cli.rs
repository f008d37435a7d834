//! End-to-end command-line surface: outputs, manifests, determinism, and
//! exit codes, on a corpus small enough to train in seconds.

use std::path::Path;
use std::process::{Command, Output};

fn plmr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plmr"))
        .args(args)
        .env("PLMR_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn assert_success(out: &Output, context: &str) {
    assert!(
        out.status.success(),
        "{context} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn tiny_spec(dir: &Path) -> String {
    let spec = serde_json::json!({
        "aspect_count": 3,
        "signal_words_per_polarity": 5,
        "filler_words": 20,
        "meaningless_words": 10,
        "min_len": 10,
        "max_len": 14,
        "min_span": 2,
        "max_span": 3,
        "rho": 0.9,
        "class_balance": 0.5,
        "target_aspect": 0,
        "size": 60,
        "seed": 0,
    });
    let path = dir.join("spec.json");
    std::fs::write(&path, spec.to_string()).unwrap();
    path.display().to_string()
}

fn tiny_train_config(dir: &Path) -> String {
    let config = serde_json::json!({
        "model": {
            "type": "plmr",
            "encoder": {
                "vocab_size": 60,
                "max_len": 16,
                "d_model": 16,
                "n_heads": 2,
                "d_k": 8,
                "d_ff": 24,
                "n_layers_total": 3
            },
            "l": 2,
            "m": 1,
            "alpha": 0.2,
            "tau": 1.0,
            "anneal": { "start": 1.0, "end": 0.5 },
            "straight_through": true,
            "match_transform": { "kind": "exp-base", "base": 1.5 },
            "lambda": 1.0,
            "lambda1": 10.0,
            "lambda2": 0.2,
            "mask_mode": "states-and-bias",
            "threshold_constraint": true
        },
        "epochs": 2,
        "batch_size": 8,
        "seed": 0,
        "adam": {
            "lr_encoder": 2e-4,
            "lr_head": 3e-3,
            "beta1": 0.9,
            "beta2": 0.999,
            "epsilon": 1e-8
        },
        "eval_every": 1,
        "loss_mean": false,
        "grad_clip": null,
        "stop_after": null
    });
    let path = dir.join("train.json");
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path.display().to_string()
}

#[test]
fn gen_data_writes_identical_files_for_identical_seeds() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = tiny_spec(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));

    for dir in [&a, &b] {
        let out = plmr(&[
            "gen-data",
            "--spec",
            &spec,
            "--seed",
            "7",
            "--out",
            dir.to_str().unwrap(),
        ]);
        assert_success(&out, "gen-data");
    }
    for name in ["train.jsonl", "dev.jsonl", "test.jsonl", "vocab.json"] {
        let left = std::fs::read(a.join(name)).unwrap();
        let right = std::fs::read(b.join(name)).unwrap();
        assert_eq!(left, right, "{name} differs between identical seeds");
        assert!(!left.is_empty());
    }

    // The manifest exists, was written first, and lists every output.
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "gen-data");
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 4);
}

#[test]
fn missing_required_flag_is_a_usage_error() {
    let out = plmr(&["gen-data"]);
    assert_eq!(out.status.code(), Some(2));

    let out = plmr(&["sweep", "--param", "l", "--data", "x", "--out", "y"]);
    assert_eq!(out.status.code(), Some(2), "missing --values");
}

#[test]
fn unknown_config_keys_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = tmp.path().join("bad_spec.json");
    std::fs::write(&spec, r#"{"aspect_count": 3, "tpyo": 1}"#).unwrap();
    let out = plmr(&[
        "gen-data",
        "--spec",
        spec.to_str().unwrap(),
        "--out",
        tmp.path().join("d").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("tpyo") || stderr.contains("unknown field"), "{stderr}");
}

#[test]
fn train_eval_diagnose_and_resume_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = tiny_spec(tmp.path());
    let data = tmp.path().join("data");
    assert_success(
        &plmr(&["gen-data", "--spec", &spec, "--out", data.to_str().unwrap()]),
        "gen-data",
    );

    let config = tiny_train_config(tmp.path());
    let run = tmp.path().join("run");
    let out = plmr(&[
        "train",
        "--model",
        "plmr",
        "--config",
        &config,
        "--data",
        data.to_str().unwrap(),
        "--seed",
        "1",
        "--out",
        run.to_str().unwrap(),
    ]);
    assert_success(&out, "train");

    // One trace row per epoch plus the header.
    let trace = std::fs::read_to_string(run.join("trace.csv")).unwrap();
    let lines: Vec<&str> = trace.trim().lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("epoch,loss_total"));
    assert!(run.join("last.ckpt").exists());
    assert!(run.join("best.ckpt").exists());

    // Eval prints the metric row and writes a matching JSON report.
    let eval_dir = tmp.path().join("eval");
    let out = plmr(&[
        "eval",
        "--ckpt",
        run.join("last.ckpt").to_str().unwrap(),
        "--data",
        data.join("test.jsonl").to_str().unwrap(),
        "--out",
        eval_dir.to_str().unwrap(),
    ]);
    assert_success(&out, "eval");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(eval_dir.join("eval.json")).unwrap())
            .unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    let s = report["metrics"]["s"].as_f64().unwrap();
    assert!(
        stdout.contains(&format!("{s:.4}")),
        "printed table must match the JSON: {stdout}"
    );
    // Default failure grid is 2 x 3.
    assert_eq!(report["failure_grid"].as_array().unwrap().len(), 6);

    // Diagnose emits both CSV artifacts, one homogeneity row per layer.
    let diag = tmp.path().join("diag");
    let out = plmr(&[
        "diagnose",
        "--ckpt",
        run.join("last.ckpt").to_str().unwrap(),
        "--data",
        data.join("dev.jsonl").to_str().unwrap(),
        "--layers",
        "all",
        "--out",
        diag.to_str().unwrap(),
    ]);
    assert_success(&out, "diagnose");
    let homo = std::fs::read_to_string(diag.join("homogeneity.csv")).unwrap();
    let rows: Vec<&str> = homo.trim().lines().collect();
    assert_eq!(rows[0], "layer,trace");
    assert_eq!(rows.len(), 1 + 3 + 1); // header + (layers 0..=3)
    let pca = std::fs::read_to_string(diag.join("attention_pca.csv")).unwrap();
    assert!(pca.starts_with("x,y,layer,head,token\n"));
    assert!(pca.trim().lines().count() > 1);

    // Re-running diagnose is deterministic.
    let diag2 = tmp.path().join("diag2");
    assert_success(
        &plmr(&[
            "diagnose",
            "--ckpt",
            run.join("last.ckpt").to_str().unwrap(),
            "--data",
            data.join("dev.jsonl").to_str().unwrap(),
            "--layers",
            "all",
            "--out",
            diag2.to_str().unwrap(),
        ]),
        "diagnose rerun",
    );
    assert_eq!(
        std::fs::read(diag.join("homogeneity.csv")).unwrap(),
        std::fs::read(diag2.join("homogeneity.csv")).unwrap()
    );

    // Resuming from an interrupted run reproduces the uninterrupted one.
    let mut cfg: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("train.json")).unwrap())
            .unwrap();
    cfg["epochs"] = serde_json::json!(4);
    let cfg4 = tmp.path().join("train4.json");
    std::fs::write(&cfg4, cfg.to_string()).unwrap();
    cfg["stop_after"] = serde_json::json!(2);
    let cfg_stop = tmp.path().join("train4_stop2.json");
    std::fs::write(&cfg_stop, cfg.to_string()).unwrap();

    let long = tmp.path().join("long");
    assert_success(
        &plmr(&[
            "train",
            "--model",
            "plmr",
            "--config",
            cfg4.to_str().unwrap(),
            "--data",
            data.to_str().unwrap(),
            "--seed",
            "1",
            "--out",
            long.to_str().unwrap(),
        ]),
        "long train",
    );
    let interrupted = tmp.path().join("interrupted");
    assert_success(
        &plmr(&[
            "train",
            "--model",
            "plmr",
            "--config",
            cfg_stop.to_str().unwrap(),
            "--data",
            data.to_str().unwrap(),
            "--seed",
            "1",
            "--out",
            interrupted.to_str().unwrap(),
        ]),
        "interrupted train",
    );
    let resumed = tmp.path().join("resumed");
    assert_success(
        &plmr(&[
            "train",
            "--model",
            "plmr",
            "--config",
            cfg4.to_str().unwrap(),
            "--data",
            data.to_str().unwrap(),
            "--seed",
            "1",
            "--out",
            resumed.to_str().unwrap(),
            "--resume",
            interrupted.join("last.ckpt").to_str().unwrap(),
        ]),
        "resumed train",
    );
    let full = plmr_core::trainer::load_checkpoint(long.join("last.ckpt")).unwrap();
    let cont = plmr_core::trainer::load_checkpoint(resumed.join("last.ckpt")).unwrap();
    for (name, tensor) in full.params.iter() {
        assert_eq!(cont.params.get(name).data(), tensor.data(), "{name}");
    }

    // Missing checkpoint is a runtime error.
    let out = plmr(&[
        "eval",
        "--ckpt",
        tmp.path().join("nope.ckpt").to_str().unwrap(),
        "--data",
        data.join("test.jsonl").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn compare_and_sweep_write_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = tiny_spec(tmp.path());
    let data = tmp.path().join("data");
    assert_success(
        &plmr(&["gen-data", "--spec", &spec, "--out", data.to_str().unwrap()]),
        "gen-data",
    );
    let config = tiny_train_config(tmp.path());

    let cmp = tmp.path().join("cmp");
    let out = plmr(&[
        "compare",
        "--config",
        &config,
        "--data",
        data.to_str().unwrap(),
        "--seeds",
        "2",
        "--out",
        cmp.to_str().unwrap(),
    ]);
    assert_success(&out, "compare");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(cmp.join("report.json")).unwrap()).unwrap();
    let arms = report["arms"].as_array().unwrap();
    assert_eq!(arms.len(), 2);
    for arm in arms {
        assert_eq!(arm["runs"].as_array().unwrap().len(), 2);
    }
    let csv = std::fs::read_to_string(cmp.join("report.csv")).unwrap();
    assert!(csv.starts_with("arm,seed,s,acc,p,r,f1,failure_rate,empty_rationales\n"));
    assert_eq!(csv.trim().lines().count(), 1 + 4);

    let swp = tmp.path().join("swp");
    let out = plmr(&[
        "sweep",
        "--param",
        "lambda",
        "--values",
        "0.5,1",
        "--config",
        &config,
        "--data",
        data.to_str().unwrap(),
        "--seeds",
        "1",
        "--out",
        swp.to_str().unwrap(),
    ]);
    assert_success(&out, "sweep");
    let csv = std::fs::read_to_string(swp.join("report.csv")).unwrap();
    assert_eq!(csv.trim().lines().count(), 1 + 2);
    assert!(csv.contains(",1\n") || csv.ends_with(",1"), "a best row is flagged: {csv}");

    // Malformed value list is a usage error.
    let out = plmr(&[
        "sweep",
        "--param",
        "l",
        "--values",
        "one,two",
        "--config",
        &config,
        "--data",
        data.to_str().unwrap(),
        "--out",
        tmp.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}
