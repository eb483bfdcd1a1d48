//! End-to-end runs of the `legnn` binary.

use std::path::Path;
use std::process::{Command, Output};

fn legnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_legnn"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn write(path: &Path, text: &str) -> String {
    std::fs::write(path, text).unwrap();
    path.to_str().unwrap().to_string()
}

const QUICK_TRAIN: &str = r#"{"epochs": 6, "warmup_epochs": 4, "hidden": 8, "mask_iterations": 3}"#;

/// A small generated dataset in `dir/data`.
fn dataset(dir: &Path) -> String {
    let sbm = write(
        &dir.join("sbm.json"),
        r#"{"classes": 3, "nodes_per_class": 30, "p_in": 0.2, "p_out": 0.02,
            "feature_dim": 4, "feature_shift": 3.0, "train_fraction": 0.2, "val_fraction": 0.2}"#,
    );
    let data = dir.join("data");
    let out = legnn(&[
        "gen-sbm",
        "--config",
        &sbm,
        "--seed",
        "2",
        "--out",
        data.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    data.to_str().unwrap().to_string()
}

#[test]
fn noise_train_evaluate_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let data = dataset(tmp.path());
    for name in [
        "meta.json",
        "edges.tsv",
        "features.csv",
        "labels.csv",
        "splits.json",
    ] {
        assert!(Path::new(&data).join(name).exists(), "{name}");
    }

    let noise = tmp.path().join("noise");
    let out = legnn(&[
        "inject-noise",
        "--data",
        &data,
        "--tau",
        "0.3",
        "--seed",
        "4",
        "--out",
        noise.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let labels = std::fs::read_to_string(noise.join("noisy_labels.csv")).unwrap();
    assert_eq!(labels.lines().count(), 90);
    assert!(labels.lines().any(|l| l == "-1"));
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(noise.join("noise_meta.json")).unwrap())
            .unwrap();
    assert_eq!(meta["kind"], "symmetric");
    assert_eq!(meta["seed"], 4);

    let cfg = write(&tmp.path().join("train.json"), QUICK_TRAIN);
    let run = tmp.path().join("run");
    let out = legnn(&[
        "train",
        "--data",
        &data,
        "--labels",
        noise.join("noisy_labels.csv").to_str().unwrap(),
        "--method",
        "legnn",
        "--config",
        &cfg,
        "--out",
        run.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let trace = std::fs::read_to_string(run.join("trace.csv")).unwrap();
    assert_eq!(
        trace.lines().next(),
        Some("epoch,train_loss,val_acc,regathered")
    );
    assert_eq!(trace.lines().count(), 7);
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["method"], "legnn");
    let trained = metrics["run"]["test_accuracy"].as_f64().unwrap();

    let out = legnn(&[
        "evaluate",
        "--data",
        &data,
        "--model",
        run.join("model.json").to_str().unwrap(),
        "--candidates",
        run.join("candidates.json").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["test_accuracy"].as_f64().unwrap(), trained);
    assert_eq!(report["label_quality"], metrics["run"]["label_quality"]);
}

#[test]
fn sweep_writes_results() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        &tmp.path().join("exp.json"),
        &format!(
            r#"{{"dataset": {{"sbm": {{"classes": 3, "nodes_per_class": 20, "feature_dim": 3, "p_in": 0.2, "p_out": 0.02, "train_fraction": 0.2, "val_fraction": 0.2}}}},
                "noise": {{"kind": "pair", "tau": 0.2}},
                "methods": ["gcn", "legnn"],
                "seeds": [0, 1],
                "train": {QUICK_TRAIN},
                "grid": {{"mask_rate": [0.2, 0.5]}}}}"#
        ),
    );
    let out_dir = tmp.path().join("sweep");
    let out = legnn(&[
        "sweep",
        "--config",
        &cfg,
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let results: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("results.json")).unwrap())
            .unwrap();
    assert_eq!(results["results"].as_array().unwrap().len(), 2);
    let csv = std::fs::read_to_string(out_dir.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(String::from_utf8_lossy(&out.stdout).contains("legnn"));
}

#[test]
fn bench_reports_overhead() {
    let tmp = tempfile::tempdir().unwrap();
    let data = dataset(tmp.path());
    let cfg = write(
        &tmp.path().join("bench.json"),
        &format!(
            r#"{{"train": {QUICK_TRAIN}, "repeats": 1, "gather_passes": 1, "scaling_edges": [200, 400]}}"#
        ),
    );
    let out_dir = tmp.path().join("bench");
    let out = legnn(&[
        "bench",
        "--data",
        &data,
        "--config",
        &cfg,
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("bench.json")).unwrap())
            .unwrap();
    assert!(report["overhead"]["ratio"].as_f64().unwrap() > 0.0);
    assert_eq!(
        report["scaling"]["edge_ratio_of_ratios"]
            .as_array()
            .unwrap()
            .len(),
        1
    );
}

#[test]
fn validation_failures_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let data = dataset(tmp.path());
    let out = tmp.path().join("o");
    let out = out.to_str().unwrap();
    let bad_cfg = write(
        &tmp.path().join("bad.json"),
        r#"{"epochs": 5, "learning_rate": 0.1}"#,
    );
    let cases: Vec<Vec<&str>> = vec![
        vec![
            "inject-noise",
            "--data",
            &data,
            "--tau",
            "1.5",
            "--out",
            out,
        ],
        vec!["inject-noise", "--data", &data, "--tau", "0.2"],
        vec!["train", "--data", "/nonexistent/dataset", "--out", out],
        vec!["train", "--data", &data, "--config", &bad_cfg],
        vec!["train", "--data", &data, "--method", "bogus"],
        vec!["sweep"],
        vec!["gen-sbm", "--p-in", "0.01", "--p-out", "0.1", "--out", out],
    ];
    for args in cases {
        let result = legnn(&args);
        assert_eq!(
            code(&result),
            1,
            "{args:?}: {}",
            String::from_utf8_lossy(&result.stderr)
        );
        assert!(!result.stderr.is_empty());
    }
}

#[test]
fn runtime_failures_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let data = dataset(tmp.path());
    // A regular file where the output directory should go.
    let blocker = tmp.path().join("blocker");
    std::fs::write(&blocker, "").unwrap();
    let out = legnn(&[
        "inject-noise",
        "--data",
        &data,
        "--tau",
        "0.2",
        "--out",
        blocker.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn same_seed_same_dataset_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (da, db) = (dataset(a.path()), dataset(b.path()));
    for name in ["edges.tsv", "features.csv", "labels.csv", "splits.json"] {
        assert_eq!(
            std::fs::read(Path::new(&da).join(name)).unwrap(),
            std::fs::read(Path::new(&db).join(name)).unwrap()
        );
    }
}
