use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn ktsim(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_ktsim"))
        .args(args)
        .output()
        .expect("failed to spawn ktsim");
    assert!(
        out.status.success(),
        "ktsim {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn generate_train_simulate_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.jsonl");
    let models = dir.path().join("models");
    let results = dir.path().join("results");
    let report = dir.path().join("report");

    ktsim(&["gen-data", "--n", "60", "--seed", "3", "--out", p(&data)]);
    assert_eq!(std::fs::read_to_string(&data).unwrap().lines().count(), 60);

    ktsim(&["train", "--data", p(&data), "--out", p(&models)]);
    for f in ["bkt.json", "pfa.json", "dkt.json"] {
        assert!(models.join(f).exists(), "{f} missing");
    }

    let acc: Value = serde_json::from_str(&ktsim(&["evaluate", "--data", p(&data), "--models-dir", p(&models)])).unwrap();
    assert_eq!(acc.as_array().unwrap().len(), 3);

    for c in ["bkt", "pfa", "dkt", "elo-oracle"] {
        let summary: Value = serde_json::from_str(&ktsim(&[
            "simulate",
            "--model",
            c,
            "--n",
            "12",
            "--seed",
            "1",
            "--models-dir",
            p(&models),
            "--out",
            p(&results),
        ]))
        .unwrap();
        assert_eq!(summary["episodes"], 12);
        let csv = std::fs::read_to_string(results.join(format!("{c}.csv"))).unwrap();
        assert_eq!(csv.lines().next().unwrap(), "seed,condition,steps_to_stop,steps_to_mastery,premature,capped");
        assert_eq!(csv.lines().count(), 13);
    }

    let r: Value = serde_json::from_str(&ktsim(&["report", "--in", p(&results), "--out", p(&report)])).unwrap();
    assert_eq!(r["conditions"].as_array().unwrap().len(), 4);
    assert!(report.join("summary.json").exists());
}

#[test]
fn single_model_training_writes_one_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.jsonl");
    let out = dir.path().join("pfa.json");
    ktsim(&["gen-data", "--n", "30", "--out", p(&data)]);
    ktsim(&["train", "--data", p(&data), "--model", "pfa", "--out", p(&out)]);
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(v.is_object());
}

#[test]
fn bad_arguments_fail() {
    let out = Command::new(env!("CARGO_BIN_EXE_ktsim"))
        .args(["simulate", "--model", "lstm", "--models-dir", ".", "--out", "."])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let out = Command::new(env!("CARGO_BIN_EXE_ktsim"))
        .args(["gen-data", "--n", "0", "--out", "x.jsonl"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}
