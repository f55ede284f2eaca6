use std::path::Path;
use std::process::{Command, Output};

const SMALL: [&str; 12] = [
    "--set", "data.n_traj=8", "--set", "data.steps=12", "--set", "eval.n_test=2",
    "--set", "model.hidden=[8,8]", "--set", "train.epochs=2", "--set", "train.batch_size=4",
];

fn cartmech(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cartmech"))
        .args(args)
        .env("CARTMECH_THREADS", "1")
        .output()
        .expect("spawn cartmech")
}

fn ok(args: &[&str]) -> String {
    let out = cartmech(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn print_config_applies_overrides() {
    let text = ok(&["print-config", "--set", "train.epochs=7", "--set", "system.gravity=3.5"]);
    let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(doc["train"]["epochs"], 7);
    assert_eq!(doc["system"]["gravity"], 3.5);
}

#[test]
fn full_pipeline_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let (data, run) = (dir.path().join("data"), dir.path().join("run"));
    let mut args = vec!["generate", "--out", p(&data)];
    args.extend(SMALL);
    ok(&args);
    let train = data.join("train");
    let mut args = vec!["train", "--data", p(&train), "--out", p(&run)];
    args.extend(SMALL);
    ok(&args);
    for f in ["model.ckpt", "history.csv", "config.json"] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    assert_eq!(std::fs::read_to_string(run.join("history.csv")).unwrap().lines().count(), 3);

    let ckpt = run.join("model.ckpt");
    let test = data.join("test");
    let metrics = dir.path().join("metrics.csv");
    ok(&["evaluate", "--checkpoint", p(&ckpt), "--dataset", p(&test), "--out", p(&metrics), "--steps", "6"]);
    let csv = std::fs::read_to_string(&metrics).unwrap();
    assert_eq!(csv.lines().count(), 9);
    assert!(csv.lines().last().unwrap().starts_with("geometric_mean,"));

    let ablated = dir.path().join("ablated.csv");
    ok(&["ablate-constraints", "--checkpoint", p(&ckpt), "--dataset", p(&test), "--out", p(&ablated), "--disable", "1"]);
    assert!(std::fs::read_to_string(&ablated).unwrap().contains("geometric_mean"));

    let exported = dir.path().join("traj.csv");
    ok(&["export", "--dataset", p(&test), "--index", "1", "--out", p(&exported)]);
    assert_eq!(std::fs::read_to_string(&exported).unwrap().lines().count(), 14);
}

#[test]
fn simulate_prints_a_summary_and_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim.csv");
    let text = ok(&["simulate", "--system", "npendulum", "--n", "2", "--T", "0.6", "--rtol", "1e-7", "--out", p(&out)]);
    let summary: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(summary["steps"], 20);
    assert!(summary["max_bounded_energy_error"].as_f64().unwrap() < 1e-6);
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 22);
}

#[test]
fn user_errors_exit_with_code_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope");
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"train\": {\"epochz\": 3}}").unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec!["print-config", "--config", p(&bad)],
        vec!["print-config", "--set", "train.epochs"],
        vec!["print-config", "--set", "train.epochs=0"],
        vec!["export", "--dataset", p(&missing), "--out", p(&missing)],
        vec!["simulate", "--system", "teapot"],
        vec!["frobnicate"],
    ];
    for args in cases {
        let out = cartmech(&args);
        assert_eq!(out.status.code(), Some(1), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let out = cartmech(&["print-config", "--config", p(&bad)]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("epochz"));
}
