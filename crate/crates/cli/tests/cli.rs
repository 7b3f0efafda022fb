use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_anchorboost"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap()
}

/// Source and target samples from the default generator.
fn workspace() -> (tempfile::TempDir, PathBuf) {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_path_buf();
    ok(&dir, &["simulate", "--n", "600", "--output", "src.csv"]);
    ok(
        &dir,
        &["--seed", "4", "simulate", "--n", "150", "--shift-scale", "2", "--output", "tgt.csv", "--env-label", "target"],
    );
    (tmp, dir)
}

const DATA: [&str; 6] = ["--data", "src.csv", "--outcome", "y", "--anchor", "env"];

fn train(dir: &Path, extra: &[&str], output: &str) {
    let mut args = vec!["train"];
    args.extend(DATA);
    args.extend(extra);
    args.extend(["--output", output]);
    ok(dir, &args);
}

#[test]
fn gamma_below_one_is_a_config_error() {
    let (_tmp, dir) = workspace();
    let mut args = vec!["train"];
    args.extend(DATA);
    args.extend(["--gamma", "0.5", "--output", "m.json"]);
    let out = run(&dir, &args);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gamma"));
    assert!(!dir.join("m.json").exists());
}

#[test]
fn missing_anchor_column_is_named() {
    let (_tmp, dir) = workspace();
    let out = run(&dir, &["train", "--data", "src.csv", "--outcome", "y", "--anchor", "hospital", "--output", "m.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("'hospital'"));
}

#[test]
fn unreadable_data_is_a_data_error() {
    let (_tmp, dir) = workspace();
    std::fs::write(dir.join("bad.csv"), "x1,y,env\n1.0,oops,a\n").unwrap();
    let out = run(&dir, &["train", "--data", "bad.csv", "--outcome", "y", "--anchor", "env", "--output", "m.json"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn config_file_rejects_unknown_keys() {
    let (_tmp, dir) = workspace();
    std::fs::write(dir.join("run.json"), r#"{"data": "src.csv", "gamam": 2}"#).unwrap();
    let out = run(&dir, &["--config", "run.json", "train"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gamam"));
}

#[test]
fn config_file_values_are_overridden_by_flags() {
    let (_tmp, dir) = workspace();
    std::fs::write(
        dir.join("run.json"),
        r#"{"data": "src.csv", "outcome": "y", "anchors": ["env"], "model": "linear", "gamma": 0.5}"#,
    )
    .unwrap();
    assert_eq!(run(&dir, &["--config", "run.json", "train", "--output", "a.json"]).status.code(), Some(2));
    ok(&dir, &["--config", "run.json", "train", "--gamma", "3", "--output", "a.json"]);
    let model: serde_json::Value = serde_json::from_slice(&read(&dir, "a.json")).unwrap();
    assert_eq!(model["gamma"], 3.0);
}

#[test]
fn identical_runs_write_identical_models() {
    let (_tmp, dir) = workspace();
    let args = ["--gamma", "4", "--num-trees", "40"];
    train(&dir, &args, "a.json");
    train(&dir, &args, "b.json");
    assert_eq!(read(&dir, "a.json"), read(&dir, "b.json"));
}

#[test]
fn thread_count_does_not_change_outputs() {
    let (_tmp, dir) = workspace();
    train(&dir, &["--model", "linear", "--gamma", "2"], "source.json");
    let mut outputs = Vec::new();
    for threads in ["1", "4"] {
        let table = format!("table{threads}.csv");
        let model = format!("refit{threads}.json");
        let out = ok(
            &dir,
            &[
                "--threads", threads, "refit", "--source", "source.json", "--data", "tgt.csv", "--outcome", "y",
                "--anchor", "env", "--table", &table, "--output", &model,
            ],
        );
        outputs.push((out.stdout, read(&dir, &table), read(&dir, &model)));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn zero_threads_is_rejected() {
    let (_tmp, dir) = workspace();
    let out = run(&dir, &["--threads", "0", "simulate", "--output", "s.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn cv_with_single_gamma_selects_it() {
    let (_tmp, dir) = workspace();
    let mut args = vec!["cv"];
    args.extend(DATA);
    args.extend(["--model", "linear", "--gamma-grid", "1", "--output", "scores.csv"]);
    let out = ok(&dir, &args);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "1");
    let table = String::from_utf8(read(&dir, "scores.csv")).unwrap();
    assert!(table.starts_with("gamma,holdout_env,metric,value,n"));
    assert_eq!(table.lines().count(), 4);
}

#[test]
fn decay_one_refit_predicts_like_the_source() {
    let (_tmp, dir) = workspace();
    train(&dir, &["--gamma", "2", "--num-trees", "30"], "source.json");
    ok(
        &dir,
        &[
            "refit", "--source", "source.json", "--data", "tgt.csv", "--outcome", "y", "--anchor", "env",
            "--decay-rate", "1", "--output", "refit.json",
        ],
    );
    ok(&dir, &["predict", "--model-file", "source.json", "--data", "tgt.csv", "--output", "a.csv"]);
    ok(&dir, &["predict", "--model-file", "refit.json", "--data", "tgt.csv", "--output", "b.csv"]);
    assert_eq!(read(&dir, "a.csv"), read(&dir, "b.csv"));
}

#[test]
fn strong_prior_refit_keeps_linear_coefficients() {
    let (_tmp, dir) = workspace();
    train(&dir, &["--model", "linear", "--gamma", "2"], "source.json");
    ok(
        &dir,
        &[
            "refit", "--source", "source.json", "--data", "tgt.csv", "--outcome", "y", "--anchor", "env", "--alpha",
            "1e12", "--output", "refit.json",
        ],
    );
    let coef = |name| {
        let v: serde_json::Value = serde_json::from_slice(&read(&dir, name)).unwrap();
        v["beta"].as_array().unwrap().iter().map(|b| b.as_f64().unwrap()).collect::<Vec<_>>()
    };
    for (a, b) in coef("source.json").iter().zip(coef("refit.json")) {
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
}

#[test]
fn refit_parameter_must_match_the_model_kind() {
    let (_tmp, dir) = workspace();
    train(&dir, &["--model", "linear"], "source.json");
    let out = run(
        &dir,
        &[
            "refit", "--source", "source.json", "--data", "tgt.csv", "--outcome", "y", "--anchor", "env",
            "--decay-rate", "0.5", "--output", "r.json",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn predictions_follow_column_names_not_positions() {
    let (_tmp, dir) = workspace();
    train(&dir, &["--model", "linear", "--gamma", "2"], "m.json");
    ok(&dir, &["predict", "--model-file", "m.json", "--data", "src.csv", "--output", "a.csv"]);
    // reverse the column order
    let text = String::from_utf8(read(&dir, "src.csv")).unwrap();
    let shuffled: String = text
        .lines()
        .map(|l| l.split(',').rev().collect::<Vec<_>>().join(",") + "\n")
        .collect();
    std::fs::write(dir.join("rev.csv"), shuffled).unwrap();
    ok(&dir, &["predict", "--model-file", "m.json", "--data", "rev.csv", "--output", "b.csv"]);
    assert_eq!(read(&dir, "a.csv"), read(&dir, "b.csv"));
}

#[test]
fn evaluate_reports_each_environment() {
    let (_tmp, dir) = workspace();
    train(&dir, &["--model", "linear"], "m.json");
    let mut args = vec!["evaluate", "--model-file", "m.json"];
    args.extend(DATA);
    let out = ok(&dir, &args);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["metric"], "mse");
    assert_eq!(report["n"], 600);
    assert_eq!(report["environments"].as_array().unwrap().len(), 3);
}

#[test]
fn training_log_has_one_row_per_round() {
    let (_tmp, dir) = workspace();
    train(&dir, &["--num-trees", "12", "--log", "log.csv"], "m.json");
    let log = String::from_utf8(read(&dir, "log.csv")).unwrap();
    assert_eq!(log.lines().next(), Some("round,loss"));
    assert_eq!(log.lines().count(), 14);
}

#[test]
fn malformed_curve_file_reports_the_line() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(
        dir.join("curves.csv"),
        "strategy,seed,n,metric,value\nrefit,0,25,mse,1.0\nrefit,0,fifty,mse,0.9\n",
    )
    .unwrap();
    let out = run(dir, &["regimes", "--curves", "curves.csv"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn curves_without_crossings_report_absent_points() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let mut csv = String::from("strategy,seed,n,metric,value\n");
    for n in [25, 50, 100, 200] {
        csv += &format!("source_only,0,{n},mse,1.0\n");
        csv += &format!("refit,0,{n},mse,1.0\n");
        csv += &format!("target_only,0,{n},mse,{}\n", 2.0 + 1.0 / n as f64);
    }
    std::fs::write(dir.join("curves.csv"), csv).unwrap();
    let out = ok(dir, &["regimes", "--curves", "curves.csv", "--output", "t.json"]);
    assert!(out.stdout.is_empty());
    let t: serde_json::Value = serde_json::from_slice(&read(dir, "t.json")).unwrap();
    for key in ["circle", "square", "cross"] {
        assert!(t[key].is_null(), "{key}: {t}");
        assert_eq!(t["flags"][key], "absent");
    }
}

#[test]
fn simulate_round_trips_its_generator() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(dir, &["--seed", "2", "simulate", "--n", "50", "--output", "a.csv", "--scm-out", "scm.json"]);
    ok(dir, &["simulate", "--scm", "scm.json", "--n", "50", "--output", "b.csv"]);
    assert_eq!(read(dir, "a.csv"), read(dir, "b.csv"));
    let header = String::from_utf8(read(dir, "a.csv")).unwrap();
    assert!(header.starts_with("x1,x2,x3,x4,x5,y,env\n"));
}

#[test]
fn canonical_generator_yields_all_three_transitions() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(dir, &["simulate", "--n", "2000", "--output", "src.csv"]);
    for (stream, n, name) in [("2", "800", "pool.csv"), ("3", "2000", "test.csv")] {
        ok(
            dir,
            &[
                "--seed", "9", "simulate", "--n", n, "--shift-scale", "2", "--stream", stream, "--output", name,
                "--env-label", "target",
            ],
        );
    }
    ok(
        dir,
        &["train", "--data", "src.csv", "--outcome", "y", "--anchor", "env", "--model", "linear", "--gamma", "4", "--output", "source.json"],
    );
    ok(
        dir,
        &[
            "regimes", "--pool", "pool.csv", "--test", "test.csv", "--source", "source.json", "--outcome", "y",
            "--anchor", "env", "--seeds", "5", "--output", "t.json",
        ],
    );
    let t: serde_json::Value = serde_json::from_slice(&read(dir, "t.json")).unwrap();
    for key in ["circle", "square", "cross"] {
        assert!(t[key].is_number(), "{key} absent: {t}");
    }
    assert!(t["circle"].as_f64() <= t["square"].as_f64());
}
