use std::process::{Command, Output};

use serde_json::Value;

fn lab(args: &[&str]) -> Output {
    lab_env(args, &[])
}

fn lab_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_bobkov-lab"));
    cmd.args(args).env_remove("BOBKOV_LAB_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).expect("utf-8 report")
}

fn json(o: &Output) -> Value {
    serde_json::from_str(&stdout(o)).expect("JSON report")
}

/// Header and data rows of a CSV report, after the timestamp line.
fn csv(o: &Output) -> (Vec<String>, Vec<Vec<String>>) {
    let text = stdout(o);
    let (stamp, body) = text.split_once('\n').unwrap();
    assert!(stamp.starts_with("# generated_at: "), "{stamp}");
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}

fn output(v: &Value, key: &str) -> f64 {
    v["outputs"][key]["value"].as_f64().unwrap_or_else(|| panic!("{key}: {v}"))
}

/// The report with its timestamp line removed.
fn without_stamp(o: &Output) -> String {
    stdout(o)
        .lines()
        .filter(|l| !l.contains("generated_at"))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn default_hjb_sweep_passes() {
    let o = lab(&["hjb-sweep"]);
    assert_eq!(code(&o), 0);
    let (header, rows) = csv(&o);
    assert_eq!(header, ["t", "p", "lambda", "a", "M", "residual", "rel_residual", "flag"]);
    assert_eq!(rows.len(), 6 * 6 * 5);
    let rel = column(&header, "rel_residual");
    for row in &rows {
        assert!(row[rel].parse::<f64>().unwrap().abs() <= 1e-8);
        assert_eq!(row[7], "ok");
    }
}

#[test]
fn degenerate_lambda_flags_rows() {
    let o = lab(&["hjb-sweep", "--lambda", "0.999999"]);
    assert_eq!(code(&o), 1);
    let (_, rows) = csv(&o);
    assert!(rows.iter().any(|r| r[7] == "ill_conditioned"));
}

#[test]
fn single_point_sweep() {
    let o = lab(&["hjb-sweep", "--t", "0.5", "--p", "0.5", "--lambda", "0.5"]);
    assert_eq!(code(&o), 0);
    let (header, rows) = csv(&o);
    assert_eq!(rows.len(), 1);
    let res: f64 = rows[0][column(&header, "residual")].parse().unwrap();
    assert!(res.abs() < 1e-8);
}

#[test]
fn sweep_rows_are_sorted() {
    let (_, rows) = csv(&lab(&["hjb-sweep", "--t", "-1:1:3", "--p", "-1:1:3", "--lambda", "0.2:0.8:3"]));
    let keys: Vec<(f64, f64, f64)> = rows
        .iter()
        .map(|r| (r[0].parse().unwrap(), r[1].parse().unwrap(), r[2].parse().unwrap()))
        .collect();
    assert!(keys.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn derivative_check_passes_on_default_grid() {
    let o = lab(&["derivative-check"]);
    assert_eq!(code(&o), 0);
    assert_eq!(csv(&o).1.len(), 180);
    // An unattainable tolerance is reported, not hidden.
    assert_eq!(code(&lab(&["derivative-check", "--tol", "1e-15"])), 1);
}

#[test]
fn bobkov_check_examples() {
    for f in ["probit-poly:-0.2,0.7", "const:0.3"] {
        let o = lab(&["bobkov-check", f]);
        assert_eq!(code(&o), 0, "{f}");
        let v = json(&o);
        assert!(output(&v, "deficit").abs() < 1e-8, "{f}");
        assert_eq!(v["outputs"]["equality"]["value"], true);
        assert_eq!(v["status"], "ok");
    }
    let o = lab(&["bobkov-check", "probit-poly:-1,0,1"]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    assert!(output(&v, "deficit") > 1e-3);
    assert_eq!(v["outputs"]["equality"]["value"], false);
    for key in ["lhs", "rhs", "psi_integral"] {
        assert!(v["outputs"][key]["value"].is_f64(), "{key}");
    }
}

#[test]
fn numeric_outputs_carry_tolerances() {
    let v = json(&lab(&["bobkov-check", "probit-poly:-1,0,1"]));
    assert_eq!(v["outputs"]["deficit"]["tolerance"], 1e-9);
    assert_eq!(v["outputs"]["identity_gap"]["tolerance"], 1e-7);
    let v = json(&lab(&["bobkov-check", "probit-poly:-1,0,1", "--identity-tol", "1e-20"]));
    assert_eq!(v["outputs"]["identity_gap"]["tolerance"], 1e-20);
    assert_eq!(v["status"], "tolerance_exceeded");
}

#[test]
fn parse_failure_names_the_token() {
    let o = lab(&["bobkov-check", "probit-poly:1,zz"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("zz"));
    assert!(o.stdout.is_empty());
}

#[test]
fn usage_errors_exit_two() {
    for args in [
        &["no-such-command"][..],
        &["solve-slope", "--t", "0.8", "--p", "0.2"],
        &["certify", "--t", "1", "--x", "0.8", "--lambda", "0.5", "--y", "0.1"],
        &["hjb-sweep", "--t", "1:0:4"],
        &["hjb-sweep", "--lambda", "0.5:1.5:3"],
        &["solve-slope", "--t", "0", "--p", "0", "--y", "0.7"],
        &["limits", "const:2"],
    ] {
        assert_eq!(code(&lab(args)), 2, "{args:?}");
    }
    let o = lab_env(&["hjb-sweep"], &[("BOBKOV_LAB_THREADS", "zero")]);
    assert_eq!(code(&o), 2);
}

#[test]
fn solve_slope_round_trip() {
    let o = lab(&["solve-slope", "--t", "0.8", "--p", "0.2", "--lambda", "0.5"]);
    assert_eq!(code(&o), 0);
    let (header, rows) = csv(&o);
    assert_eq!(rows.len(), 1);
    let res: f64 = rows[0][column(&header, "residual")].parse().unwrap();
    assert!(res.abs() < 1e-12);
    assert!(rows[0][column(&header, "a")].parse::<f64>().unwrap().is_finite());
}

#[test]
fn certify_examples() {
    let p = "0.9";
    let o = lab(&["certify", "--t", "1.0", "--p", p, "--slope", "0.7", "--nodes", "512"]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    assert_eq!(v["outputs"]["certified"]["value"], true);
    assert!((v["inputs"]["x"].as_f64().unwrap() - 0.8159).abs() < 1e-4);
    for key in ["optimum", "candidate_cost", "analytic_b", "optimum_gap", "candidate_gap"] {
        assert!(v["outputs"][key]["value"].is_f64(), "{key}");
    }

    let o = lab(&["certify", "--t", "0.3", "--p", "0.8", "--slope", "0", "--nodes", "128"]);
    assert_eq!(code(&o), 0);

    let o = lab(&["certify", "--t", "1.0", "--p", p, "--slope", "0.7", "--nodes", "8"]);
    assert_eq!(code(&o), 1);
    let v = json(&o);
    assert_eq!(v["outputs"]["certified"]["value"], false);
    assert!(output(&v, "candidate_gap") > 1e-3);
    assert!(v["message"].as_str().unwrap().contains("at least"));
}

#[test]
fn limits_example() {
    let o = lab(&["limits", "probit-poly:0.1,0.5", "--horizon", "7"]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    assert!(output(&v, "low_end") < 1e-5 && output(&v, "high_end_gap") < 1e-5);
}

#[test]
fn tensor_check_example() {
    let o = lab(&["tensor-check", "probit-affine:0.6,0.8,-0.1"]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    for key in ["slack_marginal", "slack_inner", "slack_minkowski"] {
        assert!(output(&v, key).abs() < 1e-9, "{key}");
    }
}

#[test]
fn seeded_corpora_record_the_seed() {
    let o = lab(&["bobkov-check", "--corpus", "12", "--seed", "7", "--format", "json"]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    assert_eq!(v["seed"], 7);
    assert_eq!(v["rows"].as_array().unwrap().len(), 12);
    let a = without_stamp(&lab(&["tensor-check", "--corpus", "3", "--seed", "1"]));
    let b = without_stamp(&lab(&["tensor-check", "--corpus", "3", "--seed", "2"]));
    assert_ne!(a, b);
}

#[test]
fn reports_are_deterministic() {
    let runs = [
        &["hjb-sweep"][..],
        &["bobkov-check", "--corpus", "20"],
        &["certify", "--t", "1.0", "--p", "0.9", "--slope", "0.7"],
    ];
    for args in runs {
        let first = without_stamp(&lab(args));
        let again = without_stamp(&lab_env(args, &[("BOBKOV_LAB_THREADS", "1")]));
        assert_eq!(first, again, "{args:?}");
        // Only the timestamp line is dropped.
        assert_eq!(stdout(&lab(args)).lines().count(), first.lines().count() + 1);
    }
}

#[test]
fn out_flag_writes_the_report() {
    let path = std::env::temp_dir().join(format!("bobkov-lab-{}.json", std::process::id()));
    let o = lab(&["limits", "probit-poly:0.1,0.5", "--out", path.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(o.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    std::fs::remove_file(&path).unwrap();
    assert_eq!(v["command"], "limits");
}

#[test]
fn csv_numbers_use_seventeen_digits() {
    let (header, rows) = csv(&lab(&["solve-slope", "--t", "0.8", "--p", "0.2", "--lambda", "0.5"]));
    assert_eq!(rows[0][column(&header, "t")], "0.80000000000000004");
    assert_eq!(rows[0][column(&header, "lambda")], "0.5");
}
