use std::process::{Command, Output};

fn headway(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_headway"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Data rows of a CSV, skipping comment lines and the header.
fn rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn moments_row_matches_closed_form() {
    let o = headway(&[
        "moments",
        "--lambda",
        "0.1",
        "--hardcore",
        "4",
        "--r0",
        "100",
        "--eta",
        "3",
    ]);
    assert!(o.status.success());
    let r = &rows(&stdout(&o))[0];
    let v: Vec<f64> = r[1..4].iter().map(|x| x.parse().unwrap()).collect();
    assert!((v[0] / 1.0e-5 - 1.0).abs() < 1e-12);
    assert!((v[1] / 5.44e-12 - 1.0).abs() < 1e-12);
    assert!((v[2] - 0.530).abs() < 5e-4);
}

#[test]
fn saturated_road_is_a_validation_error() {
    let o = headway(&["outage", "--lambda", "0.1", "--hardcore", "10"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("lambda*c"));
}

#[test]
fn unknown_flag_is_a_validation_error() {
    let o = headway(&["moments", "--lamda", "0.1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn insufficient_precision_is_rejected_before_running() {
    let o = headway(&["delay", "--t0", "100", "--digits", "10"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("digits"));
}

#[test]
fn header_records_a_rerunnable_command() {
    let o = headway(&["outage", "--lambda", "0.05", "--hardcore", "8", "--theta-steps", "3"]);
    let text = stdout(&o);
    let cmd = text.lines().nth(1).unwrap().strip_prefix("# headway ").unwrap();
    let args: Vec<&str> = cmd.split_whitespace().collect();
    let again = headway(&args);
    assert_eq!(stdout(&again), text);
}

#[test]
fn csv_is_identical_across_thread_counts() {
    let base = [
        "outage",
        "--lambda",
        "0.025",
        "--hardcore",
        "20",
        "--r0",
        "50",
        "--eta",
        "4",
        "--pr",
        "8e-7",
    ];
    let run = |threads: &str| {
        let mut a = base.to_vec();
        a.extend(["--simulate", "--trials", "20000", "--seed", "3", "--threads", threads]);
        let o = headway(&a);
        assert!(o.status.success());
        o.stdout
    };
    assert_eq!(run("1"), run("4"));
}

#[test]
fn flags_override_config_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"lambda": 0.05, "hardcore": 4, "r0": 50}"#).unwrap();
    let o = headway(&["moments", "--config", cfg.to_str().unwrap(), "--r0", "100"]);
    assert!(o.status.success());
    let header = stdout(&o).lines().nth(1).unwrap().to_string();
    assert!(header.contains("--lambda 0.05"));
    assert!(header.contains("--hardcore 4"));
    assert!(header.contains("--r0 100"));
}

#[test]
fn config_with_unknown_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"lamda": 0.05}"#).unwrap();
    let o = headway(&["moments", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn reproduce_writes_tables_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = headway(&["reproduce", "fig5", "--trials", "2000", "--out-dir", out]);
    assert!(o.status.success());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("fig5_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["experiment"], "fig5");
    assert!(summary["checks"].as_array().unwrap().len() >= 3);
    let table = std::fs::read_to_string(dir.path().join("fig5_outage_r0_50.csv")).unwrap();
    assert!(table.starts_with("# headway "));
    assert_eq!(rows(&table).len(), 41);
}

#[test]
fn numerical_failure_exits_with_two() {
    let o = headway(&[
        "delay",
        "--theta-min",
        "200",
        "--theta-max",
        "200",
        "--theta-steps",
        "1",
        "--t0",
        "200",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("diverges"));
}
