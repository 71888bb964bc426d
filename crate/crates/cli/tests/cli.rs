use std::path::Path;
use std::process::{Command, Output};

use hproj_cli::Report;
use serde_json::Value;

fn hproj(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hproj"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json_report(o: &Output) -> Report {
    Report::from_json_str(&stdout(o)).expect("JSON report on stdout")
}

#[test]
fn verify_kahler_on_fs_passes() {
    let o = hproj(&["verify-kahler", "--model", "fs", "--n", "2", "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let r = json_report(&o);
    assert_eq!(r.scenario, "verify-kahler");
    assert_eq!(r.checks.len(), 4);
    assert!(r.checks.iter().all(|c| c.pass && c.max_residual < 1e-8));
    assert_eq!(r.seed, hproj_cli::DEFAULT_SEED);
}

#[test]
fn mobility_of_fs_is_nine() {
    let o = hproj(&["mobility", "--model", "fs", "--n", "2", "--B", "-0.25", "--samples", "2", "--json"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["dimension"], 9);
    assert_eq!(v["label"], "local mobility estimate");
}

#[test]
fn unparsable_b_is_a_usage_error() {
    let o = hproj(&["mobility", "--model", "fs", "--n", "2", "--B", "bogus"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn no_arguments_lists_scenarios() {
    let o = hproj(&[]);
    assert_eq!(o.status.code(), Some(0));
    let names: Vec<String> = stdout(&o)
        .lines()
        .map(|l| l.split_whitespace().next().unwrap().to_string())
        .collect();
    assert_eq!(
        names,
        ["verify-kahler", "curvature", "hpr-check", "mobility", "spectral", "tanno", "hplanar", "report-merge"]
    );
}

#[test]
fn list_as_json() {
    let o = hproj(&["--json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 8);
    let o = hproj(&["list", "--json"]);
    let w: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v, w);
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = hproj(&["--frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn inline_matrix_is_rejected() {
    let o = hproj(&["hpr-check", "--A", "2,0;0,1;0,0|0,0;1,0;0,0|0,0;0,0;1,0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn out_of_range_parameters_are_rejected() {
    for args in [
        vec!["verify-kahler", "--samples", "0"],
        vec!["verify-kahler", "--tol", "-1"],
        vec!["hplanar", "--step", "2"],
        vec!["verify-kahler", "--model", "fs", "--n", "9"],
        vec!["tanno", "--kappa", "0"],
    ] {
        assert_eq!(hproj(&args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn scenario_needing_a_projective_model_rejects_flat() {
    let o = hproj(&["hpr-check", "--model", "flat"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn pullback_model_reads_matrix_file() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    std::fs::write(&a, "[[[1,0],[0.2,0.1],[0,0]],[[0,0],[1.5,0],[0,0]],[[0,0],[0,0],[0.7,0]]]").unwrap();
    let a = a.to_str().unwrap();
    assert_eq!(hproj(&["verify-kahler", "--model", "pullback"]).status.code(), Some(2));
    let o = hproj(&["curvature", "--model", "pullback", "--A-file", a, "--json"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    match json_report(&o).model {
        Some(hproj_core::ModelDescriptor::Pullback { n, .. }) => assert_eq!(n, 2),
        m => panic!("{m:?}"),
    }
    std::fs::write(dir.path().join("bad.json"), "[[1,0]]").unwrap();
    let bad = dir.path().join("bad.json");
    assert_eq!(hproj(&["curvature", "--model", "pullback", "--A-file", bad.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn failing_check_exits_with_one() {
    let o = hproj(&["curvature", "--model", "fs", "--B", "0.25", "--json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!json_report(&o).pass());
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn config_file_drives_the_run_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"scenario": "curvature", "model": {"kind": "fubini-study", "n": 2}, "seed": 11, "samples": 3}"#,
    );
    let o = hproj(&["--config", &cfg, "--json"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json_report(&o);
    assert_eq!((r.scenario.as_str(), r.seed), ("curvature", 11));
    let o = hproj(&["--config", &cfg, "--seed", "12", "--json"]);
    assert_eq!(json_report(&o).seed, 12);
    let o = hproj(&["tanno", "--config", &cfg, "--json"]);
    assert_eq!(json_report(&o).scenario, "tanno");
}

#[test]
fn bad_config_files_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    for (i, body) in [
        r#"{"scenario": "no-such-scenario"}"#,
        r#"{"scenario": "curvature", "colour": 1}"#,
        r#"{"scenario": "curvature", "model": {"kind": "klein-bottle", "n": 2}}"#,
        "not json",
    ]
    .iter()
    .enumerate()
    {
        let cfg = write_config(dir.path(), &format!("c{i}.json"), body);
        assert_eq!(hproj(&["--config", &cfg]).status.code(), Some(2), "{body}");
    }
    assert_eq!(hproj(&["--config", "/nonexistent/c.json"]).status.code(), Some(2));
}

#[test]
fn reports_merge_and_keep_failures() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let m = dir.path().join("m.json");
    let (a, b, m) = (a.to_str().unwrap(), b.to_str().unwrap(), m.to_str().unwrap());
    assert_eq!(hproj(&["verify-kahler", "--out", a]).status.code(), Some(0));
    assert_eq!(hproj(&["tanno", "--samples", "2", "--out", b]).status.code(), Some(0));
    let o = hproj(&["report-merge", a, b, "--out", m, "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let r = json_report(&o);
    assert_eq!(r.checks.len(), 7);
    assert!(r.checks.iter().any(|c| c.name == "tanno/tanno-residual"));
    let c = dir.path().join("c.json");
    let c = c.to_str().unwrap();
    assert_eq!(hproj(&["curvature", "--B", "0.25", "--out", c]).status.code(), Some(1));
    assert_eq!(hproj(&["report-merge", a, c]).status.code(), Some(1));
    std::fs::write(b, "{}").unwrap();
    assert_eq!(hproj(&["report-merge", a, b]).status.code(), Some(2));
}

#[test]
fn hplanar_writes_csv_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("curve.csv");
    let o = hproj(&["hplanar", "--samples", "2", "--step", "0.01", "--csv", csv.to_str().unwrap(), "--json"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json_report(&o);
    assert_eq!(r.artifacts, vec![csv.to_str().unwrap().to_string()]);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 102);
    assert!(text.starts_with("t,chart,"));
}

#[test]
fn text_output_has_one_line_per_check() {
    let o = hproj(&["tanno", "--samples", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.lines().filter(|l| l.trim_start().starts_with("PASS")).count(), 3);
}

#[test]
fn reports_are_reproducible() {
    let run = || stdout(&hproj(&["hplanar", "--samples", "3", "--seed", "5", "--json"]));
    assert_eq!(run(), run());
    let other = stdout(&hproj(&["hplanar", "--samples", "3", "--seed", "6", "--json"]));
    assert_ne!(run(), other);
}
