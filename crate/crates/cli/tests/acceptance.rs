//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and fails if any criterion fails.

use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use hproj_cli::Report;
use serde_json::Value;

fn run(args: &[&str]) -> (i32, Report) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut argv = vec!["hproj"];
    argv.extend_from_slice(args);
    argv.push("--json");
    let code = hproj_cli::run(argv, &mut out, &mut err);
    let text = String::from_utf8(out).unwrap();
    let report = Report::from_json_str(&text)
        .unwrap_or_else(|e| panic!("{args:?}: {e}\n{}", String::from_utf8_lossy(&err)));
    (code, report)
}

/// Value of a named check, NaN if absent so comparisons fail.
fn value(r: &Report, name: &str) -> f64 {
    r.checks.iter().find(|c| c.name == name).map_or(f64::NAN, |c| c.max_residual)
}

fn detail<'a>(r: &'a Report, key: &str) -> &'a Value {
    r.details.get(key).unwrap_or(&Value::Null)
}

struct Outcome {
    pass: bool,
    summary: String,
}

fn outcome(conds: &[(&str, f64, bool)]) -> Outcome {
    let pass = conds.iter().all(|c| c.2);
    let summary = conds
        .iter()
        .map(|(n, v, ok)| format!("{n}={v:.3e}{}", if *ok { "" } else { "(!)" }))
        .collect::<Vec<_>>()
        .join(" ");
    Outcome { pass, summary }
}

fn below(name: &str, v: f64, tol: f64) -> (&str, f64, bool) {
    (name, v, v < tol)
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn kahler(dir: &Path) -> Outcome {
    let product = write(
        dir,
        "product.json",
        r#"{"scenario": "verify-kahler", "model": {"kind": "product",
            "factors": [{"kind": "flat", "n": 1}, {"kind": "fubini-study", "n": 1}, {"kind": "flat", "n": 1}],
            "weights": [1.0, 2.0, 0.5]}}"#,
    );
    let mut conds = Vec::new();
    for (label, args) in [
        ("flat", vec!["verify-kahler", "--model", "flat", "--n", "2"]),
        ("fs", vec!["verify-kahler", "--model", "fs", "--n", "2"]),
        ("product", vec!["--config", product.as_str()]),
    ] {
        let (_, r) = run(&args);
        let worst = ["j-squared", "compatibility", "nabla-j", "d-omega"]
            .iter()
            .map(|n| value(&r, n))
            .fold(0.0, |a: f64, b| if b.is_nan() { f64::NAN } else { a.max(b) });
        conds.push((label, worst, worst < 1e-8 && r.checks.len() == 4));
    }
    outcome(&conds)
}

fn curvature() -> Outcome {
    let (_, r) = run(&["curvature", "--model", "fs", "--n", "2", "--B", "-0.25"]);
    outcome(&[below("r+4bk", value(&r, "curvature-r-plus-4bk"), 1e-7)])
}

fn hpr_pair(r: &Report) -> Outcome {
    let lmin = value(r, "lambda-min-norm");
    outcome(&[
        below("hpr", value(r, "hpr-residual"), 1e-7),
        ("lambda-min", lmin, lmin > 1e-6),
        below("killing", value(r, "killing-residual"), 1e-7),
    ])
}

fn b_estimate(r: &Report) -> Outcome {
    let est: Vec<f64> = detail(r, "B-estimates")
        .as_array()
        .map(|a| a.iter().filter_map(Value::as_f64).collect())
        .unwrap_or_default();
    let err = est.iter().map(|b| (b + 0.25).abs()).fold(0.0, f64::max);
    let spread = est.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - est.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut o = outcome(&[below("max-error", err, 1e-4), below("spread", spread, 1e-4)]);
    o.pass &= est.len() == 10;
    o.summary += &format!(" points={}", est.len());
    o
}

fn mobility() -> Outcome {
    let start = Instant::now();
    let (_, fs) = run(&["mobility", "--model", "fs", "--n", "2", "--B", "-0.25"]);
    let (_, torus) = run(&["mobility", "--model", "torus", "--n", "2", "--B", "0"]);
    let (_, product) = run(&["mobility", "--model", "product", "--B", "0"]);
    let elapsed = start.elapsed();
    let dim = |r: &Report| detail(r, "dimension").as_u64().map_or(f64::NAN, |d| d as f64);
    let (dfs, dt, dp) = (dim(&fs), dim(&torus), dim(&product));
    outcome(&[
        ("fs-dim", dfs, dfs == 9.0),
        below("fs-kernel", value(&fs, "kernel-residual"), 1e-5),
        ("torus-dim", dt, dt == 4.0),
        below("torus-lambda", value(&torus, "lambda-max"), 1e-8),
        ("product-dim", dp, dp >= 3.0),
        below("seconds", elapsed.as_secs_f64(), Duration::from_secs(60).as_secs_f64()),
    ])
}

fn square(r: &Report) -> Outcome {
    outcome(&[
        below("extended", value(r, "square-extended-residual"), 1e-5),
        below("op-eq", value(r, "product-conditions"), 1e-8),
        below("min-poly", value(r, "minimal-polynomial-constancy"), 1e-5),
    ])
}

fn eigenstructure(r: &Report) -> Outcome {
    let mult = value(r, "eigenstructure-multiplicities");
    outcome(&[
        ("multiplicities", mult, mult == 0.0),
        below("angle", value(r, "lambda-eigenspace-angle"), 1e-4),
        below("hessian", value(r, "hessian-mu"), 1e-5),
    ])
}

fn tanno() -> Outcome {
    let (_, r) = run(&["tanno", "--model", "fs", "--n", "2", "--B", "-0.25"]);
    outcome(&[
        below("tanno", value(&r, "tanno-residual"), 1e-5),
        below("round-trip", value(&r, "round-trip-modulo-trivial"), 1e-6),
        below("laplace", value(&r, "laplace-identity"), 1e-5),
    ])
}

fn hplanar() -> Outcome {
    let (_, r) = run(&["hplanar", "--model", "fs", "--n", "2", "--samples", "10", "--step", "1e-3"]);
    let runs = detail(&r, "runs").as_array().map_or(0, Vec::len);
    let ratio = detail(&r, "rk4-ratio").as_f64().unwrap_or(f64::NAN);
    let mut o = outcome(&[
        below("deviation", value(&r, "line-deviation"), 1e-6),
        ("rk4-ratio", ratio, (12.0..=20.0).contains(&ratio)),
    ]);
    o.pass &= runs == 10;
    o
}

fn killing_drift(r: &Report) -> Outcome {
    outcome(&[below("drift", value(r, "killing-integral-drift"), 1e-7)])
}

fn c_identity(r: &Report) -> Outcome {
    outcome(&[below("c", value(r, "c-identity"), 1e-6)])
}

fn reproducible(dir: &Path) -> Outcome {
    let mut conds = Vec::new();
    for (label, args) in [
        ("hpr-check", vec!["hpr-check", "--seed", "3"]),
        ("mobility", vec!["mobility", "--model", "torus", "--n", "2", "--B", "0", "--seed", "3"]),
        ("hplanar", vec!["hplanar", "--samples", "4", "--seed", "3"]),
    ] {
        let bytes: Vec<Vec<u8>> = (0..2)
            .map(|k| {
                let out = dir.join(format!("{label}-{k}.json"));
                let mut a = args.clone();
                a.push("--out");
                a.push(out.to_str().unwrap());
                run(&a);
                std::fs::read(&out).unwrap()
            })
            .collect();
        let same = bytes[0] == bytes[1] && !bytes[0].is_empty();
        conds.push((label, if same { 0.0 } else { 1.0 }, same));
    }
    outcome(&conds)
}

#[test]
fn acceptance() {
    let dir = tempfile::tempdir().unwrap();
    let (_, hpr) = run(&["hpr-check", "--model", "fs", "--n", "2", "--B", "-0.25"]);
    let (_, spectral) = run(&["spectral", "--model", "fs", "--n", "2", "--B", "-0.25"]);

    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("kahler structure", Box::new(|| kahler(dir.path()))),
        ("constant holomorphic curvature", Box::new(curvature)),
        ("h-projective pair", Box::new(|| hpr_pair(&hpr))),
        ("B estimate", Box::new(|| b_estimate(&hpr))),
        ("degree of mobility", Box::new(mobility)),
        ("square of L", Box::new(|| square(&spectral))),
        ("projector eigenstructure", Box::new(|| eigenstructure(&spectral))),
        ("tanno equation", Box::new(tanno)),
        ("h-planar curves", Box::new(hplanar)),
        ("killing integral", Box::new(|| killing_drift(&hpr))),
        ("commuting solutions", Box::new(|| c_identity(&hpr))),
        ("reproducible reports", Box::new(|| reproducible(dir.path()))),
    ];

    let mut failed = Vec::new();
    let stderr = std::io::stderr();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = f();
        let line = format!(
            "criterion {:>2} {:<32} {} ({:.1}s) {}",
            i + 1,
            name,
            if o.pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64(),
            o.summary
        );
        // bypass libtest capture so the summary always shows
        writeln!(stderr.lock(), "{line}").unwrap();
        if !o.pass {
            failed.push(line);
        }
    }
    assert!(failed.is_empty(), "failed criteria:\n{}", failed.join("\n"));
}
