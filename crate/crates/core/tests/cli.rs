use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn itr(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_itr"))
        .args(args)
        .current_dir(dir)
        .env("ITR_LOG", "error")
        .output()
        .unwrap()
}

fn ok(args: &[&str], dir: &Path) -> Vec<u8> {
    let out = itr(args, dir);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out.stdout
}

fn error_json(out: &Output) -> serde_json::Value {
    serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).unwrap()
}

#[test]
fn simulate_writes_expected_table() {
    let tmp = tempfile::tempdir().unwrap();
    ok(
        &["simulate", "--example", "2", "--n", "256", "--seed", "7", "--out", "d/"],
        tmp.path(),
    );
    let text = fs::read_to_string(tmp.path().join("d/data.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "x1,x2,x3,x4,x5,arm,r");
    assert_eq!(lines.count(), 256);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("d/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["seed"], 7);
    assert_eq!(manifest["config"]["command"], "simulate");
    assert!(manifest["wall_time_seconds"].as_f64().unwrap() >= 0.0);
    assert!(manifest["version"].is_string());
    // leftovers from the atomic write are gone
    assert_eq!(fs::read_dir(tmp.path()).unwrap().count(), 1);
}

#[test]
fn round_trip_for_every_model() {
    let tmp = tempfile::tempdir().unwrap();
    for (ex, basis) in [
        ("1", "linear"),
        ("2", "linear"),
        ("3", "linear"),
        ("4", "haar"),
        ("toy", "linear"),
    ] {
        let d = format!("sim{ex}");
        let t = format!("tune{ex}");
        ok(
            &["simulate", "--example", ex, "--n", "200", "--seed", "3", "--out", &d],
            tmp.path(),
        );
        ok(
            &[
                "tune",
                "--data",
                &format!("{d}/data.csv"),
                "--basis",
                basis,
                "--seed",
                "1",
                "--out",
                &t,
            ],
            tmp.path(),
        );
        let recs = ok(
            &[
                "apply",
                "--rule",
                &format!("{t}/rule.json"),
                "--data",
                &format!("{d}/data.csv"),
            ],
            tmp.path(),
        );
        let text = String::from_utf8(recs).unwrap();
        assert_eq!(text.lines().count(), 201);
        assert!(
            text.lines().skip(1).all(|l| l.ends_with(",1") || l.ends_with(",-1")),
            "{ex}"
        );
    }
}

#[test]
fn tune_is_byte_identical_and_replayable() {
    let tmp = tempfile::tempdir().unwrap();
    ok(
        &["simulate", "--example", "2", "--n", "150", "--seed", "9", "--out", "d"],
        tmp.path(),
    );
    let args = [
        "tune",
        "--data",
        "d/data.csv",
        "--basis",
        "linear",
        "--folds",
        "10",
        "--seed",
        "3",
    ];
    let a = ok(&args, tmp.path());
    let b = ok(&args, tmp.path());
    assert_eq!(a, b);
    let mut threaded = vec!["--jobs", "2"];
    threaded.extend_from_slice(&args);
    assert_eq!(ok(&threaded, tmp.path()), a);
    let report: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(report["seed"], 3);

    let mut with_out = args.to_vec();
    with_out.extend_from_slice(&["--out", "t1"]);
    ok(&with_out, tmp.path());
    ok(&["replay", "--manifest", "t1/manifest.json", "--out", "t2"], tmp.path());
    for f in ["tuning_report.json", "rule.json", "fit.json"] {
        assert_eq!(
            fs::read(tmp.path().join("t1").join(f)).unwrap(),
            fs::read(tmp.path().join("t2").join(f)).unwrap()
        );
    }
    assert_eq!(fs::read(tmp.path().join("t1/tuning_report.json")).unwrap(), a);
}

#[test]
fn benchmark_summary_shape() {
    let tmp = tempfile::tempdir().unwrap();
    ok(
        &[
            "benchmark",
            "--example",
            "1",
            "--reps",
            "10",
            "--sizes",
            "32,1024",
            "--seed",
            "1",
            "--test-size",
            "2000",
            "--out",
            "b/",
        ],
        tmp.path(),
    );
    let summary = fs::read_to_string(tmp.path().join("b/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 2 * 3);
    let results = fs::read_to_string(tmp.path().join("b/results.csv")).unwrap();
    assert!(results.starts_with("example,method,n,rep,value,variables"));
    assert_eq!(results.lines().count(), 1 + 2 * 3 * 10);
}

#[test]
fn fit_and_audit_emit_json() {
    let tmp = tempfile::tempdir().unwrap();
    ok(
        &["simulate", "--example", "3", "--n", "120", "--seed", "2", "--out", "d"],
        tmp.path(),
    );
    let fit: serde_json::Value =
        serde_json::from_slice(&ok(&["fit", "--data", "d/data.csv", "--lambda", "0.05"], tmp.path())).unwrap();
    assert_eq!(fit["coefficients"].as_array().unwrap().len(), 12);
    assert!(fit["converged"].as_bool().unwrap());
    let ols: serde_json::Value =
        serde_json::from_slice(&ok(&["fit", "--data", "d/data.csv", "--method", "ols"], tmp.path())).unwrap();
    assert_eq!(ols["lambda"], 0.0);
    let audit: serde_json::Value = serde_json::from_slice(&ok(
        &[
            "audit", "--model", "example2", "--alpha", "1", "--c", "0.5", "--mc", "20000", "--seed", "4",
        ],
        tmp.path(),
    ))
    .unwrap();
    for key in ["lhs", "rhs_q", "rhs_t", "constant_cprime", "holds_q", "holds_t"] {
        assert!(!audit[key].is_null(), "{key}");
    }
}

#[test]
fn failures_are_structured() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path();
    fs::write(p.join("short.csv"), "x1,arm,r\n0.1,1,2.0\n0.2,-1\n").unwrap();
    let out = itr(&["tune", "--data", "short.csv"], p);
    assert_eq!(out.status.code(), Some(2));
    let e = error_json(&out);
    assert_eq!(e["error"]["kind"], "parse");
    assert!(e["error"]["message"].as_str().unwrap().contains("line 3"));

    fs::write(p.join("word.csv"), "x1,arm,r\n0.1,1,abc\n").unwrap();
    let e = error_json(&itr(&["fit", "--data", "word.csv", "--method", "ols"], p));
    assert!(e["error"]["message"].as_str().unwrap().contains("line 2"));

    fs::write(p.join("prob.csv"), "x1,arm,r,prob\n0.1,1,2.0,0.5\n0.2,-1,1.0,0\n").unwrap();
    let out = itr(&["fit", "--data", "prob.csv", "--method", "ols"], p);
    assert_eq!(out.status.code(), Some(2));

    assert_eq!(itr(&["explode"], p).status.code(), Some(2));

    ok(&["simulate", "--example", "1", "--n", "20", "--out", "x"], p);
    let out = itr(&["simulate", "--example", "1", "--n", "20", "--out", "x"], p);
    assert_eq!(out.status.code(), Some(2));
    ok(&["simulate", "--example", "1", "--n", "30", "--out", "x", "--force"], p);
    assert_eq!(fs::read_to_string(p.join("x/data.csv")).unwrap().lines().count(), 31);
}
