use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn laf(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_laf"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn simulate_small(dir: &Path) {
    let out = laf(
        &[
            "simulate",
            "--models",
            "6",
            "--samples",
            "400",
            "--classes",
            "5",
            "--acc",
            "0.4:0.9",
            "--seed",
            "3",
            "--out",
            "p.csv",
            "--truth-out",
            "t.csv",
        ],
        dir,
    );
    assert!(out.status.success(), "{}", stderr(&out));
}

#[test]
fn rank_writes_one_entry_per_model() {
    let dir = TempDir::new().unwrap();
    simulate_small(dir.path());
    let out = laf(&["rank", "--predictions", "p.csv", "--out", "r.json"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(report["ranking"].as_array().unwrap().len(), 6);
    assert!(report["converged"].is_boolean());
    assert!(report.get("warning").is_none());

    let out = laf(&["rank", "--predictions", "p.csv", "--out", "r.csv"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert!(csv.starts_with("model,score,rank\n"));
    assert_eq!(csv.lines().count(), 7);
}

#[test]
fn unanimous_file_exits_two_with_warning() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("u.csv"), "sample_id,a,b,c\nx1,1,1,1\nx2,0,0,0\n").unwrap();
    let out = laf(&["rank", "--predictions", "u.csv"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(json["warning"].as_str().unwrap().contains("tied"));
    assert!(json["ranking"].as_array().unwrap().iter().all(|e| e["rank"] == 2.0));
    assert!(stderr(&out).contains("warning"));
}

#[test]
fn malformed_csv_names_the_row() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("bad.csv"), "sample_id,a,b\nx1,0,1\nx2,0,1,2\n").unwrap();
    let out = laf(&["rank", "--predictions", "bad.csv"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("row x2"), "{}", stderr(&out));

    fs::write(dir.path().join("bad.csv"), "sample_id,a,b\nx1,0,z\n").unwrap();
    let out = laf(&["rank", "--predictions", "bad.csv"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("row x1, column b"), "{}", stderr(&out));
}

#[test]
fn usage_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    assert_eq!(laf(&["rank"], dir.path()).status.code(), Some(1));
    assert_eq!(
        laf(&["rank", "--predictions", "missing.csv"], dir.path()).status.code(),
        Some(1)
    );
    assert_eq!(laf(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn simulate_shape_and_validation() {
    let dir = TempDir::new().unwrap();
    let args = [
        "simulate",
        "--models",
        "20",
        "--samples",
        "5000",
        "--classes",
        "10",
        "--acc",
        "0.55:0.93",
        "--seed",
        "1",
    ];
    let out = laf(&args, dir.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header.split(',').count(), 21);
    assert_eq!(text.lines().filter(|l| l.starts_with('x')).count(), 5000);
    assert_eq!(laf(&args, dir.path()).stdout, out.stdout);

    let out = laf(
        &["simulate", "--models", "3", "--samples", "10", "--classes", "1"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("classes"));
}

#[test]
fn eval_report_shape() {
    let dir = TempDir::new().unwrap();
    simulate_small(dir.path());
    let out = laf(
        &[
            "eval",
            "--predictions",
            "p.csv",
            "--truth",
            "t.csv",
            "--methods",
            "laf,random",
            "--budgets",
            "30:180:5",
            "--reps",
            "4",
            "--out-dir",
            "ev",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let agg = fs::read_to_string(dir.path().join("ev/aggregate.csv")).unwrap();
    let rows: Vec<&str> = agg.lines().skip(1).collect();
    assert_eq!(rows.len(), 1 + 31);
    assert!(rows[0].starts_with("laf,0,1,"));
    assert_eq!(rows.iter().filter(|r| r.starts_with("laf,")).count(), 1);
    assert!(rows[1].starts_with("random,30,4,"));
    let reps = fs::read_to_string(dir.path().join("ev/repetitions.csv")).unwrap();
    assert!(reps.starts_with("method,budget,repetition,spearman,kendall,jaccard_1,jaccard_3,jaccard_5\n"));
    assert_eq!(reps.lines().count(), 1 + 1 + 31 * 4);
}

#[test]
fn eval_is_independent_of_worker_count() {
    let dir = TempDir::new().unwrap();
    simulate_small(dir.path());
    let args = [
        "eval",
        "--predictions",
        "p.csv",
        "--truth",
        "t.csv",
        "--budgets",
        "10,50",
        "--reps",
        "5",
        "--seed",
        "7",
    ];
    let many = laf(&args, dir.path());
    let one = Command::new(env!("CARGO_BIN_EXE_laf"))
        .args(args)
        .env("LAF_THREADS", "1")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(many.status.success() && one.status.success());
    assert_eq!(many.stdout, one.stdout);
}

#[test]
fn eval_rejects_infeasible_budget() {
    let dir = TempDir::new().unwrap();
    simulate_small(dir.path());
    let out = laf(
        &[
            "eval",
            "--predictions",
            "p.csv",
            "--truth",
            "t.csv",
            "--methods",
            "sds",
            "--budgets",
            "150",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("sds") && err.contains("150"), "{err}");
}

#[test]
fn metrics_identical_reversed_and_mismatched() {
    let dir = TempDir::new().unwrap();
    let write = |name: &str, body: &str| fs::write(dir.path().join(name), body).unwrap();
    write("a.csv", "model,score,rank\nm1,3,1\nm2,2,2\nm3,1,3\n");
    write("rev.csv", "model,score,rank\nm3,3,1\nm2,2,2\nm1,1,3\n");
    write("other.csv", "model,score,rank\nm1,3,1\nm2,2,2\nm4,1,3\n");

    let out = laf(&["metrics", "--truth", "a.csv", "--estimate", "a.csv"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["spearman"], 1.0);
    assert_eq!(json["kendall"], 1.0);
    assert_eq!(json["jaccard"]["1"], 1.0);
    assert_eq!(json["jaccard"]["3"], 1.0);

    let out = laf(&["metrics", "--truth", "a.csv", "--estimate", "rev.csv"], dir.path());
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["spearman"], -1.0);

    let out = laf(&["metrics", "--truth", "a.csv", "--estimate", "other.csv"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("m3") && err.contains("m4"), "{err}");
}
