use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chrono::{Duration, NaiveDate};

const X: f64 = 0.01;

/// Asset A alternates +x/-x; asset B moves 2x in blocks of two. Over
/// every 4 days both have zero mean, zero covariance, and B has 4 times
/// A's variance.
fn write_pair(dir: &Path, rows: usize) {
    let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
    let series = |ret: &dyn Fn(usize) -> f64| {
        let mut body = String::from("Date,Close\n");
        let mut p = 100.0;
        for i in 0..rows {
            if i > 0 {
                p *= 1.0 + ret(i - 1);
            }
            body.push_str(&format!("{},{p}\n", start + Duration::days(i as i64)));
        }
        body
    };
    let a = series(&|t| if t % 2 == 0 { X } else { -X });
    let b = series(&|t| if t % 4 < 2 { 2.0 * X } else { -2.0 * X });
    std::fs::create_dir_all(dir.join("data")).unwrap();
    std::fs::write(dir.join("data/A.csv"), a).unwrap();
    std::fs::write(dir.join("data/B.csv"), b).unwrap();
}

/// 41 training prices (40 returns) ending 2020-02-10, then 40 test days.
fn study(dir: &Path, extra: &str) -> PathBuf {
    write_pair(dir, 81);
    let text = format!(
        r#"
data_dir = "data"
output_dir = "out"
train_start = 2020-01-01
train_end = 2020-02-10
test_end = 2020-03-21
mvp_n_samples = 200
gap_b_refs = 10
{extra}

[sectors]
pair = ["A", "B"]
"#
    );
    let path = dir.join("study.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn hierfolio(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hierfolio"))
        .args(args)
        .env_remove("HIERFOLIO_CONFIG")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_weights(path: &Path) -> Vec<(String, f64)> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let (t, w) = l.split_once(',').unwrap();
            (t.to_string(), w.parse().unwrap())
        })
        .collect()
}

#[test]
fn optimize_hrp_on_diagonal_pair() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = study(dir.path(), "");
    let o = hierfolio(&["optimize", "--method", "hrp", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let w = read_weights(&dir.path().join("out/pair/weights_hrp.csv"));
    assert_eq!(w[0].0, "A");
    assert!(
        (w[0].1 - 0.8).abs() < 1e-9 && (w[1].1 - 0.2).abs() < 1e-9,
        "{w:?}"
    );
    assert!(!dir.path().join("out/pair/weights_mvp.csv").exists());
}

#[test]
fn frontier_with_one_sample() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = study(dir.path(), "");
    let out = dir.path().join("elsewhere");
    let o = hierfolio(&[
        "frontier",
        "--samples",
        "1",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("pair/frontier_mvp.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "return,volatility,sharpe");
}

#[test]
fn run_then_report_and_backtest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = study(dir.path(), "");
    let out = dir.path().join("out");
    let o = Command::new(env!("CARGO_BIN_EXE_hierfolio"))
        .arg("run")
        .env("HIERFOLIO_CONFIG", &cfg)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("manifest.json").is_file());
    let summary = std::fs::read_to_string(out.join("summary_test.csv")).unwrap();
    assert!(summary.starts_with("Sector,MVP Annual Return"));
    std::fs::remove_file(out.join("summary.json")).unwrap();

    let o = hierfolio(&["report", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("summary.json").is_file());

    let weights = out.join("pair/weights_herc.csv");
    let o = hierfolio(&[
        "backtest",
        "--weights",
        weights.to_str().unwrap(),
        "--label",
        "mine",
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ours = std::fs::read_to_string(out.join("pair/report_mine_test.json")).unwrap();
    let theirs = std::fs::read_to_string(out.join("pair/report_herc_test.json")).unwrap();
    assert_eq!(ours.replace("\"mine\"", "\"herc\""), theirs);
}

#[test]
fn ingest_and_dendrogram() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = study(dir.path(), "");
    for cmd in ["ingest", "dendrogram"] {
        let o = hierfolio(&[cmd, "--config", cfg.to_str().unwrap(), "--sector", "pair"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let prices = std::fs::read_to_string(dir.path().join("out/pair/prices.csv")).unwrap();
    assert!(prices.starts_with("Date,A,B\n2020-01-01,"));
    let dg = std::fs::read_to_string(dir.path().join("out/pair/dendrogram.json")).unwrap();
    assert!(dg.contains("\"leaf_order\""));
}

#[test]
fn report_names_missing_file() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let o = hierfolio(&[
        "report",
        missing.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nope.json"), "{}", stderr(&o));
}

#[test]
fn unknown_command_prints_usage() {
    let o = hierfolio(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
}

#[test]
fn invalid_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = study(dir.path(), "mvp_n_samples = 0");
    let o = hierfolio(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("mvp_n_samples"), "{}", stderr(&o));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn missing_ticker_fails_the_sector() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = study(dir.path(), "");
    std::fs::remove_file(dir.path().join("data/B.csv")).unwrap();
    let o = hierfolio(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("B.csv"), "{}", stderr(&o));
}
