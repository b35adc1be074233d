use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use hierfolio::pipeline::{read_manifest, read_report};
use hierfolio::{Dendrogram, Error, RunConfig, SummaryTable, WeightVector};

fn write_prices(dir: &Path, ticker: &str, phase: f64) {
    let mut body = String::from("Date,Close\n");
    let mut day = NaiveDate::from_ymd_opt(2019, 7, 1).unwrap();
    let end = NaiveDate::from_ymd_opt(2023, 6, 30).unwrap();
    let mut price = 100.0;
    let mut i = 0.0;
    while day <= end {
        if !matches!(day.weekday(), Weekday::Sat | Weekday::Sun) {
            price *= 1.0 + 0.01 * (i * 0.7 + phase).sin() + 2e-4;
            body.push_str(&format!("{day},{price:.4}\n"));
            i += 1.0;
        }
        day += Duration::days(1);
    }
    std::fs::write(dir.join(format!("{ticker}.csv")), body).unwrap();
}

fn config(dir: &Path, sectors: &str) -> RunConfig {
    let data = dir.join("data");
    std::fs::create_dir_all(&data).unwrap();
    write_prices(&data, "AAA", 0.0);
    write_prices(&data, "BBB", 1.3);
    write_prices(&data, "CCC", 2.1);
    let text = format!(
        r#"
        data_dir = "data"
        output_dir = "out"
        train_start = 2019-07-01
        train_end = 2022-06-30
        test_end = 2023-06-30
        mvp_n_samples = 500
        gap_b_refs = 20

        [sectors]
        {sectors}
        "#
    );
    let path = dir.join("study.toml");
    std::fs::write(&path, text).unwrap();
    RunConfig::from_file(&path).unwrap()
}

#[test]
fn one_sector_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), r#"pair = ["AAA", "BBB"]"#);
    let m = hierfolio::run_pipeline(&cfg).unwrap();
    assert!(m.failed_sectors().is_empty());
    let s = &m.sectors[0];
    assert_eq!(s.weights.len(), 3);
    assert_eq!(s.dendrograms.len(), 2);
    assert!(s.frontier.is_some());
    assert_eq!(s.reports.len(), 6);
    assert!(m.summary.is_some());

    let out = &cfg.output_dir;
    for w in s.weights.values() {
        let wv = WeightVector::from_csv_file(&out.join(w)).unwrap();
        assert_eq!(wv.tickers(), ["AAA", "BBB"]);
    }
    for d in s.dendrograms.values() {
        let dg: Dendrogram = serde_json::from_str(&std::fs::read_to_string(out.join(d)).unwrap()).unwrap();
        assert_eq!(dg.to_tree().unwrap().n_leaves(), 2);
    }
    let frontier = std::fs::read_to_string(out.join(s.frontier.as_ref().unwrap())).unwrap();
    assert!(frontier.starts_with("return,volatility,sharpe\n"));
    assert_eq!(frontier.lines().count(), 501);
    for r in &s.reports {
        let report = read_report(&out.join(r)).unwrap();
        assert_eq!(report.daily_returns.len(), report.dates.len());
    }
    let tables: BTreeMap<String, SummaryTable> =
        serde_json::from_str(&std::fs::read_to_string(out.join(m.summary.as_ref().unwrap())).unwrap())
            .unwrap();
    assert_eq!(tables.keys().collect::<Vec<_>>(), ["test", "train"]);
    for f in m.files() {
        assert!(out.join(f).is_file(), "{f}");
    }
    assert_eq!(read_manifest(&out.join("manifest.json")).unwrap(), m);
}

#[test]
fn test_period_starts_after_train_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), r#"pair = ["AAA", "BBB"]"#);
    let data = hierfolio::pipeline::prepare_sector(&cfg, "pair").unwrap();
    assert_eq!(*data.train.dates().last().unwrap(), cfg.train_end);
    assert_eq!(data.test.dates()[0], NaiveDate::from_ymd_opt(2022, 7, 1).unwrap());
}

#[test]
fn bad_sector_is_isolated() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        r#"good = ["AAA", "CCC"]
        bad = ["AAA", "MISSING"]"#,
    );
    let m = hierfolio::run_pipeline(&cfg).unwrap();
    assert_eq!(m.failed_sectors(), ["bad"]);
    let bad = m.sectors.iter().find(|s| s.sector == "bad").unwrap();
    assert!(bad.error.as_ref().unwrap().contains("MISSING"));
    let good = m.sectors.iter().find(|s| s.sector == "good").unwrap();
    assert!(good.ok && good.reports.len() == 6);
}

#[test]
fn reversed_dates_are_rejected() {
    let text = r#"
        data_dir = "data"
        train_start = 2019-07-01
        train_end = 2023-06-30
        test_end = 2022-06-30
        [sectors]
        pair = ["AAA", "BBB"]
    "#;
    match RunConfig::from_toml_str(text).unwrap_err() {
        Error::Config { field, .. } => assert_eq!(field, "test_end"),
        e => panic!("{e}"),
    }
}

#[test]
fn shipped_sample_config_parses() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/nse_sectors.toml");
    let cfg = RunConfig::from_file(&path).unwrap();
    assert_eq!(cfg.sectors.len(), 15);
    assert_eq!(cfg.sectors["NIFTY 50"].len(), 50);
    assert!(cfg.sectors.values().filter(|t| t.len() == 10).count() == 14);
}
