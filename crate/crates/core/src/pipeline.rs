//! End-to-end study runner: ingestion, fitting, evaluation and reporting
//! for every configured sector.
//!
//! Output layout under `output_dir`:
//!
//! ```text
//! manifest.json
//! summary.json                 period -> SummaryTable
//! summary_<period>.csv
//! <sector>/weights_<method>.csv
//! <sector>/dendrogram_<hrp|herc>.json
//! <sector>/frontier_mvp.csv
//! <sector>/report_<method>_<period>.json
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocators::{
    herc_allocation, hrp_allocate, mvp_optimize, HercAllocation, MvpResult, WeightVector,
};
use crate::backtest::{evaluate, summarize, BacktestReport, Method, ReportLabels, SummaryCell, SummaryTable};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::hierclust::{agglomerate, dendrogram_export, Dendrogram, LinkageTree};
use crate::market_data::{
    daily_returns, load_price_table, load_wide_csv, split_train_test, CsvSource, PriceTable, ReturnMatrix,
};
use crate::riskstats::{corr_to_distance, correlation, covariance, expected_returns, CovMatrix};

pub const TRAIN: &str = "train";
pub const TEST: &str = "test";

/// Directory-safe form of a sector name.
pub fn sector_slug(name: &str) -> String {
    let slug: String = name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                '_'
            }
        })
        .collect();
    if slug.is_empty() {
        "_".into()
    } else {
        slug
    }
}

/// Write to a temporary sibling, then rename over `path`.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn sector_tickers<'a>(cfg: &'a RunConfig, sector: &str) -> Result<&'a [String]> {
    cfg.sectors
        .get(sector)
        .map(Vec::as_slice)
        .ok_or_else(|| Error::config("sector", format!("unknown sector '{sector}'")))
}

/// Cleaned price panel for one sector over `train_start..=test_end`.
pub fn load_sector(cfg: &RunConfig, sector: &str) -> Result<PriceTable> {
    let tickers = sector_tickers(cfg, sector)?;
    let opts = cfg.load_options();
    let table = match (&cfg.prices_file, &cfg.data_dir) {
        (Some(file), _) => load_wide_csv(file, &opts)?.select(tickers)?,
        (None, Some(dir)) => {
            let sources: Vec<CsvSource> = tickers
                .iter()
                .map(|t| CsvSource::new(t.clone(), dir.join(format!("{t}.csv"))))
                .collect();
            load_price_table(&sources, &opts)?
        }
        (None, None) => return Err(Error::config("data_dir", "set data_dir or prices_file")),
    };
    table.restrict(cfg.train_start, cfg.test_end)
}

#[derive(Debug, Clone)]
pub struct SectorData {
    pub prices: PriceTable,
    pub train: ReturnMatrix,
    /// Returns dated after `train_end`; the first one is measured from the
    /// last training close.
    pub test: ReturnMatrix,
}

pub fn prepare_sector(cfg: &RunConfig, sector: &str) -> Result<SectorData> {
    let prices = load_sector(cfg, sector)?;
    let (train_prices, _) = split_train_test(&prices, cfg.train_end)?;
    let train = daily_returns(&train_prices)?;
    let test = daily_returns(&prices.restrict(train_prices.last_date(), cfg.test_end)?)?;
    Ok(SectorData { prices, train, test })
}

pub fn build_tree(cfg: &RunConfig, train: &ReturnMatrix) -> Result<LinkageTree> {
    agglomerate(&corr_to_distance(&correlation(train)?), cfg.linkage)
}

pub fn fit_mvp(cfg: &RunConfig, train: &ReturnMatrix, n_samples: usize) -> Result<MvpResult> {
    let mu = expected_returns(train, cfg.annualization_days)?;
    let cov = covariance(train)?;
    mvp_optimize(&mu, &cov, n_samples, &cfg.metrics(), cfg.mvp_seed)
}

#[derive(Debug, Clone)]
pub struct FittedSector {
    pub cov: CovMatrix,
    pub tree: Option<LinkageTree>,
    pub mvp: Option<MvpResult>,
    pub herc: Option<HercAllocation>,
    pub weights: BTreeMap<Method, WeightVector>,
}

pub fn fit_sector(cfg: &RunConfig, train: &ReturnMatrix, methods: &[Method]) -> Result<FittedSector> {
    let cov = covariance(train)?;
    let needs_tree = methods.iter().any(|m| matches!(m, Method::Hrp | Method::Herc));
    let tree = if needs_tree {
        Some(build_tree(cfg, train)?)
    } else {
        None
    };
    let mut weights = BTreeMap::new();
    let mut mvp = None;
    let mut herc = None;
    for &m in methods {
        match m {
            Method::Mvp => {
                let res = fit_mvp(cfg, train, cfg.mvp_n_samples)?;
                weights.insert(m, res.weight_vector(res.max_sharpe_index)?);
                mvp = Some(res);
            }
            Method::Hrp => {
                let t = tree.as_ref().expect("tree built");
                weights.insert(m, hrp_allocate(&cov, t)?);
            }
            Method::Herc => {
                let t = tree.as_ref().expect("tree built");
                let alloc = herc_allocation(&cov, t, &cfg.herc_params())?;
                weights.insert(m, alloc.weights.clone());
                herc = Some(alloc);
            }
        }
    }
    Ok(FittedSector {
        cov,
        tree,
        mvp,
        herc,
        weights,
    })
}

pub fn sector_dendrogram(cfg: &RunConfig, data: &SectorData) -> Result<Dendrogram> {
    let tree = build_tree(cfg, &data.train)?;
    dendrogram_export(&tree, data.train.tickers())
}

/// Evaluate `w` on both periods of a sector.
pub fn backtest_sector(
    cfg: &RunConfig,
    sector: &str,
    data: &SectorData,
    portfolio: &str,
    w: &WeightVector,
) -> Result<[BacktestReport; 2]> {
    let w = reorder(w, data.train.tickers())?;
    let run = |period: &str, r: &ReturnMatrix| {
        evaluate(
            &w,
            r,
            &cfg.metrics(),
            ReportLabels {
                sector: sector.to_string(),
                portfolio: portfolio.to_string(),
                period: period.to_string(),
            },
        )
    };
    Ok([run(TRAIN, &data.train)?, run(TEST, &data.test)?])
}

/// Same weights with tickers in `order`.
fn reorder(w: &WeightVector, order: &[String]) -> Result<WeightVector> {
    if w.tickers() == order {
        return Ok(w.clone());
    }
    if w.tickers().len() != order.len() {
        return Err(Error::TickerMismatch(format!("{:?} vs {:?}", w.tickers(), order)));
    }
    let weights = order
        .iter()
        .map(|t| {
            w.get(t)
                .ok_or_else(|| Error::TickerMismatch(format!("'{t}' missing from weights")))
        })
        .collect::<Result<Vec<_>>>()?;
    WeightVector::new(order.to_vec(), weights)
}

/// Group reports by period and summarize each group. The methods are those
/// appearing among the reports.
pub fn summarize_reports(reports: &[BacktestReport]) -> Result<BTreeMap<String, SummaryTable>> {
    let mut by_period: BTreeMap<String, Vec<SummaryCell>> = BTreeMap::new();
    for r in reports {
        by_period.entry(r.period.clone()).or_default().push(SummaryCell {
            sector: r.sector.clone(),
            method: r.portfolio.parse()?,
            metrics: r.metrics,
        });
    }
    by_period
        .into_iter()
        .map(|(period, cells)| {
            let mut methods: Vec<Method> = cells.iter().map(|c| c.method).collect();
            methods.sort();
            methods.dedup();
            Ok((period, summarize(&cells, &methods)?))
        })
        .collect()
}

pub fn read_report(path: &Path) -> Result<BacktestReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.into(),
        message: e.to_string(),
    })
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.into(),
        message: e.to_string(),
    })
}

/// Write `summary.json` and one `summary_<period>.csv` per period; returns
/// the paths relative to `out`.
pub fn write_summaries(out: &Path, tables: &BTreeMap<String, SummaryTable>) -> Result<(String, Vec<String>)> {
    let json = serde_json::to_string_pretty(tables).expect("summary serializes");
    write_atomic(&out.join("summary.json"), &json)?;
    let mut csvs = Vec::new();
    for (period, table) in tables {
        let name = format!("summary_{}.csv", sector_slug(period));
        write_atomic(&out.join(&name), &table.to_csv())?;
        csvs.push(name);
    }
    Ok(("summary.json".into(), csvs))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SectorManifest {
    pub sector: String,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub weights: BTreeMap<Method, String>,
    pub dendrograms: BTreeMap<Method, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frontier: Option<String>,
    pub reports: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub herc_k: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub mvp: u64,
    pub gap: u64,
}

/// Record of one run. Paths are relative to `output_dir`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config: RunConfig,
    pub seeds: Seeds,
    pub sectors: Vec<SectorManifest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
    pub summary_tables: Vec<String>,
}

impl RunManifest {
    pub fn failed_sectors(&self) -> Vec<&str> {
        self.sectors
            .iter()
            .filter(|s| !s.ok)
            .map(|s| s.sector.as_str())
            .collect()
    }

    /// Every output file listed, manifest excluded.
    pub fn files(&self) -> Vec<&str> {
        let mut out = Vec::new();
        for s in &self.sectors {
            out.extend(s.weights.values().map(String::as_str));
            out.extend(s.dendrograms.values().map(String::as_str));
            out.extend(s.frontier.as_deref());
            out.extend(s.reports.iter().map(String::as_str));
        }
        out.extend(self.summary.as_deref());
        out.extend(self.summary_tables.iter().map(String::as_str));
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

struct SectorOutcome {
    manifest: SectorManifest,
    reports: Vec<BacktestReport>,
}

fn process_sector(cfg: &RunConfig, sector: &str) -> Result<SectorOutcome> {
    let out = &cfg.output_dir;
    let slug = sector_slug(sector);
    let data = prepare_sector(cfg, sector)?;
    let methods: Vec<Method> = {
        let mut m = cfg.methods.clone();
        m.sort();
        m.dedup();
        m
    };
    let fitted = fit_sector(cfg, &data.train, &methods)?;

    let mut manifest = SectorManifest {
        sector: sector.to_string(),
        ok: true,
        herc_k: fitted.herc.as_ref().map(|h| h.k),
        ..Default::default()
    };
    let mut reports = Vec::new();
    for (&method, w) in &fitted.weights {
        let name = format!("{slug}/weights_{method}.csv");
        write_atomic(&out.join(&name), &w.to_csv())?;
        manifest.weights.insert(method, name);

        if let (Method::Hrp | Method::Herc, Some(tree)) = (method, &fitted.tree) {
            let name = format!("{slug}/dendrogram_{method}.json");
            let dg = dendrogram_export(tree, data.train.tickers())?;
            write_atomic(&out.join(&name), &dg.to_json())?;
            manifest.dendrograms.insert(method, name);
        }
        for report in backtest_sector(cfg, sector, &data, method.as_str(), w)? {
            let name = format!("{slug}/report_{method}_{}.json", report.period);
            write_atomic(&out.join(&name), &report.to_json())?;
            manifest.reports.push(name);
            reports.push(report);
        }
    }
    if let Some(mvp) = &fitted.mvp {
        let name = format!("{slug}/frontier_mvp.csv");
        write_atomic(&out.join(&name), &mvp.samples_csv())?;
        manifest.frontier = Some(name);
    }
    Ok(SectorOutcome { manifest, reports })
}

/// Run the whole study. A sector that fails is recorded in the manifest and
/// left out of the summary; the other sectors still complete.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunManifest> {
    cfg.validate()?;
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::config("workers", e.to_string()))?;
    let sectors: Vec<&String> = cfg.sectors.keys().collect();
    let outcomes: Vec<(String, Result<SectorOutcome>)> = pool.install(|| {
        sectors
            .par_iter()
            .map(|s| (s.to_string(), process_sector(cfg, s)))
            .collect()
    });

    let mut manifests = Vec::new();
    let mut reports = Vec::new();
    for (sector, outcome) in outcomes {
        match outcome {
            Ok(o) => {
                manifests.push(o.manifest);
                reports.extend(o.reports);
            }
            Err(e) => manifests.push(SectorManifest {
                sector,
                ok: false,
                error: Some(e.to_string()),
                ..Default::default()
            }),
        }
    }
    let (summary, summary_tables) = if reports.is_empty() {
        (None, Vec::new())
    } else {
        let (json, csvs) = write_summaries(out, &summarize_reports(&reports)?)?;
        (Some(json), csvs)
    };
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        seeds: Seeds {
            mvp: cfg.mvp_seed,
            gap: cfg.gap_seed,
        },
        sectors: manifests,
        summary,
        summary_tables,
    };
    write_atomic(&out.join("manifest.json"), &manifest.to_json())?;
    Ok(manifest)
}
