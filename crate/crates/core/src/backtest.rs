//! Fixed-weight evaluation of allocations and the cross-sector summary.

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::allocators::WeightVector;
use crate::error::{Error, Result};
use crate::fmt_num;
use crate::market_data::ReturnMatrix;
use crate::riskstats::{portfolio_metrics, MetricsConfig, PerfMetrics};

/// Allocation method, in tie-break priority order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Mvp,
    Hrp,
    Herc,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Mvp, Method::Hrp, Method::Herc];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Mvp => "mvp",
            Method::Hrp => "hrp",
            Method::Herc => "herc",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Method::Mvp => "MVP",
            Method::Hrp => "HRP",
            Method::Herc => "HERC",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mvp" => Ok(Method::Mvp),
            "hrp" => Ok(Method::Hrp),
            "herc" => Ok(Method::Herc),
            other => Err(Error::param("method", format!("unknown method '{other}'"))),
        }
    }
}

/// Daily portfolio return at fixed weights: `p[t] = sum_i w_i r[t][i]`.
pub fn portfolio_return_series(w: &WeightVector, r: &ReturnMatrix) -> Result<Vec<f64>> {
    if w.tickers() != r.tickers() {
        return Err(Error::TickerMismatch(format!(
            "{:?} vs {:?}",
            w.tickers(),
            r.tickers()
        )));
    }
    let x = r.values();
    Ok((0..r.n_obs())
        .map(|t| w.weights().iter().enumerate().map(|(i, wi)| wi * x[(t, i)]).sum())
        .collect())
}

/// Compounded cumulative return: `cum[t] = prod_{u<=t} (1 + daily[u]) - 1`.
pub fn cumulative_series(daily: &[f64]) -> Vec<f64> {
    let mut growth = 1.0;
    daily
        .iter()
        .map(|r| {
            growth *= 1.0 + r;
            growth - 1.0
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportLabels {
    pub sector: String,
    pub portfolio: String,
    pub period: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub sector: String,
    pub portfolio: String,
    pub period: String,
    pub weights: WeightVector,
    pub dates: Vec<NaiveDate>,
    pub daily_returns: Vec<f64>,
    pub cumulative_series: Vec<f64>,
    pub metrics: PerfMetrics,
}

impl BacktestReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn evaluate(
    w: &WeightVector,
    r: &ReturnMatrix,
    cfg: &MetricsConfig,
    labels: ReportLabels,
) -> Result<BacktestReport> {
    let daily = portfolio_return_series(w, r)?;
    let metrics = portfolio_metrics(w, r, cfg)?;
    Ok(BacktestReport {
        sector: labels.sector,
        portfolio: labels.portfolio,
        period: labels.period,
        weights: w.clone(),
        dates: r.dates().to_vec(),
        cumulative_series: cumulative_series(&daily),
        daily_returns: daily,
        metrics,
    })
}

/// One (sector, method) cell of a summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryCell {
    pub sector: String,
    pub method: Method,
    pub metrics: PerfMetrics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Winner {
    pub method: Method,
    /// Another method matched the winning value exactly.
    pub tie: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Winners {
    pub annual_return: Winner,
    pub annual_volatility: Winner,
    pub sharpe: Winner,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorRow {
    pub sector: String,
    /// Metrics per method, in [`SummaryTable::methods`] order.
    pub metrics: Vec<PerfMetrics>,
    pub winners: Winners,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WinCounts {
    pub method: Method,
    pub annual_return: usize,
    pub annual_volatility: usize,
    pub sharpe: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub methods: Vec<Method>,
    pub rows: Vec<SectorRow>,
    pub overall: Vec<WinCounts>,
}

impl SummaryTable {
    pub fn counts(&self, method: Method) -> Option<&WinCounts> {
        self.overall.iter().find(|c| c.method == method)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }

    /// Sector rows with return/volatility/Sharpe columns per method and a
    /// final `Overall` row of win counts.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("Sector");
        for m in &self.methods {
            let t = m.title();
            out.push_str(&format!(",{t} Annual Return,{t} Annual Vol,{t} Sharpe Ratio"));
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&csv_field(&row.sector));
            for m in &row.metrics {
                out.push(',');
                out.push_str(&fmt_num(m.annual_return));
                out.push(',');
                out.push_str(&fmt_num(m.annual_volatility));
                out.push(',');
                if let Some(sr) = m.sharpe {
                    out.push_str(&fmt_num(sr));
                }
            }
            out.push('\n');
        }
        out.push_str("Overall");
        for c in &self.overall {
            out.push_str(&format!(
                ",{},{},{}",
                c.annual_return, c.annual_volatility, c.sharpe
            ));
        }
        out.push('\n');
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Pick the best method by `score` (higher is better); earlier methods win
/// ties.
fn pick(methods: &[Method], scores: &[f64]) -> Winner {
    let mut best = 0;
    for i in 1..scores.len() {
        if scores[i] > scores[best] {
            best = i;
        }
    }
    let tie = scores
        .iter()
        .enumerate()
        .any(|(i, s)| i != best && *s == scores[best]);
    Winner {
        method: methods[best],
        tie,
    }
}

/// Per-sector winners (highest return, lowest volatility, highest Sharpe)
/// and overall win counts. Sectors keep their first-appearance order.
pub fn summarize(cells: &[SummaryCell], methods: &[Method]) -> Result<SummaryTable> {
    let mut methods = methods.to_vec();
    methods.sort();
    methods.dedup();
    if methods.is_empty() {
        return Err(Error::param("methods", "at least one method required"));
    }
    let mut sectors: Vec<&str> = Vec::new();
    for c in cells {
        if !sectors.contains(&c.sector.as_str()) {
            sectors.push(&c.sector);
        }
    }
    let mut rows = Vec::with_capacity(sectors.len());
    for sector in sectors {
        let metrics = methods
            .iter()
            .map(|&m| {
                cells
                    .iter()
                    .find(|c| c.sector == sector && c.method == m)
                    .map(|c| c.metrics)
                    .ok_or_else(|| Error::MissingCell {
                        sector: sector.to_string(),
                        method: m.to_string(),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        let ret: Vec<f64> = metrics.iter().map(|m| m.annual_return).collect();
        let neg_vol: Vec<f64> = metrics.iter().map(|m| -m.annual_volatility).collect();
        let sharpe: Vec<f64> = metrics
            .iter()
            .map(|m| m.sharpe.unwrap_or(f64::NEG_INFINITY))
            .collect();
        rows.push(SectorRow {
            sector: sector.to_string(),
            winners: Winners {
                annual_return: pick(&methods, &ret),
                annual_volatility: pick(&methods, &neg_vol),
                sharpe: pick(&methods, &sharpe),
            },
            metrics,
        });
    }
    let overall = methods
        .iter()
        .map(|&m| WinCounts {
            method: m,
            annual_return: rows
                .iter()
                .filter(|r| r.winners.annual_return.method == m)
                .count(),
            annual_volatility: rows
                .iter()
                .filter(|r| r.winners.annual_volatility.method == m)
                .count(),
            sharpe: rows.iter().filter(|r| r.winners.sharpe.method == m).count(),
        })
        .collect();
    Ok(SummaryTable {
        methods,
        rows,
        overall,
    })
}
