//! Price ingestion, calendar alignment, train/test splitting and daily returns.
//!
//! Two input layouts are accepted:
//!
//! * one CSV per ticker, with a header row, an ISO-8601 (`YYYY-MM-DD`) date
//!   column and a close column (default header `Close`);
//! * a single wide CSV whose first column is the date and whose remaining
//!   columns are tickers. An empty cell means the ticker did not trade that day.
//!
//! By default the panel keeps only the dates on which every ticker has a
//! price. [`AlignPolicy::ForwardFill`] instead keeps every date from the
//! latest first-listing onwards and carries the last seen close forward.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt_num;

pub const DATE_FORMAT: &str = "%Y-%m-%d";

/// Date-aligned close-price panel: one row per date, one column per ticker.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceTable {
    dates: Vec<NaiveDate>,
    tickers: Vec<String>,
    closes: DMatrix<f64>,
}

impl PriceTable {
    pub fn new(dates: Vec<NaiveDate>, tickers: Vec<String>, closes: DMatrix<f64>) -> Result<Self> {
        if tickers.is_empty() {
            return Err(Error::InvalidPriceTable("no tickers".into()));
        }
        if dates.is_empty() {
            return Err(Error::InvalidPriceTable("no dates".into()));
        }
        if closes.nrows() != dates.len() || closes.ncols() != tickers.len() {
            return Err(Error::InvalidPriceTable(format!(
                "matrix is {}x{}, expected {}x{}",
                closes.nrows(),
                closes.ncols(),
                dates.len(),
                tickers.len()
            )));
        }
        check_unique(&tickers)?;
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidPriceTable(format!(
                "dates not strictly increasing at {}",
                w[1]
            )));
        }
        for (j, ticker) in tickers.iter().enumerate() {
            for (i, date) in dates.iter().enumerate() {
                let p = closes[(i, j)];
                if !(p.is_finite() && p > 0.0) {
                    return Err(Error::InvalidPriceTable(format!(
                        "price {p} for '{ticker}' on {date} is not positive and finite"
                    )));
                }
            }
        }
        Ok(Self {
            dates,
            tickers,
            closes,
        })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn closes(&self) -> &DMatrix<f64> {
        &self.closes
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn n_tickers(&self) -> usize {
        self.tickers.len()
    }

    pub fn first_date(&self) -> NaiveDate {
        self.dates[0]
    }

    pub fn last_date(&self) -> NaiveDate {
        self.dates[self.dates.len() - 1]
    }

    /// Rows with `start <= date <= end`.
    pub fn restrict(&self, start: NaiveDate, end: NaiveDate) -> Result<PriceTable> {
        let rows: Vec<usize> = (0..self.dates.len())
            .filter(|&i| self.dates[i] >= start && self.dates[i] <= end)
            .collect();
        if rows.is_empty() {
            return Err(Error::InvalidPriceTable(format!(
                "no dates between {start} and {end}"
            )));
        }
        Ok(self.take_rows(&rows))
    }

    /// Keep the listed columns, in the given order.
    pub fn select(&self, tickers: &[String]) -> Result<PriceTable> {
        let cols = tickers
            .iter()
            .map(|t| {
                self.tickers
                    .iter()
                    .position(|x| x == t)
                    .ok_or_else(|| Error::TickerMismatch(format!("'{t}' not in price table")))
            })
            .collect::<Result<Vec<_>>>()?;
        let closes = self.closes.select_columns(cols.iter());
        PriceTable::new(self.dates.clone(), tickers.to_vec(), closes)
    }

    fn take_rows(&self, rows: &[usize]) -> PriceTable {
        PriceTable {
            dates: rows.iter().map(|&i| self.dates[i]).collect(),
            tickers: self.tickers.clone(),
            closes: self.closes.select_rows(rows.iter()),
        }
    }

    /// Wide CSV: `Date,<ticker>...`, one row per date.
    pub fn to_wide_csv(&self) -> String {
        let mut out = String::from("Date");
        for t in &self.tickers {
            out.push(',');
            out.push_str(t);
        }
        out.push('\n');
        for (i, d) in self.dates.iter().enumerate() {
            out.push_str(&d.format(DATE_FORMAT).to_string());
            for j in 0..self.tickers.len() {
                out.push(',');
                out.push_str(&fmt_num(self.closes[(i, j)]));
            }
            out.push('\n');
        }
        out
    }
}

fn check_unique(tickers: &[String]) -> Result<()> {
    let mut seen = HashSet::new();
    for t in tickers {
        if !seen.insert(t.as_str()) {
            return Err(Error::DuplicateTicker(t.clone()));
        }
    }
    Ok(())
}

/// Daily simple returns, one row fewer than the source price table.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnMatrix {
    dates: Vec<NaiveDate>,
    tickers: Vec<String>,
    returns: DMatrix<f64>,
}

impl ReturnMatrix {
    pub fn new(dates: Vec<NaiveDate>, tickers: Vec<String>, returns: DMatrix<f64>) -> Result<Self> {
        if returns.nrows() != dates.len() || returns.ncols() != tickers.len() {
            return Err(Error::DimensionMismatch {
                expected: dates.len() * tickers.len(),
                actual: returns.len(),
            });
        }
        check_unique(&tickers)?;
        if let Some(r) = returns.iter().find(|r| !(r.is_finite() && **r > -1.0)) {
            return Err(Error::NonFinite(format!("return matrix (value {r})")));
        }
        Ok(Self {
            dates,
            tickers,
            returns,
        })
    }

    /// Build from a raw matrix with synthetic consecutive dates starting at 2000-01-03.
    pub fn from_matrix(tickers: Vec<String>, returns: DMatrix<f64>) -> Result<Self> {
        let start = NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date");
        let dates = (0..returns.nrows())
            .map(|i| start + chrono::Days::new(i as u64))
            .collect();
        Self::new(dates, tickers, returns)
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.returns
    }

    pub fn n_obs(&self) -> usize {
        self.returns.nrows()
    }

    pub fn n_assets(&self) -> usize {
        self.returns.ncols()
    }
}

/// How dates missing for some tickers are reconciled.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignPolicy {
    #[default]
    Intersect,
    ForwardFill,
}

/// One ticker's CSV file.
#[derive(Debug, Clone)]
pub struct CsvSource {
    pub ticker: String,
    pub path: PathBuf,
}

impl CsvSource {
    pub fn new(ticker: impl Into<String>, path: impl Into<PathBuf>) -> Self {
        Self {
            ticker: ticker.into(),
            path: path.into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub date_column: String,
    pub close_column: String,
    pub align: AlignPolicy,
    /// Reject tickers whose first price is more than `max_start_lag_days`
    /// after this date.
    pub required_start: Option<NaiveDate>,
    pub max_start_lag_days: u64,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            date_column: "Date".into(),
            close_column: "Close".into(),
            align: AlignPolicy::Intersect,
            required_start: None,
            max_start_lag_days: 7,
        }
    }
}

type Series = Vec<(NaiveDate, f64)>;

/// Load one CSV per ticker and align them into a panel. Columns follow the
/// order of `sources`.
pub fn load_price_table(sources: &[CsvSource], opts: &LoadOptions) -> Result<PriceTable> {
    if sources.is_empty() {
        return Err(Error::InvalidPriceTable("no sources".into()));
    }
    let tickers: Vec<String> = sources.iter().map(|s| s.ticker.clone()).collect();
    check_unique(&tickers)?;
    let series = sources
        .par_iter()
        .map(|s| read_ticker_csv(&s.path, opts))
        .collect::<Result<Vec<_>>>()?;
    align(tickers, series, opts)
}

/// Load a wide CSV (`date,<ticker>,<ticker>...`).
pub fn load_wide_csv(path: &Path, opts: &LoadOptions) -> Result<PriceTable> {
    let mut reader = open_csv(path)?;
    let headers = read_headers(&mut reader, path)?;
    let date_idx = column_index(&headers, &opts.date_column, path)?;
    let columns: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != date_idx)
        .map(|(i, h)| (i, h.to_string()))
        .collect();
    if columns.is_empty() {
        return Err(Error::Csv {
            path: path.into(),
            message: "no ticker columns".into(),
        });
    }
    let tickers: Vec<String> = columns.iter().map(|(_, h)| h.clone()).collect();
    check_unique(&tickers)?;
    let mut series: Vec<Series> = vec![Vec::new(); columns.len()];
    for (row, record) in reader.records().enumerate() {
        let row = row + 1;
        let record = record.map_err(|e| Error::Csv {
            path: path.into(),
            message: e.to_string(),
        })?;
        let date = parse_date(record.get(date_idx).unwrap_or(""), path, row, &opts.date_column)?;
        for (k, (idx, name)) in columns.iter().enumerate() {
            let cell = record.get(*idx).unwrap_or("").trim();
            if cell.is_empty() {
                continue;
            }
            series[k].push((date, parse_price(cell, path, row, name)?));
        }
    }
    for (s, t) in series.iter_mut().zip(&tickers) {
        sort_series(s, path, t)?;
    }
    align(tickers, series, opts)
}

fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn read_headers(reader: &mut csv::Reader<std::fs::File>, path: &Path) -> Result<csv::StringRecord> {
    reader.headers().cloned().map_err(|e| Error::Csv {
        path: path.into(),
        message: e.to_string(),
    })
}

fn column_index(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    headers.iter().position(|h| h == name).ok_or_else(|| Error::Csv {
        path: path.into(),
        message: format!("missing column '{name}'"),
    })
}

fn parse_date(cell: &str, path: &Path, row: usize, column: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(cell.trim(), DATE_FORMAT).map_err(|_| Error::Cell {
        path: path.into(),
        row,
        column: column.into(),
        message: format!("unparsable date '{cell}'"),
    })
}

fn parse_price(cell: &str, path: &Path, row: usize, column: &str) -> Result<f64> {
    let bad = |message: String| Error::Cell {
        path: path.into(),
        row,
        column: column.into(),
        message,
    };
    let value: f64 = cell
        .parse()
        .map_err(|_| bad(format!("unparsable price '{cell}'")))?;
    if !(value.is_finite() && value > 0.0) {
        return Err(bad(format!("price '{cell}' is not positive and finite")));
    }
    Ok(value)
}

fn read_ticker_csv(path: &Path, opts: &LoadOptions) -> Result<Series> {
    let mut reader = open_csv(path)?;
    let headers = read_headers(&mut reader, path)?;
    let date_idx = column_index(&headers, &opts.date_column, path)?;
    let close_idx = column_index(&headers, &opts.close_column, path)?;
    let mut series = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let row = row + 1;
        let record = record.map_err(|e| Error::Csv {
            path: path.into(),
            message: e.to_string(),
        })?;
        let date = parse_date(record.get(date_idx).unwrap_or(""), path, row, &opts.date_column)?;
        let cell = record.get(close_idx).unwrap_or("").trim();
        if cell.is_empty() {
            continue;
        }
        series.push((date, parse_price(cell, path, row, &opts.close_column)?));
    }
    sort_series(&mut series, path, &opts.close_column)?;
    Ok(series)
}

fn sort_series(series: &mut Series, path: &Path, column: &str) -> Result<()> {
    series.sort_by_key(|(d, _)| *d);
    if let Some(w) = series.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::Csv {
            path: path.into(),
            message: format!("duplicate date {} in column '{column}'", w[0].0),
        });
    }
    Ok(())
}

fn align(tickers: Vec<String>, series: Vec<Series>, opts: &LoadOptions) -> Result<PriceTable> {
    for (t, s) in tickers.iter().zip(&series) {
        let Some(&(first, _)) = s.first() else {
            return Err(Error::EmptyOverlap);
        };
        if let Some(required) = opts.required_start {
            if first > required + chrono::Days::new(opts.max_start_lag_days) {
                return Err(Error::InsufficientHistory {
                    ticker: t.clone(),
                    first,
                    required,
                });
            }
        }
    }
    let maps: Vec<BTreeMap<NaiveDate, f64>> = series.into_iter().map(|s| s.into_iter().collect()).collect();

    let dates: Vec<NaiveDate> = match opts.align {
        AlignPolicy::Intersect => {
            let mut common: BTreeSet<NaiveDate> = maps[0].keys().copied().collect();
            for m in &maps[1..] {
                common.retain(|d| m.contains_key(d));
            }
            common.into_iter().collect()
        }
        AlignPolicy::ForwardFill => {
            let start = maps
                .iter()
                .map(|m| *m.keys().next().expect("non-empty"))
                .max()
                .expect("at least one ticker");
            let all: BTreeSet<NaiveDate> = maps
                .iter()
                .flat_map(|m| m.range(start..).map(|(d, _)| *d))
                .collect();
            all.into_iter().collect()
        }
    };
    if dates.is_empty() {
        return Err(Error::EmptyOverlap);
    }
    let closes = DMatrix::from_fn(dates.len(), maps.len(), |i, j| {
        // Intersect: exact hit. ForwardFill: last price at or before the date.
        *maps[j]
            .range(..=dates[i])
            .next_back()
            .map(|(_, p)| p)
            .expect("date within ticker history")
    });
    PriceTable::new(dates, tickers, closes)
}

/// Split into `date <= boundary` and `date > boundary`.
pub fn split_train_test(p: &PriceTable, boundary: NaiveDate) -> Result<(PriceTable, PriceTable)> {
    if boundary < p.first_date() || boundary >= p.last_date() {
        return Err(Error::BoundaryOutOfRange {
            boundary,
            first: p.first_date(),
            last: p.last_date(),
        });
    }
    let cut = p.dates.partition_point(|d| *d <= boundary);
    let train: Vec<usize> = (0..cut).collect();
    let test: Vec<usize> = (cut..p.n_dates()).collect();
    Ok((p.take_rows(&train), p.take_rows(&test)))
}

/// `r[t][i] = close[t+1][i] / close[t][i] - 1`, dated at `t+1`.
pub fn daily_returns(p: &PriceTable) -> Result<ReturnMatrix> {
    let n = p.n_dates();
    if n < 2 {
        return Err(Error::TooFewRows {
            required: 2,
            actual: n,
        });
    }
    let c = &p.closes;
    let returns = DMatrix::from_fn(n - 1, p.n_tickers(), |t, i| c[(t + 1, i)] / c[(t, i)] - 1.0);
    ReturnMatrix::new(p.dates[1..].to_vec(), p.tickers.clone(), returns)
}
