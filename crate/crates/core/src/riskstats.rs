//! Return statistics: expected returns, covariance, correlation, correlation
//! distance, portfolio variance and annualized performance metrics.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::allocators::WeightVector;
use crate::error::{Error, Result};
use crate::fmt_num;
use crate::market_data::ReturnMatrix;

pub const DEFAULT_ANNUALIZATION_DAYS: f64 = 252.0;

const SYMMETRY_TOL: f64 = 1e-12;

/// Annualization and risk-free settings shared by every metric computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsConfig {
    pub annualization_days: f64,
    pub risk_free_rate: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            annualization_days: DEFAULT_ANNUALIZATION_DAYS,
            risk_free_rate: 0.0,
        }
    }
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.annualization_days.is_finite() && self.annualization_days > 0.0) {
            return Err(Error::param("annualization_days", "must be positive"));
        }
        if !self.risk_free_rate.is_finite() {
            return Err(Error::param("risk_free_rate", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedReturns {
    pub tickers: Vec<String>,
    pub mu_daily: Vec<f64>,
    pub mu_annual: Vec<f64>,
}

impl ExpectedReturns {
    pub fn from_daily(tickers: Vec<String>, mu_daily: Vec<f64>, annualization_days: f64) -> Self {
        let mu_annual = mu_daily.iter().map(|m| m * annualization_days).collect();
        Self {
            tickers,
            mu_daily,
            mu_annual,
        }
    }
}

/// Per-asset mean daily return and its annualized value.
pub fn expected_returns(r: &ReturnMatrix, annualization_days: f64) -> Result<ExpectedReturns> {
    if r.n_obs() == 0 {
        return Err(Error::TooFewRows {
            required: 1,
            actual: 0,
        });
    }
    let n = r.n_obs() as f64;
    let mu = r.values().column_iter().map(|c| c.sum() / n).collect();
    Ok(ExpectedReturns::from_daily(
        r.tickers().to_vec(),
        mu,
        annualization_days,
    ))
}

fn check_square_symmetric(tickers: &[String], values: &DMatrix<f64>, what: &str) -> Result<()> {
    let n = tickers.len();
    if values.nrows() != n || values.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: values.nrows().max(values.ncols()),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(what.into()));
    }
    let scale = values.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    for i in 0..n {
        for j in (i + 1)..n {
            if (values[(i, j)] - values[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::InvalidParameter {
                    name: what.into(),
                    message: format!("not symmetric at ({i}, {j})"),
                });
            }
        }
    }
    Ok(())
}

fn labelled_csv(tickers: &[String], values: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for t in tickers {
        out.push(',');
        out.push_str(t);
    }
    out.push('\n');
    for (i, t) in tickers.iter().enumerate() {
        out.push_str(t);
        for j in 0..tickers.len() {
            out.push(',');
            out.push_str(&fmt_num(values[(i, j)]));
        }
        out.push('\n');
    }
    out
}

/// Symmetric matrix of daily return covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix {
    tickers: Vec<String>,
    values: DMatrix<f64>,
}

impl CovMatrix {
    pub fn new(tickers: Vec<String>, values: DMatrix<f64>) -> Result<Self> {
        check_square_symmetric(&tickers, &values, "covariance")?;
        if let Some(i) = (0..tickers.len()).find(|&i| values[(i, i)] < 0.0) {
            return Err(Error::InvalidParameter {
                name: "covariance".into(),
                message: format!("negative variance for '{}'", tickers[i]),
            });
        }
        Ok(Self { tickers, values })
    }

    /// Diagonal covariance with synthetic tickers `A0, A1, ...`.
    pub fn diagonal(variances: &[f64]) -> Result<Self> {
        let tickers = (0..variances.len()).map(|i| format!("A{i}")).collect();
        Self::new(
            tickers,
            DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(variances)),
        )
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.tickers.len()
    }

    pub fn variance(&self, i: usize) -> f64 {
        self.values[(i, i)]
    }

    pub fn variances(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.values[(i, i)]).collect()
    }

    /// Principal submatrix over `members`, in the given order.
    pub fn submatrix(&self, members: &[usize]) -> CovMatrix {
        CovMatrix {
            tickers: members.iter().map(|&i| self.tickers[i].clone()).collect(),
            values: DMatrix::from_fn(members.len(), members.len(), |a, b| {
                self.values[(members[a], members[b])]
            }),
        }
    }

    /// Same matrix times a positive constant.
    pub fn scaled(&self, factor: f64) -> CovMatrix {
        CovMatrix {
            tickers: self.tickers.clone(),
            values: &self.values * factor,
        }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.values
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn to_correlation(&self) -> Result<CorrMatrix> {
        let sd: Vec<f64> = self.variances().iter().map(|v| v.sqrt()).collect();
        if let Some(i) = sd.iter().position(|s| *s <= 0.0) {
            return Err(Error::ZeroVariance(self.tickers[i].clone()));
        }
        let n = self.dim();
        let mut values = DMatrix::identity(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let c = (self.values[(i, j)] / (sd[i] * sd[j])).clamp(-1.0, 1.0);
                values[(i, j)] = c;
                values[(j, i)] = c;
            }
        }
        Ok(CorrMatrix {
            tickers: self.tickers.clone(),
            values,
        })
    }

    pub fn to_csv(&self) -> String {
        labelled_csv(&self.tickers, &self.values)
    }
}

/// Pearson correlations: unit diagonal, entries in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct CorrMatrix {
    tickers: Vec<String>,
    values: DMatrix<f64>,
}

impl CorrMatrix {
    pub fn new(tickers: Vec<String>, values: DMatrix<f64>) -> Result<Self> {
        check_square_symmetric(&tickers, &values, "correlation")?;
        for i in 0..tickers.len() {
            if values[(i, i)] != 1.0 {
                return Err(Error::param("correlation", "diagonal must be 1"));
            }
        }
        if values.iter().any(|v| !(-1.0..=1.0).contains(v)) {
            return Err(Error::param("correlation", "entries must lie in [-1, 1]"));
        }
        Ok(Self { tickers, values })
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn to_csv(&self) -> String {
        labelled_csv(&self.tickers, &self.values)
    }
}

/// Correlation distances: zero diagonal, entries in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    tickers: Vec<String>,
    values: DMatrix<f64>,
}

impl DistanceMatrix {
    pub fn new(tickers: Vec<String>, values: DMatrix<f64>) -> Result<Self> {
        check_square_symmetric(&tickers, &values, "distance")?;
        for i in 0..tickers.len() {
            if values[(i, i)] != 0.0 {
                return Err(Error::param("distance", "diagonal must be 0"));
            }
        }
        if values.iter().any(|v| *v < 0.0) {
            return Err(Error::param("distance", "entries must be non-negative"));
        }
        Ok(Self { tickers, values })
    }

    /// Square matrix given as nested rows, synthetic tickers `A0, A1, ...`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::param("distance", "rows must form a square matrix"));
        }
        let tickers = (0..n).map(|i| format!("A{i}")).collect();
        Self::new(tickers, DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.tickers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tickers.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    pub fn to_csv(&self) -> String {
        labelled_csv(&self.tickers, &self.values)
    }
}

/// Sample covariance with divisor `T - 1`.
pub fn covariance(r: &ReturnMatrix) -> Result<CovMatrix> {
    let t = r.n_obs();
    if t < 2 {
        return Err(Error::TooFewRows {
            required: 2,
            actual: t,
        });
    }
    let x = r.values();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("returns".into()));
    }
    let n = r.n_assets();
    let means: Vec<f64> = x.column_iter().map(|c| c.sum() / t as f64).collect();
    let mut values = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let s: f64 = (0..t)
                .map(|k| (x[(k, i)] - means[i]) * (x[(k, j)] - means[j]))
                .sum();
            let c = s / (t - 1) as f64;
            values[(i, j)] = c;
            values[(j, i)] = c;
        }
    }
    CovMatrix::new(r.tickers().to_vec(), values)
}

pub fn correlation(r: &ReturnMatrix) -> Result<CorrMatrix> {
    covariance(r)?.to_correlation()
}

/// `d = sqrt((1 - rho) / 2)`.
pub fn corr_to_distance(c: &CorrMatrix) -> DistanceMatrix {
    let n = c.tickers.len();
    let values = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            ((1.0 - c.values[(i, j)]) / 2.0).max(0.0).sqrt()
        }
    });
    DistanceMatrix {
        tickers: c.tickers.clone(),
        values,
    }
}

fn check_tickers(a: &[String], b: &[String]) -> Result<()> {
    if a != b {
        return Err(Error::TickerMismatch(format!("{a:?} vs {b:?}")));
    }
    Ok(())
}

/// Daily portfolio variance `w' C w`.
pub fn portfolio_variance(w: &WeightVector, c: &CovMatrix) -> Result<f64> {
    check_tickers(w.tickers(), c.tickers())?;
    Ok(quadratic_form(w.weights(), &c.values))
}

pub(crate) fn quadratic_form(w: &[f64], c: &DMatrix<f64>) -> f64 {
    let n = w.len();
    let mut diag = 0.0;
    let mut off = 0.0;
    for i in 0..n {
        diag += w[i] * w[i] * c[(i, i)];
        for j in (i + 1)..n {
            off += w[i] * w[j] * c[(i, j)];
        }
    }
    diag + 2.0 * off
}

/// Annualized return, volatility and Sharpe ratio of one portfolio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerfMetrics {
    pub annual_return: f64,
    pub annual_volatility: f64,
    /// `None` when volatility is zero but the excess return is not.
    pub sharpe: Option<f64>,
    pub risk_free_rate: f64,
}

impl PerfMetrics {
    pub fn from_annual(annual_return: f64, annual_volatility: f64, risk_free_rate: f64) -> Self {
        Self {
            annual_return,
            annual_volatility,
            sharpe: sharpe_ratio(annual_return, annual_volatility, risk_free_rate),
            risk_free_rate,
        }
    }
}

/// `(R - Rf) / sigma`; zero volatility gives 0 for zero excess return and
/// `None` otherwise.
pub fn sharpe_ratio(annual_return: f64, annual_volatility: f64, risk_free_rate: f64) -> Option<f64> {
    let excess = annual_return - risk_free_rate;
    if annual_volatility > 0.0 {
        Some(excess / annual_volatility)
    } else if excess == 0.0 {
        Some(0.0)
    } else {
        None
    }
}

/// Metrics from precomputed moments; the Monte-Carlo optimizer and
/// [`portfolio_metrics`] both go through here.
pub fn metrics_from_moments(
    w: &[f64],
    mu: &ExpectedReturns,
    c: &CovMatrix,
    cfg: &MetricsConfig,
) -> PerfMetrics {
    let annual_return: f64 = w.iter().zip(&mu.mu_annual).map(|(w, m)| w * m).sum();
    let daily_var = quadratic_form(w, &c.values).max(0.0);
    let annual_volatility = (cfg.annualization_days * daily_var).sqrt();
    PerfMetrics::from_annual(annual_return, annual_volatility, cfg.risk_free_rate)
}

pub fn portfolio_metrics(w: &WeightVector, r: &ReturnMatrix, cfg: &MetricsConfig) -> Result<PerfMetrics> {
    cfg.validate()?;
    check_tickers(w.tickers(), r.tickers())?;
    let mu = expected_returns(r, cfg.annualization_days)?;
    let c = covariance(r)?;
    Ok(metrics_from_moments(w.weights(), &mu, &c, cfg))
}
