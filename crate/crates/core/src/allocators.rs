//! Long-only allocators: inverse-variance, Monte-Carlo mean-variance,
//! hierarchical risk parity and hierarchical equal risk contribution.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt_num;
use crate::hierclust::{cut_roots, gap_statistic, quasi_diagonalize, GapConfig, LinkageTree};
use crate::riskstats::{
    corr_to_distance, metrics_from_moments, quadratic_form, CovMatrix, ExpectedReturns, MetricsConfig,
};

pub const WEIGHT_SUM_TOL: f64 = 1e-9;

/// Long-only allocation summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    tickers: Vec<String>,
    weights: Vec<f64>,
}

impl WeightVector {
    pub fn new(tickers: Vec<String>, weights: Vec<f64>) -> Result<Self> {
        if tickers.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: tickers.len(),
                actual: weights.len(),
            });
        }
        if tickers.is_empty() {
            return Err(Error::InvalidWeights("empty".into()));
        }
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidWeights(format!(
                "weight {} for '{}' is not a non-negative number",
                weights[i], tickers[i]
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidWeights(format!("weights sum to {sum}")));
        }
        Ok(Self { tickers, weights })
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn get(&self, ticker: &str) -> Option<f64> {
        self.tickers
            .iter()
            .position(|t| t == ticker)
            .map(|i| self.weights[i])
    }

    /// `ticker,weight` rows under a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("ticker,weight\n");
        for (t, w) in self.tickers.iter().zip(&self.weights) {
            out.push_str(t);
            out.push(',');
            out.push_str(&fmt_num(*w));
            out.push('\n');
        }
        out
    }

    pub fn from_csv_file(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Csv {
            path: path.into(),
            message: e.to_string(),
        })?;
        let mut tickers = Vec::new();
        let mut weights = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::Csv {
                path: path.into(),
                message: e.to_string(),
            })?;
            let cell = record.get(1).unwrap_or("").trim();
            let w: f64 = cell.parse().map_err(|_| Error::Cell {
                path: path.into(),
                row: row + 1,
                column: "weight".into(),
                message: format!("unparsable weight '{cell}'"),
            })?;
            tickers.push(record.get(0).unwrap_or("").trim().to_string());
            weights.push(w);
        }
        Self::new(tickers, weights)
    }
}

/// `w_i = (1/s_i^2) / sum_j (1/s_j^2)`.
pub fn ivp_weights(c: &CovMatrix) -> Result<WeightVector> {
    let inv = inverse_variances(c)?;
    let total: f64 = inv.iter().sum();
    WeightVector::new(c.tickers().to_vec(), inv.iter().map(|v| v / total).collect())
}

fn inverse_variances(c: &CovMatrix) -> Result<Vec<f64>> {
    c.variances()
        .iter()
        .zip(c.tickers())
        .map(|(v, t)| {
            if *v > 0.0 {
                Ok(1.0 / v)
            } else {
                Err(Error::ZeroVariance(t.clone()))
            }
        })
        .collect()
}

/// Variance of the inverse-variance portfolio over `members`.
pub fn cluster_variance(c: &CovMatrix, members: &[usize]) -> Result<f64> {
    if members.is_empty() {
        return Err(Error::EmptyCluster);
    }
    if let Some(&m) = members.iter().find(|&&m| m >= c.dim()) {
        return Err(Error::DimensionMismatch {
            expected: c.dim(),
            actual: m + 1,
        });
    }
    let sub = c.submatrix(members);
    let w = ivp_weights(&sub)?;
    Ok(quadratic_form(w.weights(), sub.values()))
}

/// Hierarchical risk parity: recursive bisection of the quasi-diagonal
/// order, the left half taking `ceil(m/2)` leaves.
pub fn hrp_allocate(c: &CovMatrix, t: &LinkageTree) -> Result<WeightVector> {
    let n = c.dim();
    if t.n_leaves() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: t.n_leaves(),
        });
    }
    inverse_variances(c)?;
    let order = quasi_diagonalize(t);
    let mut weights = vec![1.0; n];
    let mut stack: Vec<&[usize]> = vec![&order];
    while let Some(items) = stack.pop() {
        if items.len() < 2 {
            continue;
        }
        let (left, right) = items.split_at(items.len().div_ceil(2));
        let v_left = cluster_variance(c, left)?;
        let v_right = cluster_variance(c, right)?;
        let total = v_left + v_right;
        let alpha = if total > 0.0 { 1.0 - v_left / total } else { 0.5 };
        for &i in left {
            weights[i] *= alpha;
        }
        for &i in right {
            weights[i] *= 1.0 - alpha;
        }
        stack.push(right);
        stack.push(left);
    }
    WeightVector::new(c.tickers().to_vec(), weights)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskMeasure {
    #[default]
    StdDev,
    Variance,
}

/// Direction of the risk-ratio split between two sibling subtrees.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterWeighting {
    /// `W1 = 1 - R1 / (R1 + R2)`: the less risky subtree gets more weight.
    #[default]
    Inverse,
    /// `W1 = R1 / (R1 + R2)`.
    PaperLiteral,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterCount {
    Fixed(usize),
    Auto(GapConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HercParams {
    pub clusters: ClusterCount,
    pub risk_measure: RiskMeasure,
    pub cluster_weighting: ClusterWeighting,
}

impl Default for HercParams {
    fn default() -> Self {
        Self {
            clusters: ClusterCount::Auto(GapConfig::default()),
            risk_measure: RiskMeasure::StdDev,
            cluster_weighting: ClusterWeighting::Inverse,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HercAllocation {
    pub weights: WeightVector,
    pub k: usize,
    /// Weight of each final cluster, in leaf order.
    pub cluster_weights: Vec<f64>,
    /// Leaf members of each final cluster, in leaf order.
    pub clusters: Vec<Vec<usize>>,
}

fn asset_risks(c: &CovMatrix, measure: RiskMeasure) -> Result<Vec<f64>> {
    c.variances()
        .iter()
        .zip(c.tickers())
        .map(|(v, t)| {
            let r = match measure {
                RiskMeasure::StdDev => v.sqrt(),
                RiskMeasure::Variance => *v,
            };
            if r > 0.0 {
                Ok(r)
            } else {
                Err(Error::ZeroRisk(t.clone()))
            }
        })
        .collect()
}

pub fn herc_allocate(c: &CovMatrix, t: &LinkageTree, p: &HercParams) -> Result<WeightVector> {
    herc_allocation(c, t, p).map(|a| a.weights)
}

/// Hierarchical equal risk contribution.
///
/// The tree is cut into `k` clusters. Walking down from the root through
/// the removed merges, each node splits its weight between its subtrees by
/// their summed member risk. Inside each final cluster the weight is spread
/// by naive risk parity (`1 / risk_i`, normalized).
pub fn herc_allocation(c: &CovMatrix, t: &LinkageTree, p: &HercParams) -> Result<HercAllocation> {
    let n = c.dim();
    if t.n_leaves() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: t.n_leaves(),
        });
    }
    let risk = asset_risks(c, p.risk_measure)?;
    let k = match p.clusters {
        ClusterCount::Fixed(k) => k,
        ClusterCount::Auto(cfg) if n > 1 => {
            let d = corr_to_distance(&c.to_correlation()?);
            gap_statistic(&d, &cfg)?.k
        }
        ClusterCount::Auto(_) => 1,
    };
    let roots = cut_roots(t, k)?;
    let subtree_risk = |node: usize| -> f64 { t.leaves_under(node).iter().map(|&i| risk[i]).sum() };

    let mut weights = vec![0.0; n];
    let mut cluster_weight = vec![0.0; roots.len()];
    let mut stack = vec![(t.root(), 1.0_f64)];
    while let Some((node, w)) = stack.pop() {
        if let Some(slot) = roots.iter().position(|&r| r == node) {
            cluster_weight[slot] = w;
            let members = t.leaves_under(node);
            let inv_total: f64 = members.iter().map(|&i| 1.0 / risk[i]).sum();
            for &i in &members {
                weights[i] = (1.0 / risk[i]) / inv_total * w;
            }
            continue;
        }
        let (l, r) = t
            .children(node)
            .ok_or_else(|| Error::MalformedTree(format!("leaf {node} above the cut")))?;
        let (risk_l, risk_r) = (subtree_risk(l), subtree_risk(r));
        let share = risk_l / (risk_l + risk_r);
        let w_left = match p.cluster_weighting {
            ClusterWeighting::Inverse => 1.0 - share,
            ClusterWeighting::PaperLiteral => share,
        };
        stack.push((r, w * (1.0 - w_left)));
        stack.push((l, w * w_left));
    }
    Ok(HercAllocation {
        weights: WeightVector::new(c.tickers().to_vec(), weights)?,
        k,
        cluster_weights: cluster_weight,
        clusters: roots.iter().map(|&r| t.leaves_under(r)).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierSample {
    pub weights: Vec<f64>,
    pub annual_return: f64,
    pub annual_volatility: f64,
    pub sharpe: Option<f64>,
}

/// Monte-Carlo mean-variance result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MvpResult {
    pub tickers: Vec<String>,
    pub samples: Vec<FrontierSample>,
    pub max_sharpe_index: usize,
    pub min_vol_index: usize,
    /// Indices of samples not beaten on both return and volatility, by
    /// ascending volatility.
    pub frontier: Vec<usize>,
}

impl MvpResult {
    pub fn max_sharpe(&self) -> &FrontierSample {
        &self.samples[self.max_sharpe_index]
    }

    pub fn min_vol(&self) -> &FrontierSample {
        &self.samples[self.min_vol_index]
    }

    pub fn weight_vector(&self, index: usize) -> Result<WeightVector> {
        WeightVector::new(self.tickers.clone(), self.samples[index].weights.clone())
    }

    /// `return,volatility,sharpe` for every sample; an undefined Sharpe is
    /// left empty.
    pub fn samples_csv(&self) -> String {
        let mut out = String::from("return,volatility,sharpe\n");
        for s in &self.samples {
            out.push_str(&fmt_num(s.annual_return));
            out.push(',');
            out.push_str(&fmt_num(s.annual_volatility));
            out.push(',');
            if let Some(sr) = s.sharpe {
                out.push_str(&fmt_num(sr));
            }
            out.push('\n');
        }
        out
    }
}

/// Uniform variates normalized by their sum; candidate `index` reads
/// stream `index` of the seeded generator.
pub fn candidate_weights(n_assets: usize, seed: u64, index: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let raw: Vec<f64> = (0..n_assets).map(|_| rng.gen::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    if total > 0.0 {
        raw.iter().map(|u| u / total).collect()
    } else {
        vec![1.0 / n_assets as f64; n_assets]
    }
}

pub fn mvp_optimize(
    mu: &ExpectedReturns,
    c: &CovMatrix,
    n_samples: usize,
    cfg: &MetricsConfig,
    seed: u64,
) -> Result<MvpResult> {
    if n_samples == 0 {
        return Err(Error::param("n_samples", "must be at least 1"));
    }
    if mu.tickers.as_slice() != c.tickers() {
        return Err(Error::TickerMismatch(format!(
            "{:?} vs {:?}",
            mu.tickers,
            c.tickers()
        )));
    }
    cfg.validate()?;
    let n = c.dim();
    let samples: Vec<FrontierSample> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let weights = candidate_weights(n, seed, i as u64);
            let m = metrics_from_moments(&weights, mu, c, cfg);
            FrontierSample {
                weights,
                annual_return: m.annual_return,
                annual_volatility: m.annual_volatility,
                sharpe: m.sharpe,
            }
        })
        .collect();

    let mut max_sharpe_index = 0;
    let mut min_vol_index = 0;
    for (i, s) in samples.iter().enumerate() {
        let sr = s.sharpe.unwrap_or(f64::NEG_INFINITY);
        if sr > samples[max_sharpe_index].sharpe.unwrap_or(f64::NEG_INFINITY) {
            max_sharpe_index = i;
        }
        if s.annual_volatility < samples[min_vol_index].annual_volatility {
            min_vol_index = i;
        }
    }
    let frontier = pareto_frontier(&samples);
    Ok(MvpResult {
        tickers: c.tickers().to_vec(),
        samples,
        max_sharpe_index,
        min_vol_index,
        frontier,
    })
}

/// Samples for which no other sample has strictly lower volatility and
/// strictly higher return.
fn pareto_frontier(samples: &[FrontierSample]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by(|&a, &b| {
        samples[a]
            .annual_volatility
            .total_cmp(&samples[b].annual_volatility)
            .then(a.cmp(&b))
    });
    let mut frontier = Vec::new();
    let mut best_below = f64::NEG_INFINITY;
    let mut i = 0;
    while i < order.len() {
        let vol = samples[order[i]].annual_volatility;
        let mut j = i;
        while j < order.len() && samples[order[j]].annual_volatility == vol {
            j += 1;
        }
        let group = &order[i..j];
        for &s in group {
            if samples[s].annual_return >= best_below {
                frontier.push(s);
            }
        }
        for &s in group {
            best_below = best_below.max(samples[s].annual_return);
        }
        i = j;
    }
    frontier
}
