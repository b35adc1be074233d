//! Agglomerative clustering, quasi-diagonal leaf ordering, flat cuts, the
//! gap statistic and dendrogram export.
//!
//! Node ids follow the usual linkage-matrix convention: leaves are
//! `0..n`, merge `k` creates node `n + k`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::ReturnMatrix;
use crate::riskstats::{corr_to_distance, correlation, DistanceMatrix};

const HEIGHT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkageRule {
    #[default]
    Ward,
    Single,
}

impl std::str::FromStr for LinkageRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ward" => Ok(LinkageRule::Ward),
            "single" => Ok(LinkageRule::Single),
            other => Err(Error::param("linkage", format!("unknown rule '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

/// Full merge history of an agglomerative clustering.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkageTree {
    n_leaves: usize,
    merges: Vec<Merge>,
}

impl LinkageTree {
    pub fn new(n_leaves: usize, merges: Vec<Merge>) -> Result<Self> {
        if n_leaves == 0 {
            return Err(Error::MalformedTree("no leaves".into()));
        }
        if merges.len() != n_leaves - 1 {
            return Err(Error::MalformedTree(format!(
                "{} merges for {} leaves",
                merges.len(),
                n_leaves
            )));
        }
        let total = 2 * n_leaves - 1;
        let mut sizes = vec![0usize; total];
        sizes[..n_leaves].fill(1);
        let mut used = vec![false; total];
        let mut prev_height = 0.0_f64;
        for (k, m) in merges.iter().enumerate() {
            let id = n_leaves + k;
            for child in [m.left, m.right] {
                if child >= id {
                    return Err(Error::MalformedTree(format!(
                        "merge {k} references node {child} before it exists"
                    )));
                }
                if used[child] {
                    return Err(Error::MalformedTree(format!("node {child} merged twice")));
                }
                used[child] = true;
            }
            if m.left == m.right {
                return Err(Error::MalformedTree(format!(
                    "merge {k} joins a node with itself"
                )));
            }
            let size = sizes[m.left] + sizes[m.right];
            if m.size != size {
                return Err(Error::MalformedTree(format!(
                    "merge {k} has size {}, children sum to {size}",
                    m.size
                )));
            }
            sizes[id] = size;
            if !(m.height.is_finite() && m.height >= 0.0) {
                return Err(Error::MalformedTree(format!("merge {k} has height {}", m.height)));
            }
            if m.height < prev_height - HEIGHT_TOL * prev_height.max(1.0) {
                return Err(Error::MalformedTree(format!(
                    "merge {k} height {} below previous {prev_height}",
                    m.height
                )));
            }
            prev_height = m.height;
        }
        Ok(Self { n_leaves, merges })
    }

    /// Tree from child pairs alone; heights are the merge index plus one.
    pub fn from_pairs(n_leaves: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut sizes = vec![1usize; n_leaves];
        let mut merges = Vec::with_capacity(pairs.len());
        for (k, &(left, right)) in pairs.iter().enumerate() {
            let size_of = |id: usize| {
                sizes
                    .get(id)
                    .copied()
                    .ok_or_else(|| Error::MalformedTree(format!("unknown node {id}")))
            };
            let size = size_of(left)? + size_of(right)?;
            sizes.push(size);
            merges.push(Merge {
                left,
                right,
                height: (k + 1) as f64,
                size,
            });
        }
        Self::new(n_leaves, merges)
    }

    pub fn n_leaves(&self) -> usize {
        self.n_leaves
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    pub fn root(&self) -> usize {
        2 * self.n_leaves - 2
    }

    pub fn is_leaf(&self, node: usize) -> bool {
        node < self.n_leaves
    }

    pub fn children(&self, node: usize) -> Option<(usize, usize)> {
        node.checked_sub(self.n_leaves)
            .and_then(|k| self.merges.get(k))
            .map(|m| (m.left, m.right))
    }

    pub fn height(&self, node: usize) -> f64 {
        node.checked_sub(self.n_leaves)
            .and_then(|k| self.merges.get(k))
            .map_or(0.0, |m| m.height)
    }

    pub fn size(&self, node: usize) -> usize {
        node.checked_sub(self.n_leaves)
            .and_then(|k| self.merges.get(k))
            .map_or(1, |m| m.size)
    }

    /// Leaves under `node`, left subtree first.
    pub fn leaves_under(&self, node: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.size(node));
        let mut stack = vec![node];
        while let Some(id) = stack.pop() {
            match self.children(id) {
                Some((l, r)) => {
                    stack.push(r);
                    stack.push(l);
                }
                None => out.push(id),
            }
        }
        out
    }
}

/// Agglomerative clustering with Lance-Williams updates.
///
/// The closest pair of active clusters is merged at each step; equal
/// distances go to the lexicographically smallest `(older id, newer id)`
/// pair, and the older node id becomes the left child.
pub fn agglomerate(d: &DistanceMatrix, rule: LinkageRule) -> Result<LinkageTree> {
    let n = d.len();
    if n < 2 {
        return Err(Error::TooFewLeaves {
            required: 2,
            actual: n,
        });
    }
    let mut dist: DMatrix<f64> = d.values().clone();
    let mut node: Vec<usize> = (0..n).collect();
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let mut merges = Vec::with_capacity(n - 1);

    for k in 0..n - 1 {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for a in 0..n {
            if !active[a] {
                continue;
            }
            for b in (a + 1)..n {
                if !active[b] {
                    continue;
                }
                let (lo, hi) = (node[a].min(node[b]), node[a].max(node[b]));
                let cand = (dist[(a, b)], lo, hi, a, b);
                let better = match best {
                    None => true,
                    Some(cur) => (cand.0, cand.1, cand.2) < (cur.0, cur.1, cur.2),
                };
                if better {
                    best = Some(cand);
                }
            }
        }
        let (height, left, right, a, b) = best.expect("at least two active clusters");
        let (na, nb) = (size[a] as f64, size[b] as f64);
        for x in 0..n {
            if !active[x] || x == a || x == b {
                continue;
            }
            let updated = match rule {
                LinkageRule::Single => dist[(a, x)].min(dist[(b, x)]),
                LinkageRule::Ward => {
                    let nx = size[x] as f64;
                    let sq = ((na + nx) * dist[(a, x)].powi(2) + (nb + nx) * dist[(b, x)].powi(2)
                        - nx * height.powi(2))
                        / (na + nb + nx);
                    sq.max(0.0).sqrt()
                }
            };
            dist[(a, x)] = updated;
            dist[(x, a)] = updated;
        }
        active[b] = false;
        size[a] += size[b];
        node[a] = n + k;
        merges.push(Merge {
            left,
            right,
            height,
            size: size[a],
        });
    }
    LinkageTree::new(n, merges)
}

/// Dendrogram leaf order: every cluster is replaced by its two children,
/// left first, until only leaves remain.
pub fn quasi_diagonalize(t: &LinkageTree) -> Vec<usize> {
    t.leaves_under(t.root())
}

/// Flat clustering obtained by undoing the top `k - 1` merges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub k: usize,
    /// Cluster label per leaf, numbered in quasi-diagonal leaf order.
    pub labels: Vec<usize>,
    /// Subtree root node of each cluster, indexed by label.
    pub roots: Vec<usize>,
}

impl ClusterAssignment {
    pub fn members(&self, label: usize) -> Vec<usize> {
        (0..self.labels.len())
            .filter(|&i| self.labels[i] == label)
            .collect()
    }
}

/// Roots of the subtrees left after removing the top `k - 1` merges.
pub(crate) fn cut_roots(t: &LinkageTree, k: usize) -> Result<Vec<usize>> {
    let n = t.n_leaves();
    if k == 0 || k > n {
        return Err(Error::ClusterCountOutOfRange { k, max: n });
    }
    // Merges with index >= n - k are removed; their nodes have id >= 2n - k.
    let first_removed = 2 * n - k;
    let mut roots = Vec::with_capacity(k);
    let mut stack = vec![t.root()];
    while let Some(id) = stack.pop() {
        match t.children(id) {
            Some((l, r)) if id >= first_removed => {
                stack.push(r);
                stack.push(l);
            }
            _ => roots.push(id),
        }
    }
    Ok(roots)
}

pub fn cut_k(t: &LinkageTree, k: usize) -> Result<ClusterAssignment> {
    let roots = cut_roots(t, k)?;
    // cut_roots walks left-first, so roots are already in leaf order.
    let mut labels = vec![0usize; t.n_leaves()];
    for (label, &root) in roots.iter().enumerate() {
        for leaf in t.leaves_under(root) {
            labels[leaf] = label;
        }
    }
    Ok(ClusterAssignment { k, labels, roots })
}

/// Gap-statistic settings. `k_max = None` means `min(10, n - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapConfig {
    pub k_max: Option<usize>,
    pub b_refs: usize,
    pub seed: u64,
    pub linkage: LinkageRule,
}

impl Default for GapConfig {
    fn default() -> Self {
        Self {
            k_max: None,
            b_refs: 100,
            seed: 0,
            linkage: LinkageRule::Ward,
        }
    }
}

pub fn default_k_max(n: usize) -> usize {
    10.min(n.saturating_sub(1)).max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapResult {
    pub k: usize,
    /// `log W_k` of the observed data, k = 1..=k_max.
    pub log_w: Vec<f64>,
    pub gap: Vec<f64>,
    /// Simulation error `s_k = sd_k * sqrt(1 + 1/B)`.
    pub s: Vec<f64>,
}

fn euclidean_distances(x: &DMatrix<f64>) -> DistanceMatrix {
    let n = x.nrows();
    let values = DMatrix::from_fn(
        n,
        n,
        |i, j| {
            if i == j {
                0.0
            } else {
                (x.row(i) - x.row(j)).norm()
            }
        },
    );
    let tickers = (0..n).map(|i| i.to_string()).collect();
    DistanceMatrix::new(tickers, values).expect("euclidean distances are valid")
}

/// Pooled within-cluster sum of squares about the cluster centroids.
fn within_dispersion(x: &DMatrix<f64>, labels: &[usize], k: usize) -> f64 {
    let p = x.ncols();
    let mut total = 0.0;
    for c in 0..k {
        let rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        let m = rows.len() as f64;
        for j in 0..p {
            let mean = rows.iter().map(|&i| x[(i, j)]).sum::<f64>() / m;
            total += rows.iter().map(|&i| (x[(i, j)] - mean).powi(2)).sum::<f64>();
        }
    }
    total
}

fn log_dispersions(x: &DMatrix<f64>, k_max: usize, rule: LinkageRule) -> Result<Vec<f64>> {
    let tree = agglomerate(&euclidean_distances(x), rule)?;
    (1..=k_max)
        .map(|k| {
            let cut = cut_k(&tree, k)?;
            let w = within_dispersion(x, &cut.labels, k);
            Ok(w.max(f64::MIN_POSITIVE).ln())
        })
        .collect()
}

/// Gap statistic over the distance embedding: each asset is the point given
/// by its row of `d`, clustered by agglomeration on Euclidean distances and
/// compared with `b_refs` uniform reference sets drawn over each column's
/// observed range. Reference set `b` uses stream `b` of the seeded generator.
pub fn gap_statistic(d: &DistanceMatrix, cfg: &GapConfig) -> Result<GapResult> {
    let n = d.len();
    let k_max = cfg.k_max.unwrap_or_else(|| default_k_max(n));
    if k_max == 0 {
        return Err(Error::param("k_max", "must be at least 1"));
    }
    if k_max > n {
        return Err(Error::ClusterCountOutOfRange { k: k_max, max: n });
    }
    if cfg.b_refs == 0 {
        return Err(Error::param("b_refs", "must be at least 1"));
    }
    if n == 1 {
        return Ok(GapResult {
            k: 1,
            log_w: vec![0.0],
            gap: vec![0.0],
            s: vec![0.0],
        });
    }
    let x = d.values().clone();
    let log_w = log_dispersions(&x, k_max, cfg.linkage)?;

    let ranges: Vec<(f64, f64)> = x.column_iter().map(|c| (c.min(), c.max())).collect();
    let refs: Vec<Vec<f64>> = (0..cfg.b_refs)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(b as u64);
            let sample = DMatrix::from_fn(n, n, |_, j| {
                let (lo, hi) = ranges[j];
                lo + (hi - lo) * rng.gen::<f64>()
            });
            log_dispersions(&sample, k_max, cfg.linkage)
        })
        .collect::<Result<_>>()?;

    let b = cfg.b_refs as f64;
    let mut gap = Vec::with_capacity(k_max);
    let mut s = Vec::with_capacity(k_max);
    for k in 0..k_max {
        let mean = refs.iter().map(|r| r[k]).sum::<f64>() / b;
        let var = refs.iter().map(|r| (r[k] - mean).powi(2)).sum::<f64>() / b;
        gap.push(mean - log_w[k]);
        s.push(var.sqrt() * (1.0 + 1.0 / b).sqrt());
    }
    let k = (0..k_max - 1)
        .find(|&i| gap[i] >= gap[i + 1] - s[i + 1])
        .map_or(k_max, |i| i + 1);
    Ok(GapResult { k, log_w, gap, s })
}

/// Cluster count chosen by the gap statistic on the correlation-distance
/// embedding of `r`, with ward agglomeration.
pub fn gap_optimal_k(r: &ReturnMatrix, k_max: usize, b_refs: usize, seed: u64) -> Result<usize> {
    let d = corr_to_distance(&correlation(r)?);
    let cfg = GapConfig {
        k_max: Some(k_max),
        b_refs,
        seed,
        linkage: LinkageRule::Ward,
    };
    Ok(gap_statistic(&d, &cfg)?.k)
}

pub const DENDROGRAM_FORMAT: &str = "hierfolio-dendrogram";
pub const DENDROGRAM_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DendrogramNode {
    pub id: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ticker: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub children: Option<[usize; 2]>,
    pub height: f64,
    pub size: usize,
}

/// Serializable dendrogram: leaves first (`id < n_leaves`, with `ticker`),
/// then one node per merge with `children = [left, right]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub format: String,
    pub version: u32,
    pub n_leaves: usize,
    pub root: usize,
    pub leaf_order: Vec<usize>,
    pub nodes: Vec<DendrogramNode>,
}

impl Dendrogram {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("dendrogram serializes")
    }

    /// Rebuild the linkage tree.
    pub fn to_tree(&self) -> Result<LinkageTree> {
        if self.format != DENDROGRAM_FORMAT || self.version != DENDROGRAM_VERSION {
            return Err(Error::MalformedTree(format!(
                "unsupported dendrogram {} v{}",
                self.format, self.version
            )));
        }
        let merges = self.nodes[self.n_leaves.min(self.nodes.len())..]
            .iter()
            .map(|node| {
                let [left, right] = node
                    .children
                    .ok_or_else(|| Error::MalformedTree(format!("node {} has no children", node.id)))?;
                Ok(Merge {
                    left,
                    right,
                    height: node.height,
                    size: node.size,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        LinkageTree::new(self.n_leaves, merges)
    }
}

pub fn dendrogram_export(t: &LinkageTree, labels: &[String]) -> Result<Dendrogram> {
    if labels.len() != t.n_leaves() {
        return Err(Error::DimensionMismatch {
            expected: t.n_leaves(),
            actual: labels.len(),
        });
    }
    let mut nodes: Vec<DendrogramNode> = labels
        .iter()
        .enumerate()
        .map(|(id, ticker)| DendrogramNode {
            id,
            ticker: Some(ticker.clone()),
            children: None,
            height: 0.0,
            size: 1,
        })
        .collect();
    nodes.extend(t.merges().iter().enumerate().map(|(k, m)| DendrogramNode {
        id: t.n_leaves() + k,
        ticker: None,
        children: Some([m.left, m.right]),
        height: m.height,
        size: m.size,
    }));
    Ok(Dendrogram {
        format: DENDROGRAM_FORMAT.into(),
        version: DENDROGRAM_VERSION,
        n_leaves: t.n_leaves(),
        root: t.root(),
        leaf_order: quasi_diagonalize(t),
        nodes,
    })
}
