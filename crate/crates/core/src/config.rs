//! Run configuration: a flat TOML file plus a `[sectors]` table.
//!
//! ```toml
//! data_dir = "data"            # one <TICKER>.csv per ticker
//! output_dir = "out"
//! train_start = "2019-07-01"
//! train_end = "2022-06-30"
//! test_end = "2023-06-30"
//! methods = ["mvp", "hrp", "herc"]
//! mvp_seed = 42
//! herc_k = "auto"              # or an integer
//!
//! [sectors]
//! auto = ["MARUTI", "TATAMOTORS", "M&M"]
//! ```
//!
//! Relative `data_dir`, `prices_file` and `output_dir` are resolved against
//! the directory holding the configuration file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::allocators::{ClusterCount, ClusterWeighting, HercParams, RiskMeasure};
use crate::backtest::Method;
use crate::error::{Error, Result};
use crate::hierclust::{GapConfig, LinkageRule};
use crate::market_data::{AlignPolicy, LoadOptions};
use crate::riskstats::MetricsConfig;

/// Environment variable naming the default configuration file.
pub const CONFIG_ENV: &str = "HIERFOLIO_CONFIG";

/// Cluster count for HERC: fixed, or chosen by the gap statistic.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum HercK {
    #[default]
    Auto,
    Fixed(usize),
}

impl Serialize for HercK {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            HercK::Auto => s.serialize_str("auto"),
            HercK::Fixed(k) => s.serialize_u64(*k as u64),
        }
    }
}

impl<'de> Deserialize<'de> for HercK {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Int(u64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Int(k) => Ok(HercK::Fixed(k as usize)),
            Repr::Str(s) if s == "auto" => Ok(HercK::Auto),
            Repr::Str(s) => s
                .parse()
                .map(HercK::Fixed)
                .map_err(|_| serde::de::Error::custom(format!("expected \"auto\" or an integer, got '{s}'"))),
        }
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}
fn default_days() -> f64 {
    crate::riskstats::DEFAULT_ANNUALIZATION_DAYS
}
fn default_workers() -> usize {
    4
}
fn default_date_column() -> String {
    "Date".into()
}
fn default_close_column() -> String {
    "Close".into()
}
fn default_start_lag() -> u64 {
    7
}
fn default_samples() -> usize {
    10_000
}
fn default_mvp_seed() -> u64 {
    42
}
fn default_b_refs() -> usize {
    100
}
fn default_gap_seed() -> u64 {
    7
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub sectors: BTreeMap<String, Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_dir: Option<PathBuf>,
    /// Wide CSV holding every ticker; used instead of `data_dir` when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prices_file: Option<PathBuf>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub train_start: NaiveDate,
    pub train_end: NaiveDate,
    pub test_end: NaiveDate,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_days")]
    pub annualization_days: f64,
    #[serde(default)]
    pub risk_free_rate: f64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_date_column")]
    pub date_column: String,
    #[serde(default = "default_close_column")]
    pub close_column: String,
    #[serde(default)]
    pub align: AlignPolicy,
    #[serde(default = "default_start_lag")]
    pub max_start_lag_days: u64,
    #[serde(default = "default_samples")]
    pub mvp_n_samples: usize,
    #[serde(default = "default_mvp_seed")]
    pub mvp_seed: u64,
    #[serde(default)]
    pub linkage: LinkageRule,
    #[serde(default)]
    pub herc_k: HercK,
    #[serde(default)]
    pub herc_risk_measure: RiskMeasure,
    #[serde(default)]
    pub herc_cluster_weighting: ClusterWeighting,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap_k_max: Option<usize>,
    #[serde(default = "default_b_refs")]
    pub gap_b_refs: usize,
    #[serde(default = "default_gap_seed")]
    pub gap_seed: u64,
}

const DATE_KEYS: [&str; 3] = ["train_start", "train_end", "test_end"];

impl RunConfig {
    /// Parse and validate. Unquoted TOML dates are accepted.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config("config", e.message().to_string()))?;
        for key in DATE_KEYS {
            if let Some(toml::Value::Datetime(dt)) = table.get(key) {
                let s = dt.to_string();
                table.insert(key.into(), toml::Value::String(s));
            }
        }
        let cfg: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::config("config", e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read `path`, resolving relative directories against its parent.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = cfg.data_dir.as_mut() {
            rebase(p);
        }
        if let Some(p) = cfg.prices_file.as_mut() {
            rebase(p);
        }
        rebase(&mut cfg.output_dir);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_start >= self.train_end {
            return Err(Error::config("train_end", "must be after train_start"));
        }
        if self.train_end >= self.test_end {
            return Err(Error::config("test_end", "must be after train_end"));
        }
        if self.sectors.is_empty() {
            return Err(Error::config("sectors", "at least one sector required"));
        }
        for (name, tickers) in &self.sectors {
            let field = format!("sectors.{name}");
            if tickers.len() < 2 {
                return Err(Error::config(&field, "needs at least 2 tickers"));
            }
            let mut seen = std::collections::HashSet::new();
            if let Some(t) = tickers.iter().find(|t| !seen.insert(t.as_str())) {
                return Err(Error::config(&field, format!("duplicate ticker '{t}'")));
            }
        }
        if self.methods.is_empty() {
            return Err(Error::config("methods", "at least one method required"));
        }
        if self.data_dir.is_none() && self.prices_file.is_none() {
            return Err(Error::config("data_dir", "set data_dir or prices_file"));
        }
        if !(self.annualization_days.is_finite() && self.annualization_days > 0.0) {
            return Err(Error::config("annualization_days", "must be positive"));
        }
        if !self.risk_free_rate.is_finite() {
            return Err(Error::config("risk_free_rate", "must be finite"));
        }
        if self.workers == 0 {
            return Err(Error::config("workers", "must be at least 1"));
        }
        if self.mvp_n_samples == 0 {
            return Err(Error::config("mvp_n_samples", "must be at least 1"));
        }
        if self.herc_k == HercK::Fixed(0) {
            return Err(Error::config("herc_k", "must be at least 1"));
        }
        if self.gap_k_max == Some(0) {
            return Err(Error::config("gap_k_max", "must be at least 1"));
        }
        if self.gap_b_refs == 0 {
            return Err(Error::config("gap_b_refs", "must be at least 1"));
        }
        Ok(())
    }

    /// Override every per-method seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.mvp_seed = seed;
        self.gap_seed = seed;
        self
    }

    pub fn metrics(&self) -> MetricsConfig {
        MetricsConfig {
            annualization_days: self.annualization_days,
            risk_free_rate: self.risk_free_rate,
        }
    }

    pub fn load_options(&self) -> LoadOptions {
        LoadOptions {
            date_column: self.date_column.clone(),
            close_column: self.close_column.clone(),
            align: self.align,
            required_start: Some(self.train_start),
            max_start_lag_days: self.max_start_lag_days,
        }
    }

    pub fn gap_config(&self) -> GapConfig {
        GapConfig {
            k_max: self.gap_k_max,
            b_refs: self.gap_b_refs,
            seed: self.gap_seed,
            linkage: self.linkage,
        }
    }

    pub fn herc_params(&self) -> HercParams {
        HercParams {
            clusters: match self.herc_k {
                HercK::Auto => ClusterCount::Auto(self.gap_config()),
                HercK::Fixed(k) => ClusterCount::Fixed(k),
            },
            risk_measure: self.herc_risk_measure,
            cluster_weighting: self.herc_cluster_weighting,
        }
    }

    pub fn enabled(&self, m: Method) -> bool {
        self.methods.contains(&m)
    }
}
