//! Long-only portfolio construction with three allocators (Monte-Carlo
//! mean-variance, hierarchical risk parity, hierarchical equal risk
//! contribution) and fixed-weight backtesting on held-out prices.

pub mod allocators;
pub mod backtest;
pub mod config;
pub mod error;
pub mod hierclust;
pub mod market_data;
pub mod pipeline;
pub mod riskstats;

pub use allocators::{
    cluster_variance, herc_allocate, herc_allocation, hrp_allocate, ivp_weights, mvp_optimize, ClusterCount,
    ClusterWeighting, FrontierSample, HercAllocation, HercParams, MvpResult, RiskMeasure, WeightVector,
};
pub use backtest::{
    cumulative_series, evaluate, portfolio_return_series, summarize, BacktestReport, Method, ReportLabels,
    SummaryCell, SummaryTable,
};
pub use config::{HercK, RunConfig, CONFIG_ENV};
pub use error::{Error, ErrorKind, Result};
pub use hierclust::{
    agglomerate, cut_k, dendrogram_export, gap_optimal_k, gap_statistic, quasi_diagonalize,
    ClusterAssignment, Dendrogram, GapConfig, LinkageRule, LinkageTree, Merge,
};
pub use market_data::{
    daily_returns, load_price_table, load_wide_csv, split_train_test, AlignPolicy, CsvSource, LoadOptions,
    PriceTable, ReturnMatrix,
};
pub use pipeline::{run_pipeline, RunManifest};
pub use riskstats::{
    corr_to_distance, correlation, covariance, expected_returns, portfolio_metrics, portfolio_variance,
    CorrMatrix, CovMatrix, DistanceMatrix, ExpectedReturns, MetricsConfig, PerfMetrics,
};

/// Shortest decimal text that parses back to the same `f64`.
pub fn fmt_num(x: f64) -> String {
    format!("{x}")
}
