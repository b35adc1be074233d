use hierfolio::{
    cumulative_series, evaluate, portfolio_metrics, portfolio_return_series, summarize, Method,
    MetricsConfig, PerfMetrics, ReportLabels, ReturnMatrix, SummaryCell, WeightVector,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn tickers(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("A{i}")).collect()
}

fn simplex(n: usize) -> impl Strategy<Value = WeightVector> {
    prop::collection::vec(0.01f64..1.0, n).prop_map(move |raw| {
        let total: f64 = raw.iter().sum();
        WeightVector::new(tickers(n), raw.iter().map(|x| x / total).collect()).unwrap()
    })
}

fn returns(n: usize) -> impl Strategy<Value = ReturnMatrix> {
    (2usize..80).prop_flat_map(move |t| {
        prop::collection::vec(-0.05f64..0.05, t * n).prop_map(move |v| {
            ReturnMatrix::from_matrix(tickers(n), DMatrix::from_row_slice(t, n, &v)).unwrap()
        })
    })
}

fn metric() -> impl Strategy<Value = PerfMetrics> {
    // Coarse grid so that ties happen.
    (-3i32..6, 1i32..5).prop_map(|(r, v)| PerfMetrics::from_annual(r as f64 / 10.0, v as f64 / 10.0, 0.0))
}

proptest! {
    #[test]
    fn return_series_is_linear_in_weights(
        (r, w1, w2) in (2usize..6).prop_flat_map(|n| (returns(n), simplex(n), simplex(n))),
        alpha in 0.0f64..1.0,
    ) {
        let mix: Vec<f64> = w1.weights().iter().zip(w2.weights()).map(|(a, b)| alpha * a + (1.0 - alpha) * b).collect();
        let total: f64 = mix.iter().sum();
        let wm = WeightVector::new(r.tickers().to_vec(), mix.iter().map(|x| x / total).collect()).unwrap();
        let s1 = portfolio_return_series(&w1, &r).unwrap();
        let s2 = portfolio_return_series(&w2, &r).unwrap();
        let sm = portfolio_return_series(&wm, &r).unwrap();
        for t in 0..r.n_obs() {
            prop_assert!((sm[t] - (alpha * s1[t] + (1.0 - alpha) * s2[t])).abs() <= 1e-12);
        }
    }

    #[test]
    fn evaluate_agrees_with_portfolio_metrics((r, w) in (1usize..6).prop_flat_map(|n| (returns(n), simplex(n)))) {
        let cfg = MetricsConfig::default();
        let labels = ReportLabels { sector: "s".into(), portfolio: "hrp".into(), period: "train".into() };
        let report = evaluate(&w, &r, &cfg, labels).unwrap();
        prop_assert_eq!(report.metrics, portfolio_metrics(&w, &r, &cfg).unwrap());
        let brute = report.daily_returns.iter().fold(1.0, |g, x| g * (1.0 + x)) - 1.0;
        prop_assert!((report.cumulative_series.last().unwrap() - brute).abs() <= 1e-10);
    }

    #[test]
    fn win_counts_sum_to_sector_count(table in prop::collection::vec(prop::collection::vec(metric(), 3), 1..12)) {
        let cells: Vec<SummaryCell> = table
            .iter()
            .enumerate()
            .flat_map(|(s, row)| {
                Method::ALL.iter().zip(row).map(move |(m, metrics)| SummaryCell {
                    sector: format!("S{s}"),
                    method: *m,
                    metrics: *metrics,
                })
            })
            .collect();
        let summary = summarize(&cells, &Method::ALL).unwrap();
        let n = table.len();
        prop_assert_eq!(summary.overall.iter().map(|c| c.annual_return).sum::<usize>(), n);
        prop_assert_eq!(summary.overall.iter().map(|c| c.annual_volatility).sum::<usize>(), n);
        prop_assert_eq!(summary.overall.iter().map(|c| c.sharpe).sum::<usize>(), n);
    }
}

#[test]
fn cumulative_hand_values() {
    let c = cumulative_series(&[0.1, -0.1]);
    assert!((c[0] - 0.1).abs() <= 1e-15);
    assert!((c[1] + 0.01).abs() <= 1e-15);
    assert!(cumulative_series(&[]).is_empty());
}

#[test]
fn ties_go_to_the_earlier_method_and_are_flagged() {
    let same = PerfMetrics::from_annual(0.1, 0.2, 0.0);
    let cells: Vec<SummaryCell> = Method::ALL
        .iter()
        .map(|&method| SummaryCell {
            sector: "x".into(),
            method,
            metrics: same,
        })
        .collect();
    let s = summarize(&cells, &Method::ALL).unwrap();
    let w = s.rows[0].winners;
    assert_eq!(w.sharpe.method, Method::Mvp);
    assert!(w.sharpe.tie && w.annual_return.tie && w.annual_volatility.tie);
    assert!(
        s.to_csv().ends_with("Overall,1,1,1,0,0,0,0,0,0\n"),
        "{}",
        s.to_csv()
    );
}
