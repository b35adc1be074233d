use hierfolio::{
    agglomerate, corr_to_distance, herc_allocate, herc_allocation, hrp_allocate, mvp_optimize, ClusterCount,
    ClusterWeighting, CovMatrix, ExpectedReturns, HercParams, LinkageRule, LinkageTree, MetricsConfig,
    RiskMeasure,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn tickers(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("A{i}")).collect()
}

/// Full-rank covariance `A Aᵀ + diag` scaled to daily magnitudes.
fn cov(n: usize) -> impl Strategy<Value = CovMatrix> {
    (
        prop::collection::vec(-1.0f64..1.0, n * n),
        prop::collection::vec(0.1f64..1.0, n),
    )
        .prop_map(move |(a, d)| {
            let a = DMatrix::from_row_slice(n, n, &a);
            let m = (&a * a.transpose() + DMatrix::from_diagonal(&d.into())) * 1e-4;
            CovMatrix::new(tickers(n), m).unwrap()
        })
}

fn tree_for(c: &CovMatrix) -> LinkageTree {
    agglomerate(&corr_to_distance(&c.to_correlation().unwrap()), LinkageRule::Ward).unwrap()
}

fn fixed(k: usize, weighting: ClusterWeighting) -> HercParams {
    HercParams {
        clusters: ClusterCount::Fixed(k),
        risk_measure: RiskMeasure::StdDev,
        cluster_weighting: weighting,
    }
}

proptest! {
    #[test]
    fn hrp_ignores_covariance_scale(c in (2usize..10).prop_flat_map(cov), k in 1e-3f64..1e3) {
        let t = tree_for(&c);
        let a = hrp_allocate(&c, &t).unwrap();
        let b = hrp_allocate(&c.scaled(k), &t).unwrap();
        for (x, y) in a.weights().iter().zip(b.weights()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn herc_single_cluster_is_naive_risk_parity(c in (2usize..10).prop_flat_map(cov)) {
        let w = herc_allocate(&c, &tree_for(&c), &fixed(1, ClusterWeighting::Inverse)).unwrap();
        let inv: Vec<f64> = c.variances().iter().map(|v| 1.0 / v.sqrt()).collect();
        let total: f64 = inv.iter().sum();
        for (x, r) in w.weights().iter().zip(&inv) {
            prop_assert!((x - r / total).abs() <= 1e-12);
        }
    }

    #[test]
    fn herc_split_direction(c in (3usize..10).prop_flat_map(cov)) {
        let t = tree_for(&c);
        let risk: Vec<f64> = c.variances().iter().map(|v| v.sqrt()).collect();
        for (weighting, lower_risk_gets_more) in [(ClusterWeighting::Inverse, true), (ClusterWeighting::PaperLiteral, false)] {
            let a = herc_allocation(&c, &t, &fixed(2, weighting)).unwrap();
            let r: Vec<f64> = a.clusters.iter().map(|m| m.iter().map(|&i| risk[i]).sum()).collect();
            prop_assume!((r[0] - r[1]).abs() > 1e-12);
            let first_less_risky = r[0] < r[1];
            let first_heavier = a.cluster_weights[0] > a.cluster_weights[1];
            prop_assert_eq!(first_heavier, first_less_risky == lower_risk_gets_more);
        }
    }

    #[test]
    fn mvp_is_deterministic(c in (2usize..6).prop_flat_map(cov), seed in any::<u64>()) {
        let n = c.dim();
        let mu = ExpectedReturns::from_daily(tickers(n), (0..n).map(|i| 1e-4 * i as f64).collect(), 252.0);
        let cfg = MetricsConfig::default();
        let a = mvp_optimize(&mu, &c, 300, &cfg, seed).unwrap();
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| mvp_optimize(&mu, &c, 300, &cfg, seed).unwrap());
        prop_assert_eq!(a, b);
    }
}

#[test]
fn hrp_hand_fixtures() {
    let two = CovMatrix::diagonal(&[1.0, 4.0]).unwrap();
    let w = hrp_allocate(&two, &LinkageTree::from_pairs(2, &[(0, 1)]).unwrap()).unwrap();
    assert!((w.weights()[0] - 0.8).abs() <= 1e-15 && (w.weights()[1] - 0.2).abs() <= 1e-15);

    let four = CovMatrix::diagonal(&[1.0, 1.0, 4.0, 4.0]).unwrap();
    let t = LinkageTree::from_pairs(4, &[(0, 1), (2, 3), (4, 5)]).unwrap();
    let w = hrp_allocate(&four, &t).unwrap();
    for (x, y) in w.weights().iter().zip([0.4, 0.4, 0.1, 0.1]) {
        assert!((x - y).abs() <= 1e-15);
    }
}

#[test]
fn mvp_single_asset_is_the_asset() {
    let c = CovMatrix::diagonal(&[4e-4]).unwrap();
    let mu = ExpectedReturns::from_daily(tickers(1), vec![4e-4], 252.0);
    let res = mvp_optimize(&mu, &c, 50, &MetricsConfig::default(), 1).unwrap();
    let best = res.max_sharpe();
    assert_eq!(best.weights, [1.0]);
    let expected = (4e-4 * 252.0) / (4e-4f64 * 252.0).sqrt();
    assert!((best.sharpe.unwrap() - expected).abs() <= 1e-12);
}

#[test]
fn herc_rejects_bad_cluster_count() {
    let c = CovMatrix::diagonal(&[1.0, 2.0]).unwrap();
    let t = LinkageTree::from_pairs(2, &[(0, 1)]).unwrap();
    assert!(herc_allocate(&c, &t, &fixed(3, ClusterWeighting::Inverse)).is_err());
    let zero = CovMatrix::diagonal(&[0.0, 2.0]).unwrap();
    assert!(herc_allocate(&zero, &t, &fixed(1, ClusterWeighting::Inverse)).is_err());
}
