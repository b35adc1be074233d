use hierfolio::hierclust::{dendrogram_export, gap_statistic};
use hierfolio::{
    agglomerate, cut_k, gap_optimal_k, quasi_diagonalize, DistanceMatrix, GapConfig, LinkageRule,
    LinkageTree, ReturnMatrix,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn tickers(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("A{i}")).collect()
}

/// Euclidean distances between random points.
fn distances() -> impl Strategy<Value = DistanceMatrix> {
    (2usize..16, 1usize..4).prop_flat_map(|(n, dim)| {
        prop::collection::vec(-1.0f64..1.0, n * dim).prop_map(move |v| {
            let p = DMatrix::from_row_slice(n, dim, &v);
            let d = DMatrix::from_fn(n, n, |i, j| (p.row(i) - p.row(j)).norm());
            DistanceMatrix::new(tickers(n), d).unwrap()
        })
    })
}

fn rule() -> impl Strategy<Value = LinkageRule> {
    prop_oneof![Just(LinkageRule::Ward), Just(LinkageRule::Single)]
}

proptest! {
    #[test]
    fn leaf_order_is_a_permutation(d in distances(), rule in rule()) {
        let t = agglomerate(&d, rule).unwrap();
        let mut order = quasi_diagonalize(&t);
        order.sort_unstable();
        prop_assert_eq!(order, (0..d.len()).collect::<Vec<_>>());
    }

    #[test]
    fn heights_are_monotone(d in distances(), rule in rule()) {
        let t = agglomerate(&d, rule).unwrap();
        for pair in t.merges().windows(2) {
            prop_assert!(pair[1].height >= pair[0].height - 1e-12);
        }
    }

    #[test]
    fn refining_a_cut_splits_one_cluster(d in distances()) {
        let t = agglomerate(&d, LinkageRule::Ward).unwrap();
        let n = d.len();
        let mut prev = cut_k(&t, 1).unwrap();
        prop_assert!(prev.labels.iter().all(|&l| l == 0));
        for k in 2..=n {
            let next = cut_k(&t, k).unwrap();
            let groups = |a: &hierfolio::ClusterAssignment| -> Vec<Vec<usize>> {
                (0..a.k).map(|c| a.members(c)).collect()
            };
            let (old, new) = (groups(&prev), groups(&next));
            prop_assert!(new.iter().all(|g| !g.is_empty()));
            prop_assert_eq!(new.iter().map(Vec::len).sum::<usize>(), n);
            let kept = new.iter().filter(|g| old.contains(g)).count();
            prop_assert_eq!(kept, k - 2);
            let split: Vec<&Vec<usize>> = old.iter().filter(|g| !new.contains(g)).collect();
            prop_assert_eq!(split.len(), 1);
            let mut halves: Vec<usize> = new.iter().filter(|g| !old.contains(g)).flatten().copied().collect();
            halves.sort_unstable();
            let mut whole = split[0].clone();
            whole.sort_unstable();
            prop_assert_eq!(halves, whole);
            prev = next;
        }
    }

    #[test]
    fn dendrogram_round_trips(d in distances()) {
        let t = agglomerate(&d, LinkageRule::Ward).unwrap();
        let dg = dendrogram_export(&t, d.tickers()).unwrap();
        let back: hierfolio::Dendrogram = serde_json::from_str(&dg.to_json()).unwrap();
        prop_assert_eq!(back.to_tree().unwrap(), t);
    }
}

#[test]
fn gap_is_bit_reproducible() {
    let t = 300;
    let n = 6;
    let m = DMatrix::from_fn(t, n, |i, j| {
        (((i * 7 + j * 13) % 17) as f64 - 8.0) * 1e-3 + ((i + j / 3) % 5) as f64 * 1e-3
    });
    let r = ReturnMatrix::from_matrix(tickers(n), m).unwrap();
    let a = gap_optimal_k(&r, 5, 30, 11).unwrap();
    let b = gap_optimal_k(&r, 5, 30, 11).unwrap();
    assert_eq!(a, b);

    let d = hierfolio::corr_to_distance(&hierfolio::correlation(&r).unwrap());
    let cfg = GapConfig {
        k_max: Some(5),
        b_refs: 30,
        seed: 11,
        linkage: LinkageRule::Ward,
    };
    let x = gap_statistic(&d, &cfg).unwrap();
    let y = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| gap_statistic(&d, &cfg).unwrap());
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&x.gap), bits(&y.gap));
    assert_eq!(bits(&x.s), bits(&y.s));
    assert_eq!(x.k, a);
}

#[test]
fn cut_k_hand_fixture() {
    let t = LinkageTree::from_pairs(4, &[(0, 1), (2, 3), (4, 5)]).unwrap();
    let cut = cut_k(&t, 2).unwrap();
    assert_eq!(cut.members(0), [0, 1]);
    assert_eq!(cut.members(1), [2, 3]);
    assert!(cut_k(&t, 5).is_err());
}
