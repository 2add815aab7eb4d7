mod common;

use common::*;
use ndarray::Array2;
use netfense::eval::kappa_coefficient;
use netfense::gcn::{classification_margin, max_a2_deviation, NormalizedAdjacency};
use netfense::graph::{save_graph, AttributedGraph, EdgeFlip, GraphFiles, LabelSet};
use netfense::ppr::{candidate_set, DenominatorForm, PprModel};
use proptest::prelude::*;

fn graph_strategy(max_n: usize) -> impl Strategy<Value = AttributedGraph> {
    (3..=max_n, 0.05f64..0.6, any::<u64>()).prop_map(|(n, p, seed)| random_graph(n, p, 3, seed))
}

fn brute_force_clustering(g: &AttributedGraph) -> f64 {
    let n = g.n_nodes();
    let mut total = 0.0;
    for v in 0..n {
        let nb = g.neighbors(v);
        let d = nb.len();
        if d < 2 {
            continue;
        }
        let mut closed = 0;
        for a in 0..d {
            for b in (a + 1)..d {
                closed += g.has_edge(nb[a], nb[b]) as usize;
            }
        }
        total += closed as f64 / (d * (d - 1) / 2) as f64;
    }
    total / n as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn flip_then_inverse_restores_graph(g in graph_strategy(20), a in any::<usize>(), b in any::<usize>()) {
        let n = g.n_nodes();
        let (u, v) = (a % n, b % n);
        prop_assume!(u != v);
        let flip = EdgeFlip::toggle(&g, u, v);
        let once = g.apply_flip(&flip).unwrap();
        prop_assert_eq!(once.edge_difference(&g), 1);
        prop_assert_eq!(once.has_edge(u, v), once.has_edge(v, u));
        let back = once.apply_flip(&flip.inverse()).unwrap();
        prop_assert_eq!(back.edge_difference(&g), 0);
        prop_assert_eq!(back.degrees(), g.degrees());
    }

    #[test]
    fn clustering_matches_triangle_enumeration(g in graph_strategy(25)) {
        let c = g.avg_clustering_coefficient();
        prop_assert!((0.0..=1.0).contains(&c));
        prop_assert!((c - brute_force_clustering(&g)).abs() < 1e-12);
    }

    #[test]
    fn save_then_load_round_trips(g in graph_strategy(15), seed in any::<u64>()) {
        let n = g.n_nodes();
        let target: Vec<Option<usize>> = (0..n).map(|i| ((seed >> (i % 60)) & 1 == 0).then_some(i % 3)).collect();
        let private: Vec<Option<u8>> = (0..n).map(|i| Some(((seed >> ((i + 1) % 60)) & 1) as u8)).collect();
        let labels = LabelSet::new(target, private).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = GraphFiles::in_dir(dir.path());
        save_graph(&g, &labels, &files).unwrap();
        let (g2, l2) = files.load().unwrap();
        prop_assert_eq!(g2.edge_difference(&g), 0);
        prop_assert_eq!(g2.n_nodes(), n);
        prop_assert_eq!(g2.features(), g.features());
        prop_assert_eq!(l2, labels);
    }

    #[test]
    fn incremental_square_is_exact(g in graph_strategy(30), a in any::<usize>(), b in any::<usize>()) {
        let n = g.n_nodes();
        let (u, v) = (a % n, b % n);
        prop_assume!(u != v);
        let norm = NormalizedAdjacency::build(&g).apply_flip(&EdgeFlip::toggle(&g, u, v)).unwrap();
        prop_assert!(max_a2_deviation(&norm).unwrap() < 1e-10);
        let d = norm.a_hat_sq.to_dense();
        prop_assert_eq!(&d, &d.t().to_owned());
    }

    #[test]
    fn candidate_sets_grow_with_tau(g in graph_strategy(18), t1 in 0.0f64..0.2, t2 in 0.0f64..0.2) {
        let m = PprModel::build(&g, 0.1).unwrap();
        let (lo, hi) = (t1.min(t2), t1.max(t2));
        let small = candidate_set(&m, g.n_nodes(), None, lo, DenominatorForm::Revised);
        let large = candidate_set(&m, g.n_nodes(), None, hi, DenominatorForm::Revised);
        prop_assert!(small.iter().all(|s| large.iter().any(|l| (l.u, l.v) == (s.u, s.v))));
        prop_assert!(large.iter().all(|s| s.delta >= 0.0 && s.delta < hi));
    }

    #[test]
    fn rank_one_entries_match_dense_inverse(g in graph_strategy(12), a in any::<usize>(), b in any::<usize>()) {
        let n = g.n_nodes();
        let (u, v) = (a % n, b % n);
        prop_assume!(u != v && g.degree(u) >= 2 && g.degree(v) >= 2);
        let alpha = 0.1;
        let m = PprModel::build(&g, alpha).unwrap();
        let flip = EdgeFlip::toggle(&g, u, v);
        let delta = m.delta_matrix(u, v, flip.action).unwrap();
        let oracle = (dense_fundamental_with(&g, alpha, Some((u, v, flip.action.sign())))
            - dense_fundamental(&g, alpha)) * alpha;
        prop_assert!((delta - oracle).amax() < 1e-9);
    }

    #[test]
    fn margin_sign_encodes_correctness(raw in proptest::collection::vec(0.01f64..1.0, 2..6), y in any::<usize>()) {
        let s: f64 = raw.iter().sum();
        let k = raw.len();
        let z = Array2::from_shape_vec((1, k), raw.iter().map(|x| x / s).collect()).unwrap();
        let y = y % k;
        let m = classification_margin(&z, 0, y);
        prop_assert!((-1.0..=1.0).contains(&m));
        let best = (0..k).fold(0, |b, c| if z[[0, c]] > z[[0, b]] { c } else { b });
        let unique = (0..k).filter(|&c| z[[0, c]] == z[[0, best]]).count() == 1;
        if unique {
            prop_assert_eq!(m > 0.0, best == y);
        }
    }

    #[test]
    fn kappa_is_bounded_and_symmetric(
        a in proptest::collection::vec(0usize..3, 5..40),
        seed in any::<u64>(),
    ) {
        let b: Vec<usize> = a.iter().enumerate().map(|(i, &x)| if (seed >> (i % 64)) & 1 == 1 { x } else { (x + 1) % 3 }).collect();
        let k1 = kappa_coefficient(&a, &b).unwrap();
        let k2 = kappa_coefficient(&b, &a).unwrap();
        prop_assert!((-1.0..=1.0).contains(&k1));
        prop_assert!((k1 - k2).abs() < 1e-12);
        prop_assert!((kappa_coefficient(&a, &a).unwrap() - 1.0).abs() < 1e-12 || a.iter().all(|&x| x == a[0]));
    }
}
