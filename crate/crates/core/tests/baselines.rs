mod common;

use common::*;
use netfense::baselines::{
    attack_defense_nt, candidate_strategy_compare, powerlaw_unnoticeable, random_defense,
    CandidateStrategy, DegreeTestConfig,
};
use netfense::defense::SurrogateScores;
use netfense::graph::{generate_chung_lu, powerlaw_weights, AttributedGraph, EdgeFlip, FlipAction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn powerlaw_fixture(seed: u64) -> AttributedGraph {
    let w = powerlaw_weights(1000, 2.5, 2.0, seed).unwrap();
    generate_chung_lu(&w, seed).unwrap()
}

#[test]
fn single_flips_are_degree_unnoticeable() {
    let cfg = DegreeTestConfig::default();
    let mut passed = 0;
    for seed in 0..50 {
        let g = powerlaw_fixture(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let flip = loop {
            let u = rng.random_range(0..1000);
            let v = rng.random_range(0..1000);
            if g.is_perturbable_pair(u, v) {
                break EdgeFlip::toggle(&g, u, v);
            }
        };
        let (stat, pass) = powerlaw_unnoticeable(&g, &g.apply_flip(&flip).unwrap(), &cfg).unwrap();
        assert!(stat >= 0.0);
        passed += pass as usize;
    }
    assert!(passed >= 48, "only {passed}/50 single flips passed");
}

#[test]
fn identical_graphs_pass_and_hub_deletion_fails() {
    let g = powerlaw_fixture(1);
    let cfg = DegreeTestConfig::default();
    assert_eq!(powerlaw_unnoticeable(&g, &g, &cfg).unwrap(), (0.0, true));
    let hub = (0..1000).max_by_key(|&u| g.degree(u)).unwrap();
    let flips: Vec<EdgeFlip> =
        g.neighbors(hub).iter().map(|&u| EdgeFlip::new(hub, u, FlipAction::Remove)).collect();
    let stripped = g.apply_flips(&flips).unwrap();
    let (stat, pass) = powerlaw_unnoticeable(&g, &stripped, &cfg).unwrap();
    assert!(!pass, "statistic {stat}");
}

#[test]
fn random_defense_zero_budget_and_replay() {
    let g = powerlaw_fixture(2);
    let v = (0..1000).find(|&v| g.degree(v) >= 3).unwrap();
    let cfg = DegreeTestConfig::default();
    assert!(random_defense(&g, v, 0, cfg, 1).unwrap().plan.steps.is_empty());
    let a = random_defense(&g, v, 5, cfg, 9).unwrap();
    let b = random_defense(&g, v, 5, cfg, 9).unwrap();
    assert_eq!(a.plan, b.plan);
    assert_eq!(a.plan.replay(&g).unwrap().edge_difference(&a.graph), 0);
    assert!(a.plan.steps.iter().all(|s| s.flip.u == v || s.flip.v == v));
}

#[test]
fn nt_first_flip_is_exhaustive_margin_argmin() {
    let (g, labels) = small_sbm(vec![20, 20], 0.3, 0.05, 4);
    let t = trained(g, labels, 4);
    let scores = SurrogateScores::new(&t.graph, &t.target, &t.private).unwrap();
    let cfg = DegreeTestConfig {
        threshold: f64::INFINITY,
        ..Default::default()
    };
    let w = t.private.w_prime.clone();
    let xw = t.graph.features().dot(&w);
    let margin = |g: &AttributedGraph, v: usize, p: usize| {
        let a = dense_a_hat(g);
        let s = a.dot(&a).row(v).dot(&xw);
        s[p] - s[1 - p]
    };
    for v in [0, 7, 25] {
        let p = t.labels.private[v].unwrap() as usize;
        assert!(attack_defense_nt(&t.graph, &scores, &t.labels, v, 0, cfg).unwrap().plan.steps.is_empty());
        let out = attack_defense_nt(&t.graph, &scores, &t.labels, v, 1, cfg).unwrap();
        let clean = margin(&t.graph, v, p);
        let best = (0..40)
            .filter(|&u| t.graph.is_perturbable_pair(v, u))
            .map(|u| {
                let h = t.graph.apply_flip(&EdgeFlip::toggle(&t.graph, v, u)).unwrap();
                (margin(&h, v, p), u)
            })
            .fold((f64::INFINITY, 0), |a, b| if b.0 < a.0 { b } else { a });
        if best.0 >= clean {
            assert!(out.plan.steps.is_empty());
            continue;
        }
        let step = &out.plan.steps[0];
        assert!((step.loss - best.0).abs() < 1e-10);
        assert_eq!(step.flip.v, best.1);
    }
}

#[test]
fn nt_never_raises_the_margin() {
    let (g, labels) = small_sbm(vec![25, 25], 0.25, 0.04, 8);
    let t = trained(g, labels, 8);
    let scores = SurrogateScores::new(&t.graph, &t.target, &t.private).unwrap();
    for v in 0..10 {
        let out = attack_defense_nt(&t.graph, &scores, &t.labels, v, 6, DegreeTestConfig::default()).unwrap();
        let mut last = f64::INFINITY;
        for s in &out.plan.steps {
            assert!(s.loss < last);
            last = s.loss;
        }
    }
}

#[test]
fn compare_emits_one_series_per_strategy() {
    let g = powerlaw_fixture(3);
    let out = candidate_strategy_compare(&g, &CandidateStrategy::ALL, 10, 0.1, 2, DegreeTestConfig::default())
        .unwrap();
    assert_eq!(out.len(), 4);
    for t in &out {
        assert_eq!(t.ca.len(), 11);
        assert_eq!(t.ca[0], g.avg_clustering_coefficient());
        let replay = g.apply_flips(&t.flips).unwrap();
        assert!((replay.avg_clustering_coefficient() - t.ca[10]).abs() < 1e-12);
    }
}
