mod common;

use common::*;
use ndarray::array;
use netfense::defense::{
    multi_target_defense, netfense_loss, select_targets, shuffled_targets, single_target_defense,
    DefenseConfig, DefenseContext, SurrogateScores,
};
use netfense::gcn::{GcnModel, NormalizedAdjacency};
use netfense::graph::{AttributedGraph, Task};

fn eight_node() -> AttributedGraph {
    let x = array![
        [1.0, 0.0, 1.0],
        [0.0, 1.0, 1.0],
        [1.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [1.0, 1.0, 1.0],
        [0.0, 0.0, 0.0]
    ];
    let edges = [(0, 1), (1, 2), (2, 3), (3, 0), (3, 4), (4, 5), (5, 6), (6, 7), (7, 4), (1, 6)];
    AttributedGraph::from_edges(x, &edges).unwrap()
}

fn models(dim: usize, seed: u64) -> (GcnModel, GcnModel) {
    (
        GcnModel::initialize(dim, 4, 3, Task::Target, seed),
        GcnModel::initialize(dim, 4, 2, Task::Private, seed + 1),
    )
}

#[test]
fn budget_one_commits_the_exhaustive_argmin() {
    let g = eight_node();
    let (tm, pm) = models(3, 4);
    let cfg = DefenseConfig {
        budget: 1,
        ..Default::default()
    };
    let ctx = DefenseContext::prepare(&g, &tm, &pm, cfg).unwrap();
    for v in 0..8 {
        let out = single_target_defense(&g, &ctx, v).unwrap();
        assert_eq!(out.plan.steps.len(), 1);
        check_greedy_plan(&g, &ctx, &tm, &pm, v, &out.plan).unwrap();
    }
}

#[test]
fn multi_step_plans_are_stepwise_optimal() {
    for seed in 0..6 {
        let g = random_graph(14, 0.3, 4, 40 + seed);
        let (tm, pm) = models(4, seed);
        let cfg = DefenseConfig {
            budget: 3,
            ..Default::default()
        };
        let ctx = DefenseContext::prepare(&g, &tm, &pm, cfg).unwrap();
        for v in (0..14).filter(|&v| g.degree(v) >= 2).take(3) {
            let out = single_target_defense(&g, &ctx, v).unwrap();
            check_greedy_plan(&g, &ctx, &tm, &pm, v, &out.plan).unwrap();
            assert_eq!(out.plan.replay(&g).unwrap().edge_difference(&out.graph), 0);
        }
    }
}

#[test]
fn zero_budget_and_tiny_tau_give_empty_plans() {
    let g = eight_node();
    let (tm, pm) = models(3, 1);
    let cfg = DefenseConfig {
        budget: 0,
        ..Default::default()
    };
    let ctx = DefenseContext::prepare(&g, &tm, &pm, cfg.clone()).unwrap();
    let out = single_target_defense(&g, &ctx, 2).unwrap();
    assert!(out.plan.steps.is_empty());
    assert_eq!(out.graph.edge_difference(&g), 0);

    let scores = SurrogateScores::new(&g, &tm, &pm).unwrap();
    let ctx = DefenseContext::with_tau(scores, 0.0, DefenseConfig::default()).unwrap();
    assert!(single_target_defense(&g, &ctx, 2).unwrap().plan.steps.is_empty());
    assert!(single_target_defense(&g, &ctx, 8).is_err());
}

#[test]
fn loss_matches_hand_computation() {
    let g = eight_node();
    let (tm, pm) = models(3, 6);
    let scores = SurrogateScores::new(&g, &tm, &pm).unwrap();
    let norm = NormalizedAdjacency::build(&g);
    let cfg = DefenseConfig::default();
    for v in 0..8 {
        let got = netfense_loss(norm.a_hat_sq.row(v), &scores, v, &cfg);
        let want = dense_loss(&g, v, &tm, &pm, scores.c_check[v], 2.0, 1.0);
        assert!((got - want).abs() < 1e-12 * want.max(1.0), "{got} vs {want}");
    }
}

#[test]
fn multi_target_is_sequential_composition() {
    let g = eight_node();
    let (tm, pm) = models(3, 2);
    let cfg = DefenseConfig {
        budget: 2,
        ..Default::default()
    };
    let ctx = DefenseContext::prepare(&g, &tm, &pm, cfg).unwrap();

    let none = multi_target_defense(&g, &ctx, &[], 5).unwrap();
    assert_eq!(none.graph.edge_difference(&g), 0);

    let one = multi_target_defense(&g, &ctx, &[3], 5).unwrap();
    let single = single_target_defense(&g, &ctx, 3).unwrap();
    assert_eq!(one.plan.steps, single.plan.steps);

    let both = multi_target_defense(&g, &ctx, &[1, 4], 9).unwrap();
    let order = shuffled_targets(&[1, 4], 9);
    let mut manual = g.clone();
    let mut steps = Vec::new();
    for v in order {
        let out = single_target_defense(&manual, &ctx, v).unwrap();
        steps.extend(out.plan.steps);
        manual = out.graph;
    }
    assert_eq!(both.plan.steps, steps);
    assert_eq!(both.graph.edge_difference(&manual), 0);
}

#[test]
fn single_mode_targets_follow_sort_oracle() {
    let n = 60;
    let margins: Vec<Option<f64>> = (0..n).map(|i| Some(0.95 - 0.02 * i as f64)).collect();
    let test: Vec<usize> = (0..n).collect();
    let chosen = select_targets(&margins, &test, false, 3);
    // margins decrease with the index and stay positive up to node 47
    let top: Vec<usize> = (0..10).collect();
    let bottom: Vec<usize> = (38..48).rev().collect();
    assert_eq!(&chosen[..10], top.as_slice());
    assert_eq!(&chosen[10..20], bottom.as_slice());
    assert_eq!(chosen.len(), 40);
    let mut dedup = chosen.clone();
    dedup.sort_unstable();
    dedup.dedup();
    assert_eq!(dedup.len(), 40);
    assert_eq!(select_targets(&margins, &test, true, 3), test);
}
