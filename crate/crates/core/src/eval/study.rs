//! Structure-only versus feature-only perturbation of the same target.

use std::collections::HashSet;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::defense::{loss_from_scores, single_target_defense, DefenseContext};
use crate::error::{Error, Result};
use crate::gcn::{classification_margin, predict_full, GcnModel, NormalizedAdjacency};
use crate::graph::{AttributedGraph, LabelSet};

/// One committed feature flip `x_kl ← 1 − x_kl`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureFlip {
    pub node: usize,
    pub feature: usize,
    pub loss: f64,
}

/// Greedy defense that flips node features instead of edges: each step
/// flips the feature `(k, l)` with `Â²_vk ≠ 0` minimizing the defense loss of
/// `v` under the surrogate, until `budget` flips are made.
pub fn feature_defense(
    graph: &AttributedGraph,
    ctx: &DefenseContext,
    target_model: &GcnModel,
    private_model: &GcnModel,
    v: usize,
) -> Result<(Array2<f64>, Vec<FeatureFlip>)> {
    if v >= graph.n_nodes() {
        return Err(Error::Config(format!("target {v} outside 0..{}", graph.n_nodes())));
    }
    let cfg = &ctx.config;
    let norm = NormalizedAdjacency::build(graph);
    let mut x = graph.features().clone();
    let row = norm.a_hat_sq.row(v).to_vec();
    // Surrogate score rows of v, kept up to date under feature flips.
    let mut t = ndarray::Array1::<f64>::zeros(target_model.n_classes());
    let mut p = ndarray::Array1::<f64>::zeros(2);
    for &(j, a) in &row {
        t.scaled_add(a, &ctx.scores.xw_target.row(j));
        p.scaled_add(a, &ctx.scores.xw_private.row(j));
    }
    let c_check = ctx.scores.c_check[v];
    let mut done: HashSet<(usize, usize)> = HashSet::new();
    let mut flips = Vec::new();
    while flips.len() < cfg.budget {
        let mut best: Option<(f64, usize, usize)> = None;
        for &(k, a) in &row {
            for l in 0..x.ncols() {
                if done.contains(&(k, l)) {
                    continue;
                }
                let h = if x[[k, l]] == 0.0 { a } else { -a };
                let t2 = &t + &(&target_model.w_prime.row(l) * h);
                let p2 = &p + &(&private_model.w_prime.row(l) * h);
                let loss = loss_from_scores(t2.view(), p2.view(), c_check, cfg.a_d, cfg.a_m, cfg.denominator);
                if best.is_none_or(|(bl, bk, bf)| loss.total_cmp(&bl).then((k, l).cmp(&(bk, bf))).is_lt()) {
                    best = Some((loss, k, l));
                }
            }
        }
        let Some((loss, k, l)) = best else { break };
        let a = norm.a_hat_sq.get(v, k);
        let h = if x[[k, l]] == 0.0 { a } else { -a };
        t.scaled_add(h, &target_model.w_prime.row(l));
        p.scaled_add(h, &private_model.w_prime.row(l));
        x[[k, l]] = 1.0 - x[[k, l]];
        done.insert((k, l));
        flips.push(FeatureFlip { node: k, feature: l, loss });
    }
    Ok((x, flips))
}

/// Private-label margins of one target: clean, after edge flips and after
/// the same number of feature flips, all under the clean private model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationEffect {
    pub node: usize,
    pub clean: f64,
    pub structure: f64,
    pub feature: f64,
    pub structure_flips: usize,
    pub feature_flips: usize,
}

impl PerturbationEffect {
    pub fn structure_change(&self) -> f64 {
        (self.clean - self.structure).abs()
    }

    pub fn feature_change(&self) -> f64 {
        (self.clean - self.feature).abs()
    }
}

/// Runs both perturbation kinds for `v` with the budget of `ctx` and
/// measures the private-label margin under `private_model`.
pub fn structure_vs_feature(
    graph: &AttributedGraph,
    labels: &LabelSet,
    ctx: &DefenseContext,
    target_model: &GcnModel,
    private_model: &GcnModel,
    v: usize,
) -> Result<PerturbationEffect> {
    let p = labels.private[v]
        .ok_or_else(|| Error::Data(format!("target {v} has no private label")))? as usize;
    let margin = |g: &AttributedGraph| -> Result<f64> {
        let norm = NormalizedAdjacency::build(g);
        Ok(classification_margin(&predict_full(private_model, &norm, g.features())?, v, p))
    };
    let clean = margin(graph)?;
    let edges = single_target_defense(graph, ctx, v)?;
    let structure = margin(&edges.graph)?;
    let (x, fflips) = feature_defense(graph, ctx, target_model, private_model, v)?;
    let feature = margin(&graph.with_features(x)?)?;
    Ok(PerturbationEffect {
        node: v,
        clean,
        structure,
        feature,
        structure_flips: edges.plan.n_perturbations(),
        feature_flips: fflips.len(),
    })
}
