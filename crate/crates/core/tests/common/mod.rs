#![allow(dead_code)]

use nalgebra::DMatrix;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use netfense::gcn::{train_gcn, GcnModel, NormalizedAdjacency, TrainConfig};
use netfense::graph::{
    generate_sbm, make_split, AttributedGraph, DataSplit, FeatureModel, LabelSet, SbmConfig,
    SplitRatios, Task,
};

/// G(n, p) graph with random 0/1 features.
pub fn random_graph(n: usize, p: f64, dim: usize, seed: u64) -> AttributedGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let x = Array2::from_shape_simple_fn((n, dim), || f64::from(rng.random_bool(0.4) as u8));
    AttributedGraph::from_edges(x, &edges).unwrap()
}

pub fn structure(n: usize, edges: &[(usize, usize)]) -> AttributedGraph {
    AttributedGraph::structure_only(n, edges).unwrap()
}

pub fn dense_adjacency(g: &AttributedGraph) -> Array2<f64> {
    let n = g.n_nodes();
    let mut a = Array2::zeros((n, n));
    for (u, v) in g.edges() {
        a[[u, v]] = 1.0;
        a[[v, u]] = 1.0;
    }
    a
}

/// `D̃^{-1/2}(A + I)D̃^{-1/2}` computed densely.
pub fn dense_a_hat(g: &AttributedGraph) -> Array2<f64> {
    let n = g.n_nodes();
    let a = dense_adjacency(g) + Array2::<f64>::eye(n);
    let d: Vec<f64> = a.rows().into_iter().map(|r| r.sum()).collect();
    Array2::from_shape_fn((n, n), |(i, j)| a[[i, j]] / (d[i] * d[j]).sqrt())
}

/// `(I − (1−α)H)⁻¹` by explicit inversion, `H = D⁻¹A` with a self-loop on
/// isolated nodes.
pub fn dense_fundamental(g: &AttributedGraph, alpha: f64) -> DMatrix<f64> {
    dense_fundamental_with(g, alpha, None)
}

/// Same, with the extra term `M₂ = −(1−α)D⁻¹B` for a directed
/// perturbation `B = b e_u e_vᵀ` on the old degrees.
pub fn dense_fundamental_with(
    g: &AttributedGraph,
    alpha: f64,
    perturb: Option<(usize, usize, f64)>,
) -> DMatrix<f64> {
    let n = g.n_nodes();
    let a = dense_adjacency(g);
    let mut h = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let d = g.degree(i);
        if d == 0 {
            h[(i, i)] = 1.0;
        } else {
            for j in 0..n {
                h[(i, j)] = a[[i, j]] / d as f64;
            }
        }
    }
    if let Some((u, v, b)) = perturb {
        h[(u, v)] += b / g.degree(u).max(1) as f64;
    }
    let m = DMatrix::<f64>::identity(n, n) - h * (1.0 - alpha);
    m.try_inverse().expect("M1 is invertible for alpha > 0")
}

pub fn softmax_dense(z: &Array2<f64>) -> Array2<f64> {
    let mut out = z.clone();
    for mut row in out.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|x| (x - m).exp());
        let s = row.sum();
        row.mapv_inplace(|x| x / s);
    }
    out
}

/// Dense two-layer forward pass.
pub fn dense_forward(g: &AttributedGraph, model: &GcnModel) -> Array2<f64> {
    let a = dense_a_hat(g);
    let h = a.dot(g.features()).dot(&model.w1).mapv(|x| x.max(0.0));
    softmax_dense(&a.dot(&h).dot(&model.w2))
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    (a - b).iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Small SBM with target blocks and a planted private attribute.
pub fn small_sbm(blocks: Vec<usize>, intra: f64, inter: f64, seed: u64) -> (AttributedGraph, LabelSet) {
    let mut cfg = SbmConfig::new(blocks, intra, inter, seed);
    cfg.private_homophily = 0.6;
    cfg.features = FeatureModel {
        target_words: 3,
        private_words: 3,
        noise_words: 6,
        target_signal: 0.6,
        private_signal: 0.4,
        background: 0.1,
    };
    generate_sbm(&cfg).unwrap()
}

pub struct Trained {
    pub graph: AttributedGraph,
    pub labels: LabelSet,
    pub split: DataSplit,
    pub target: GcnModel,
    pub private: GcnModel,
}

pub fn quick_train() -> TrainConfig {
    TrainConfig {
        epochs: 60,
        hidden_dim: 8,
        ..Default::default()
    }
}

pub fn trained(graph: AttributedGraph, labels: LabelSet, seed: u64) -> Trained {
    let split = make_split(graph.n_nodes(), SplitRatios::new(0.3, 0.2, 0.5), seed).unwrap();
    let norm = NormalizedAdjacency::build(&graph);
    let cfg = TrainConfig {
        seed,
        ..quick_train()
    };
    let fit = |task: Task| {
        train_gcn(
            &norm,
            graph.features(),
            &labels.task_labels(task),
            labels.n_classes(task),
            &split,
            task,
            &cfg,
        )
        .unwrap()
    };
    let target = fit(Task::Target);
    let private = fit(Task::Private);
    Trained {
        graph,
        labels,
        split,
        target,
        private,
    }
}

/// Defense loss of `v` recomputed from a dense `Â²` of `g`.
pub fn dense_loss(
    g: &AttributedGraph,
    v: usize,
    target: &GcnModel,
    private: &GcnModel,
    c_check: usize,
    a_d: f64,
    a_m: f64,
) -> f64 {
    let a = dense_a_hat(g);
    let row = a.dot(&a).row(v).to_owned();
    let x = g.features();
    let t = row.dot(&x.dot(&target.w_prime));
    let p = row.dot(&x.dot(&private.w_prime));
    let m = t.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let prob = (t[c_check] - m).exp() / t.iter().map(|&s| (s - m).exp()).sum::<f64>();
    (p[0] - p[1]).abs().powf(a_d) / prob.powf(a_m)
}

/// Replays a single-target plan and checks that every committed flip is an
/// exhaustive minimizer of the dense loss over the candidate set of the
/// graph it was applied to. Returns the first violation.
pub fn check_greedy_plan(
    g0: &AttributedGraph,
    ctx: &netfense::defense::DefenseContext,
    target: &GcnModel,
    private: &GcnModel,
    v: usize,
    plan: &netfense::defense::PerturbationPlan,
) -> Result<(), String> {
    use netfense::graph::EdgeFlip;
    use netfense::ppr::{candidate_set, PprModel};
    let cfg = &ctx.config;
    let mut g = g0.clone();
    let mut flipped: Vec<(usize, usize)> = Vec::new();
    for step in &plan.steps {
        let ppr = PprModel::build(&g, cfg.alpha).unwrap();
        // Pairs within rounding distance of τ may fall on either side.
        let scored: Vec<(usize, f64)> = candidate_set(&ppr, g.n_nodes(), Some(v), f64::INFINITY, cfg.form)
            .into_iter()
            .filter(|s| !flipped.contains(&(s.v.min(v), s.v.max(v))))
            .map(|s| (s.v, s.delta))
            .collect();
        let sure = scored.iter().filter(|s| s.1 < ctx.tau - 1e-9).count();
        let maybe = scored.iter().filter(|s| s.1 < ctx.tau + 1e-9).count();
        if step.candidate_count < sure || step.candidate_count > maybe {
            return Err(format!(
                "candidate count {} outside oracle range {sure}..={maybe}",
                step.candidate_count
            ));
        }
        let cands: Vec<usize> = scored.iter().filter(|s| s.1 < ctx.tau + 1e-9).map(|s| s.0).collect();
        let certain: Vec<usize> = scored.iter().filter(|s| s.1 < ctx.tau - 1e-9).map(|s| s.0).collect();
        let c = ctx.scores.c_check[v];
        let losses: Vec<(usize, f64)> = cands
            .iter()
            .map(|&u| {
                let h = g.apply_flip(&EdgeFlip::toggle(&g, v, u)).unwrap();
                (u, dense_loss(&h, v, target, private, c, cfg.a_d, cfg.a_m))
            })
            .collect();
        let best = losses
            .iter()
            .filter(|l| certain.contains(&l.0))
            .map(|l| l.1)
            .fold(f64::INFINITY, f64::min);
        let chosen = if step.flip.u == v { step.flip.v } else { step.flip.u };
        let got = losses
            .iter()
            .find(|l| l.0 == chosen)
            .ok_or_else(|| format!("committed partner {chosen} not a candidate"))?
            .1;
        if got > best + 1e-10 * best.abs().max(1.0) {
            return Err(format!("committed loss {got} above exhaustive minimum {best}"));
        }
        if (got - step.loss).abs() > 1e-9 * got.abs().max(1.0) {
            return Err(format!("recorded loss {} vs dense {got}", step.loss));
        }
        flipped.push(step.flip.key());
        g = g.apply_flip(&step.flip).unwrap();
    }
    Ok(())
}
