//! The greedy edge-flip defense.
//!
//! For a target node `v`, each iteration scores every candidate flip `(v, u)`
//! whose PPR influence is below the threshold `τ` with
//!
//! ```text
//! L = |[Â′²XW′_P]_v,0 − [Â′²XW′_P]_v,1|^a_d / (ρ([Â′²XW′_C]_v)_č)^a_m
//! ```
//!
//! and commits the minimizer, until the budget is spent or no candidate is
//! left. `č` is the target class the clean full model predicts for `v`, and
//! `ρ` is a softmax over the target score row (or the identity on the raw
//! score, see [`LossDenominator`]).

use std::collections::HashSet;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gcn::{
    argmax_rows, predict_full, softmax, GcnModel, NormalizedAdjacency,
};
use crate::graph::{AttributedGraph, EdgeFlip};
use crate::ppr::{
    quantile_threshold, AnchoredInfluence, DenominatorForm, PprModel, PprRefresh,
};

/// How the target-class term in the loss denominator is made positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossDenominator {
    /// Softmax probability of `č` over the surrogate target scores.
    #[default]
    Softmax,
    /// The raw surrogate score; non-positive values make the loss infinite.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DefenseConfig {
    /// Maximum number of flips per target.
    pub budget: usize,
    pub tau_quantile: f64,
    pub a_d: f64,
    pub a_m: f64,
    /// PPR restart probability.
    pub alpha: f64,
    pub denominator: LossDenominator,
    pub form: DenominatorForm,
    pub refresh: PprRefresh,
    /// Refresh influence scores after this many committed flips.
    pub refresh_every: usize,
    /// Recompute `τ` on the current graph at every refresh instead of once
    /// on the clean graph.
    pub recompute_threshold: bool,
    /// Keep the loss of every candidate in each step.
    pub record_candidates: bool,
}

impl Default for DefenseConfig {
    fn default() -> Self {
        DefenseConfig {
            budget: 20,
            tau_quantile: 0.9,
            a_d: 2.0,
            a_m: 1.0,
            alpha: 0.1,
            denominator: LossDenominator::Softmax,
            form: DenominatorForm::Revised,
            refresh: PprRefresh::Sparse,
            refresh_every: 1,
            recompute_threshold: false,
            record_candidates: false,
        }
    }
}

impl DefenseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_quantile > 0.0 && self.tau_quantile < 1.0) {
            return Err(Error::Config(format!(
                "defense.tau_quantile must lie in (0, 1), got {}",
                self.tau_quantile
            )));
        }
        if !(self.a_d >= 0.0) || !(self.a_m >= 0.0) {
            return Err(Error::Config(format!(
                "defense.a_d and defense.a_m must be non-negative, got {} and {}",
                self.a_d, self.a_m
            )));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!(
                "defense.alpha must lie in (0, 1], got {}",
                self.alpha
            )));
        }
        if self.refresh_every == 0 {
            return Err(Error::Config("defense.refresh_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// Perturbation strategies known to the experiment driver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Clean,
    Random,
    Nt,
    #[serde(rename = "netfense")]
    NetFense,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Clean => "clean",
            Strategy::Random => "random",
            Strategy::Nt => "nt",
            Strategy::NetFense => "netfense",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clean" => Ok(Strategy::Clean),
            "random" => Ok(Strategy::Random),
            "nt" => Ok(Strategy::Nt),
            "netfense" => Ok(Strategy::NetFense),
            other => Err(Error::Config(format!(
                "unknown strategy {other:?} (expected clean, random, nt or netfense)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationStep {
    pub target: usize,
    pub flip: EdgeFlip,
    /// Objective value of the committed flip (strategy specific).
    #[serde(with = "extended_f64")]
    pub loss: f64,
    /// Symmetric PPR influence of the flip, when the strategy computes it.
    pub delta_ppr: Option<f64>,
    pub candidate_count: usize,
    /// `(u, loss)` for every candidate of this step, if recorded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate_losses: Option<Vec<(usize, f64)>>,
}

// JSON has no infinities; non-finite values are written as strings.
mod extended_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else {
            s.serialize_str(&x.to_string())
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// An ordered list of committed flips.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationPlan {
    pub strategy: Strategy,
    pub targets: Vec<usize>,
    /// Per-target budget.
    pub budget: usize,
    pub seed: Option<u64>,
    pub steps: Vec<PerturbationStep>,
}

impl PerturbationPlan {
    pub fn empty(strategy: Strategy, targets: Vec<usize>, budget: usize) -> Self {
        PerturbationPlan {
            strategy,
            targets,
            budget,
            seed: None,
            steps: Vec::new(),
        }
    }

    pub fn flips(&self) -> impl Iterator<Item = &EdgeFlip> {
        self.steps.iter().map(|s| &s.flip)
    }

    /// Number of committed flips, `N_p`.
    pub fn n_perturbations(&self) -> usize {
        self.steps.len()
    }

    /// Applies the plan to `graph` from scratch.
    pub fn replay(&self, graph: &AttributedGraph) -> Result<AttributedGraph> {
        graph.apply_flips(self.flips())
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    }
}

/// A plan together with the graph it produced.
#[derive(Debug, Clone)]
pub struct Defended {
    pub plan: PerturbationPlan,
    pub graph: AttributedGraph,
}

/// The per-node projections `XW′` of both surrogates and the clean
/// full-model target predictions `č`.
#[derive(Debug, Clone)]
pub struct SurrogateScores {
    pub xw_target: Array2<f64>,
    pub xw_private: Array2<f64>,
    pub c_check: Vec<usize>,
}

impl SurrogateScores {
    pub fn new(
        graph: &AttributedGraph,
        target_model: &GcnModel,
        private_model: &GcnModel,
    ) -> Result<Self> {
        let x = graph.features();
        for (name, m) in [("target", target_model), ("private", private_model)] {
            if m.feature_dim() != x.ncols() {
                return Err(Error::Shape(format!(
                    "{name} model expects {} features, graph has {}",
                    m.feature_dim(),
                    x.ncols()
                )));
            }
        }
        if private_model.n_classes() != 2 {
            return Err(Error::Shape(format!(
                "private model has {} classes, expected 2",
                private_model.n_classes()
            )));
        }
        let norm = NormalizedAdjacency::build(graph);
        let z = predict_full(target_model, &norm, x)?;
        Ok(SurrogateScores {
            xw_target: x.dot(&target_model.w_prime),
            xw_private: x.dot(&private_model.w_prime),
            c_check: argmax_rows(&z),
        })
    }
}

/// Defense loss from the surrogate score rows of the target node.
pub fn loss_from_scores(
    target_scores: ArrayView1<f64>,
    private_scores: ArrayView1<f64>,
    c_check: usize,
    a_d: f64,
    a_m: f64,
    denominator: LossDenominator,
) -> f64 {
    let gap = (private_scores[0] - private_scores[1]).abs();
    let numerator = gap.powf(a_d);
    let base = match denominator {
        LossDenominator::Softmax => softmax(target_scores)[c_check],
        LossDenominator::Raw => target_scores[c_check],
    };
    let den = base.powf(a_m);
    if a_m == 0.0 {
        return numerator;
    }
    if !(den > 0.0) || !den.is_finite() {
        return f64::INFINITY;
    }
    let loss = numerator / den;
    if loss.is_nan() {
        f64::INFINITY
    } else {
        loss
    }
}

fn row_scores(row: &[(usize, f64)], xw: &Array2<f64>) -> Array1<f64> {
    let mut out = Array1::zeros(xw.ncols());
    for &(j, a) in row {
        out.scaled_add(a, &xw.row(j));
    }
    out
}

/// The defense loss of node `v` given row `v` of `Â′²`.
pub fn netfense_loss(
    a2_row: &[(usize, f64)],
    scores: &SurrogateScores,
    v: usize,
    config: &DefenseConfig,
) -> f64 {
    let t = row_scores(a2_row, &scores.xw_target);
    let p = row_scores(a2_row, &scores.xw_private);
    loss_from_scores(
        t.view(),
        p.view(),
        scores.c_check[v],
        config.a_d,
        config.a_m,
        config.denominator,
    )
}

/// Everything the defense needs that is fixed across targets: the
/// surrogate projections, the influence threshold and the configuration.
#[derive(Debug, Clone)]
pub struct DefenseContext {
    pub scores: SurrogateScores,
    pub tau: f64,
    pub config: DefenseConfig,
}

impl DefenseContext {
    /// Computes `τ` on the clean graph.
    pub fn prepare(
        graph: &AttributedGraph,
        target_model: &GcnModel,
        private_model: &GcnModel,
        config: DefenseConfig,
    ) -> Result<Self> {
        config.validate()?;
        let scores = SurrogateScores::new(graph, target_model, private_model)?;
        let ppr = PprModel::build(graph, config.alpha)?;
        let tau = quantile_threshold(&ppr, config.tau_quantile, config.form)?;
        Ok(DefenseContext { scores, tau, config })
    }

    pub fn with_tau(scores: SurrogateScores, tau: f64, config: DefenseConfig) -> Result<Self> {
        config.validate()?;
        Ok(DefenseContext { scores, tau, config })
    }
}

/// Greedy single-target defense of node `v`.
///
/// Candidates are pairs `(v, u)` below `τ` whose endpoints both have degree
/// at least two on the current graph and that were not flipped before.
/// Ties are broken by the smaller PPR influence, then the smaller `u`.
pub fn single_target_defense(
    graph: &AttributedGraph,
    ctx: &DefenseContext,
    v: usize,
) -> Result<Defended> {
    let n = graph.n_nodes();
    if v >= n {
        return Err(Error::Config(format!("target {v} outside 0..{n}")));
    }
    if ctx.scores.c_check.len() != n {
        return Err(Error::Shape(format!(
            "surrogate scores cover {} nodes, graph has {n}",
            ctx.scores.c_check.len()
        )));
    }
    let cfg = &ctx.config;
    let mut plan = PerturbationPlan::empty(Strategy::NetFense, vec![v], cfg.budget);
    let mut g = graph.clone();
    if cfg.budget == 0 {
        return Ok(Defended { plan, graph: g });
    }
    let mut norm = NormalizedAdjacency::build(&g);
    let mut tau = ctx.tau;
    let mut influence = AnchoredInfluence::compute(&g, cfg.alpha, v, cfg.refresh)?;
    let mut since_refresh = 0;
    let mut flipped: HashSet<(usize, usize)> = HashSet::new();

    while plan.steps.len() < cfg.budget {
        if since_refresh >= cfg.refresh_every {
            influence = AnchoredInfluence::compute(&g, cfg.alpha, v, cfg.refresh)?;
            if cfg.recompute_threshold {
                let ppr = PprModel::build(&g, cfg.alpha)?;
                tau = quantile_threshold(&ppr, cfg.tau_quantile, cfg.form)?;
            }
            since_refresh = 0;
        }
        let candidates: Vec<_> = influence
            .candidates(tau, cfg.form)
            .into_iter()
            .filter(|s| g.is_perturbable_pair(s.u, s.v) && !flipped.contains(&key(s.u, s.v)))
            .collect();
        if candidates.is_empty() {
            break;
        }
        let mut best: Option<(f64, f64, usize, EdgeFlip)> = None;
        let mut recorded = cfg.record_candidates.then(Vec::new);
        for s in &candidates {
            let flip = EdgeFlip::toggle(&g, v, s.v);
            let row = norm.row_after_flip(&flip, v)?;
            let loss = netfense_loss(&row, &ctx.scores, v, cfg);
            if let Some(r) = recorded.as_mut() {
                r.push((s.v, loss));
            }
            let better = best
                .as_ref()
                .is_none_or(|(bl, bd, bu, _)| lex_lt((loss, s.delta, s.v), (*bl, *bd, *bu)));
            if better {
                best = Some((loss, s.delta, s.v, flip));
            }
        }
        let (loss, delta, _, flip) = best.expect("candidates are non-empty");
        norm = norm.apply_flip(&flip)?;
        g = g.apply_flip(&flip)?;
        flipped.insert(flip.key());
        since_refresh += 1;
        plan.steps.push(PerturbationStep {
            target: v,
            flip,
            loss,
            delta_ppr: Some(delta),
            candidate_count: candidates.len(),
            candidate_losses: recorded,
        });
    }
    Ok(Defended { plan, graph: g })
}

/// Lexicographic `(loss, influence, node)` comparison used for tie-breaking.
pub(crate) fn lex_lt(a: (f64, f64, usize), b: (f64, f64, usize)) -> bool {
    a.0.total_cmp(&b.0)
        .then(a.1.total_cmp(&b.1))
        .then(a.2.cmp(&b.2))
        .is_lt()
}

pub(crate) fn key(u: usize, v: usize) -> (usize, usize) {
    (u.min(v), u.max(v))
}

/// Targets in the order a seeded shuffle visits them.
pub fn shuffled_targets(targets: &[usize], seed: u64) -> Vec<usize> {
    let mut order = targets.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
}

/// Sequential defense of several targets in seeded random order; each
/// target starts from the graph the previous one produced.
pub fn multi_target_defense(
    graph: &AttributedGraph,
    ctx: &DefenseContext,
    targets: &[usize],
    seed: u64,
) -> Result<Defended> {
    let order = shuffled_targets(targets, seed);
    let mut g = graph.clone();
    let mut plan = PerturbationPlan::empty(Strategy::NetFense, order.clone(), ctx.config.budget);
    plan.seed = Some(seed);
    for &v in &order {
        let out = single_target_defense(&g, ctx, v)?;
        plan.steps.extend(out.plan.steps);
        g = out.graph;
    }
    Ok(Defended { plan, graph: g })
}

/// Single-target evaluation set: the 10 test nodes with the highest positive
/// margin, the 10 with the lowest positive margin, and 20 further test nodes
/// drawn at random; duplicates removed. Multi mode returns the test set.
pub fn select_targets(
    margins: &[Option<f64>],
    test: &[usize],
    multi: bool,
    seed: u64,
) -> Vec<usize> {
    if multi {
        return test.to_vec();
    }
    const GROUP: usize = 10;
    const RANDOM: usize = 20;
    let mut positive: Vec<(usize, f64)> = test
        .iter()
        .filter_map(|&v| margins[v].filter(|&m| m > 0.0).map(|m| (v, m)))
        .collect();
    if positive.len() < 2 * GROUP {
        log::warn!(
            "only {} test nodes have a positive margin; target groups are smaller than {GROUP}",
            positive.len()
        );
    }
    positive.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut chosen: Vec<usize> = positive.iter().take(GROUP).map(|p| p.0).collect();
    for p in positive.iter().rev().take(GROUP) {
        if !chosen.contains(&p.0) {
            chosen.push(p.0);
        }
    }
    let mut rest: Vec<usize> = test.iter().copied().filter(|v| !chosen.contains(v)).collect();
    rest.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    chosen.extend(rest.into_iter().take(RANDOM));
    chosen
}
