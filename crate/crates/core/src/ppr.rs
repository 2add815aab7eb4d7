//! Personalized PageRank and the closed-form influence of a single edge flip.
//!
//! With `H = D⁻¹A` and `M₁ = I − (1−α)H`, the PPR matrix is `Π = αM₁⁻¹`.
//! Flipping the directed entry `u → v` is a rank-one change of `M₁`, so the
//! change of every PPR entry has a closed form in terms of column `u` and
//! row `v` of `M₁⁻¹`. Summed over all entries it only needs the column sum
//! `s_u = Σᵢ (M₁⁻¹)ᵢᵤ` and a single entry of `M₁⁻¹` in the denominator.
//!
//! Isolated nodes get a self-loop row in `H` so that `H` stays row-stochastic.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{AttributedGraph, FlipAction};

/// Denominators within this distance of zero make a pair degenerate.
pub const DEGENERATE_EPS: f64 = 1e-12;

/// Exhaustive threshold enumeration is used up to this many nodes.
pub const EXHAUSTIVE_LIMIT: usize = 2000;
const THRESHOLD_SAMPLES: usize = 1_000_000;
const THRESHOLD_SEED: u64 = 0x5eed_0f_7a0;

/// Which denominator the summed directed influence uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenominatorForm {
    /// `1 + c′(M₁⁻¹)_uv`: adjusted for undirected flips, used by the defense.
    #[default]
    Revised,
    /// `1 − c′(M₁⁻¹)_vu`: the exact rank-one (Sherman–Morrison) denominator.
    Original,
}

/// Read access to the parts of `M₁⁻¹` the influence formulas need.
pub trait InfluenceSource {
    fn alpha(&self) -> f64;
    fn degree(&self, u: usize) -> usize;
    fn has_edge(&self, u: usize, v: usize) -> bool;
    /// `(M₁⁻¹)_ij`. Sources that store only part of the matrix may panic
    /// for entries outside it.
    fn fundamental_entry(&self, i: usize, j: usize) -> f64;
    /// `s_j = Σᵢ (M₁⁻¹)_ij`.
    fn column_sum(&self, j: usize) -> f64;
}

/// Dense PPR model of one graph.
#[derive(Debug, Clone)]
pub struct PprModel {
    alpha: f64,
    fundamental: DMatrix<f64>,
    column_sums: Vec<f64>,
    graph: AttributedGraph,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Config(format!(
            "restart probability must lie in (0, 1], got {alpha}"
        )));
    }
    Ok(())
}

/// `max(d, 1)`: the row normalizer of `H` including the isolated-node fallback.
fn row_degree(graph: &AttributedGraph, i: usize) -> f64 {
    graph.degree(i).max(1) as f64
}

pub fn build_ppr(graph: &AttributedGraph, alpha: f64) -> Result<PprModel> {
    PprModel::build(graph, alpha)
}

impl PprModel {
    /// Computes `M₁⁻¹` by a dense LU solve.
    pub fn build(graph: &AttributedGraph, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        let n = graph.n_nodes();
        let m1 = transition_system(graph, alpha);
        let fundamental = m1
            .lu()
            .try_inverse()
            .ok_or_else(|| Error::Numeric("I - (1-alpha)H is singular".into()))?;
        if fundamental.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("non-finite entry in the PPR fundamental matrix".into()));
        }
        let column_sums = (0..n).map(|j| fundamental.column(j).sum()).collect();
        Ok(PprModel {
            alpha,
            fundamental,
            column_sums,
            graph: graph.clone(),
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.graph.n_nodes()
    }

    pub fn graph(&self) -> &AttributedGraph {
        &self.graph
    }

    /// `M₁⁻¹`.
    pub fn fundamental(&self) -> &DMatrix<f64> {
        &self.fundamental
    }

    /// `Π = αM₁⁻¹`; row `r` is the PPR vector personalized at `r`.
    pub fn ppr_matrix(&self) -> DMatrix<f64> {
        &self.fundamental * self.alpha
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.graph.degrees()
    }

    /// The rank-one update `α(M₁+M₂)⁻¹ − αM₁⁻¹` for the directed flip `u → v`,
    /// evaluated entrywise from the closed form.
    pub fn delta_matrix(&self, u: usize, v: usize, action: FlipAction) -> Result<DMatrix<f64>> {
        let n = self.n_nodes();
        let mut out = DMatrix::zeros(n, n);
        let scale = exact_scale(self, u, v, action)?;
        for j in 0..n {
            let mvj = self.fundamental[(v, j)];
            for i in 0..n {
                out[(i, j)] = scale * self.fundamental[(i, u)] * mvj;
            }
        }
        Ok(out)
    }
}

impl InfluenceSource for PprModel {
    fn alpha(&self) -> f64 {
        self.alpha
    }
    fn degree(&self, u: usize) -> usize {
        self.graph.degree(u)
    }
    fn has_edge(&self, u: usize, v: usize) -> bool {
        self.graph.has_edge(u, v)
    }
    fn fundamental_entry(&self, i: usize, j: usize) -> f64 {
        self.fundamental[(i, j)]
    }
    fn column_sum(&self, j: usize) -> f64 {
        self.column_sums[j]
    }
}

/// `M₁ = I − (1−α)H` as a dense matrix.
pub fn transition_system(graph: &AttributedGraph, alpha: f64) -> DMatrix<f64> {
    let n = graph.n_nodes();
    let mut m1 = DMatrix::identity(n, n);
    for i in 0..n {
        let d = graph.degree(i);
        if d == 0 {
            m1[(i, i)] -= 1.0 - alpha;
            continue;
        }
        let w = (1.0 - alpha) / d as f64;
        for &j in graph.neighbors(i) {
            m1[(i, j)] -= w;
        }
    }
    m1
}

/// `c′ = b_s (1−α) / d_u`, with the pre-flip degree.
pub fn c_prime<S: InfluenceSource + ?Sized>(src: &S, u: usize, action: FlipAction) -> f64 {
    action.sign() * (1.0 - src.alpha()) / src.degree(u).max(1) as f64
}

// α c′ / (1 − c′ (M₁⁻¹)_vu): the common factor of every entry of the exact update.
fn exact_scale<S: InfluenceSource + ?Sized>(
    src: &S,
    u: usize,
    v: usize,
    action: FlipAction,
) -> Result<f64> {
    let c = c_prime(src, u, action);
    let den = 1.0 - c * src.fundamental_entry(v, u);
    if den.abs() < DEGENERATE_EPS {
        return Err(Error::DegeneratePerturbation { u, v, denominator: den });
    }
    Ok(src.alpha() * c / den)
}

/// One entry `[i, j]` of the exact PPR change for the directed flip `u → v`:
/// `α c′ (M₁⁻¹)_iu (M₁⁻¹)_vj / (1 − c′(M₁⁻¹)_vu)`.
pub fn entrywise_delta<S: InfluenceSource + ?Sized>(
    src: &S,
    u: usize,
    v: usize,
    action: FlipAction,
    i: usize,
    j: usize,
) -> Result<f64> {
    Ok(exact_scale(src, u, v, action)? * src.fundamental_entry(i, u) * src.fundamental_entry(v, j))
}

fn check_pair<S: InfluenceSource + ?Sized>(src: &S, u: usize, v: usize) -> Result<()> {
    if u == v {
        return Err(Error::State(format!("self-pair ({u}, {u}) is not a flip")));
    }
    for x in [u, v] {
        if src.degree(x) < 2 {
            return Err(Error::State(format!(
                "node {x} has degree {} and cannot be perturbed",
                src.degree(x)
            )));
        }
    }
    Ok(())
}

/// Summed directed influence `Δ_{u→v}` of flipping `(u, v)`.
///
/// Both endpoints must have degree at least two.
pub fn delta_directed<S: InfluenceSource + ?Sized>(
    src: &S,
    u: usize,
    v: usize,
    action: FlipAction,
    form: DenominatorForm,
) -> Result<f64> {
    check_pair(src, u, v)?;
    directed_unchecked(src, u, v, action, form)
}

fn directed_unchecked<S: InfluenceSource + ?Sized>(
    src: &S,
    u: usize,
    v: usize,
    action: FlipAction,
    form: DenominatorForm,
) -> Result<f64> {
    let c = c_prime(src, u, action);
    let den = match form {
        DenominatorForm::Revised => 1.0 + c * src.fundamental_entry(u, v),
        DenominatorForm::Original => 1.0 - c * src.fundamental_entry(v, u),
    };
    if den.abs() < DEGENERATE_EPS {
        return Err(Error::DegeneratePerturbation { u, v, denominator: den });
    }
    Ok(c * src.column_sum(u) / den)
}

/// Symmetric influence of one undirected flip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfluenceScore {
    pub u: usize,
    pub v: usize,
    pub action: FlipAction,
    /// `|Δ_{u→v} + Δ_{v→u}|`.
    pub delta: f64,
    pub forward: f64,
    pub backward: f64,
}

/// `Δ_{u↔v}` with the action inferred from the current edge state.
pub fn delta_symmetric<S: InfluenceSource + ?Sized>(
    src: &S,
    u: usize,
    v: usize,
    form: DenominatorForm,
) -> Result<InfluenceScore> {
    check_pair(src, u, v)?;
    symmetric_unchecked(src, u, v, form)
}

fn symmetric_unchecked<S: InfluenceSource + ?Sized>(
    src: &S,
    u: usize,
    v: usize,
    form: DenominatorForm,
) -> Result<InfluenceScore> {
    let action = if src.has_edge(u, v) {
        FlipAction::Remove
    } else {
        FlipAction::Add
    };
    let forward = directed_unchecked(src, u, v, action, form)?;
    let backward = directed_unchecked(src, v, u, action, form)?;
    Ok(InfluenceScore {
        u,
        v,
        action,
        delta: (forward + backward).abs(),
        forward,
        backward,
    })
}

/// Whether `(u, v)` may be perturbed at all: distinct endpoints, both of
/// degree at least two.
pub fn is_valid_pair<S: InfluenceSource + ?Sized>(src: &S, u: usize, v: usize) -> bool {
    u != v && src.degree(u) >= 2 && src.degree(v) >= 2
}

/// Pairs whose symmetric influence is strictly below `tau`.
///
/// With an anchor the pairs are `(anchor, u)`; otherwise all pairs `u < v`.
/// Pairs with a vanishing denominator are skipped.
pub fn candidate_set<S: InfluenceSource + ?Sized>(
    src: &S,
    n_nodes: usize,
    anchor: Option<usize>,
    tau: f64,
    form: DenominatorForm,
) -> Vec<InfluenceScore> {
    let mut out = Vec::new();
    let mut consider = |u: usize, v: usize| {
        if !is_valid_pair(src, u, v) {
            return;
        }
        match symmetric_unchecked(src, u, v, form) {
            Ok(score) if score.delta < tau => out.push(score),
            Ok(_) => {}
            Err(e) => log::debug!("skipping pair: {e}"),
        }
    };
    match anchor {
        Some(a) => (0..n_nodes).for_each(|u| consider(a, u)),
        None => {
            for u in 0..n_nodes {
                for v in (u + 1)..n_nodes {
                    consider(u, v);
                }
            }
        }
    }
    out
}

/// Symmetric influences of every valid pair `u < v`.
pub fn all_pair_deltas(model: &PprModel, form: DenominatorForm) -> Vec<InfluenceScore> {
    candidate_set(model, model.n_nodes(), None, f64::INFINITY, form)
}

/// Empirical `q`-quantile (linear interpolation between order statistics)
/// of the symmetric influence over valid pairs. Exhaustive up to
/// [`EXHAUSTIVE_LIMIT`] nodes, otherwise over a seeded uniform sample.
pub fn quantile_threshold(model: &PprModel, q: f64, form: DenominatorForm) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Config(format!("quantile must lie in (0, 1), got {q}")));
    }
    let n = model.n_nodes();
    let values: Vec<f64> = if n <= EXHAUSTIVE_LIMIT {
        all_pair_deltas(model, form).into_iter().map(|s| s.delta).collect()
    } else {
        let eligible: Vec<usize> = (0..n).filter(|&u| model.degree(u) >= 2).collect();
        if eligible.len() < 2 {
            Vec::new()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(THRESHOLD_SEED);
            let mut out = Vec::with_capacity(THRESHOLD_SAMPLES);
            while out.len() < THRESHOLD_SAMPLES {
                let u = eligible[rng.random_range(0..eligible.len())];
                let v = eligible[rng.random_range(0..eligible.len())];
                if u == v {
                    continue;
                }
                match symmetric_unchecked(model, u, v, form) {
                    Ok(s) => out.push(s.delta),
                    Err(_) => continue,
                }
            }
            out
        }
    };
    quantile(values, q)
        .ok_or_else(|| Error::Data("no perturbable node pairs to derive a threshold from".into()))
}

/// Type-7 sample quantile; `None` for an empty sample.
pub fn quantile(mut values: Vec<f64>, q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let h = (values.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(values.len() - 1);
    Some(values[lo] + (h - lo as f64) * (values[hi] - values[lo]))
}

/// Writes influence scores as CSV (`u,v,action,delta,forward,backward`).
pub fn write_influence_csv(scores: &[InfluenceScore], path: impl AsRef<Path>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "u,v,action,delta,forward,backward")?;
    for s in scores {
        let action = match s.action {
            FlipAction::Add => "add",
            FlipAction::Remove => "remove",
        };
        writeln!(out, "{},{},{action},{},{},{}", s.u, s.v, s.delta, s.forward, s.backward)?;
    }
    out.flush()?;
    Ok(())
}

/// How the defense refreshes influence information after each committed flip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PprRefresh {
    /// Rebuild the dense `M₁⁻¹` by LU.
    Dense,
    /// Solve only for the anchor's row and column and the column sums.
    #[default]
    Sparse,
}

/// The slice of `M₁⁻¹` needed to score pairs anchored at one node: row and
/// column `anchor` plus all column sums.
///
/// Writing `K = D̂ − (1−α)(A + I_iso)` with `D̂ = max(D, 1)`, one has
/// `M₁ = D̂⁻¹K`, so `M₁⁻¹ = K⁻¹D̂` with `K` symmetric positive definite.
/// Column `a` of `M₁⁻¹` is `d̂_a K⁻¹e_a`, row `a` is `D̂ K⁻¹e_a`, and the
/// column sums are `D̂ K⁻¹1`; two conjugate-gradient solves give all three.
#[derive(Debug, Clone)]
pub struct AnchoredInfluence {
    alpha: f64,
    anchor: usize,
    graph: AttributedGraph,
    column: Vec<f64>,
    row: Vec<f64>,
    column_sums: Vec<f64>,
}

impl AnchoredInfluence {
    pub fn from_model(model: &PprModel, anchor: usize) -> Self {
        let n = model.n_nodes();
        AnchoredInfluence {
            alpha: model.alpha,
            anchor,
            graph: model.graph.clone(),
            column: (0..n).map(|i| model.fundamental[(i, anchor)]).collect(),
            row: (0..n).map(|j| model.fundamental[(anchor, j)]).collect(),
            column_sums: model.column_sums.clone(),
        }
    }

    /// Computes the anchored slice iteratively, without forming `M₁⁻¹`.
    pub fn solve(graph: &AttributedGraph, alpha: f64, anchor: usize) -> Result<Self> {
        check_alpha(alpha)?;
        let n = graph.n_nodes();
        if anchor >= n {
            return Err(Error::Config(format!("anchor {anchor} outside 0..{n}")));
        }
        let dhat: Vec<f64> = (0..n).map(|i| row_degree(graph, i)).collect();
        let mut e = vec![0.0; n];
        e[anchor] = 1.0;
        let k_e = solve_k(graph, alpha, &e)?;
        let k_one = solve_k(graph, alpha, &vec![1.0; n])?;
        Ok(AnchoredInfluence {
            alpha,
            anchor,
            graph: graph.clone(),
            column: k_e.iter().map(|x| x * dhat[anchor]).collect(),
            row: k_e.iter().zip(&dhat).map(|(x, d)| x * d).collect(),
            column_sums: k_one.iter().zip(&dhat).map(|(x, d)| x * d).collect(),
        })
    }

    pub fn compute(
        graph: &AttributedGraph,
        alpha: f64,
        anchor: usize,
        refresh: PprRefresh,
    ) -> Result<Self> {
        match refresh {
            PprRefresh::Dense => Ok(Self::from_model(&PprModel::build(graph, alpha)?, anchor)),
            PprRefresh::Sparse => Self::solve(graph, alpha, anchor),
        }
    }

    pub fn anchor(&self) -> usize {
        self.anchor
    }

    pub fn graph(&self) -> &AttributedGraph {
        &self.graph
    }

    /// Candidate pairs `(anchor, u)` below `tau`.
    pub fn candidates(&self, tau: f64, form: DenominatorForm) -> Vec<InfluenceScore> {
        candidate_set(self, self.graph.n_nodes(), Some(self.anchor), tau, form)
    }
}

impl InfluenceSource for AnchoredInfluence {
    fn alpha(&self) -> f64 {
        self.alpha
    }
    fn degree(&self, u: usize) -> usize {
        self.graph.degree(u)
    }
    fn has_edge(&self, u: usize, v: usize) -> bool {
        self.graph.has_edge(u, v)
    }
    fn fundamental_entry(&self, i: usize, j: usize) -> f64 {
        if j == self.anchor {
            self.column[i]
        } else if i == self.anchor {
            self.row[j]
        } else {
            panic!(
                "entry ({i}, {j}) is outside the slice anchored at {}",
                self.anchor
            )
        }
    }
    fn column_sum(&self, j: usize) -> f64 {
        self.column_sums[j]
    }
}

const CG_TOLERANCE: f64 = 1e-14;

// Jacobi-preconditioned conjugate gradients for K x = b.
fn solve_k(graph: &AttributedGraph, alpha: f64, b: &[f64]) -> Result<Vec<f64>> {
    let n = graph.n_nodes();
    let beta = 1.0 - alpha;
    let diag: Vec<f64> = (0..n)
        .map(|i| {
            if graph.degree(i) == 0 {
                1.0 - beta
            } else {
                graph.degree(i) as f64
            }
        })
        .collect();
    let apply = |x: &[f64], out: &mut [f64]| {
        for i in 0..n {
            let s: f64 = graph.neighbors(i).iter().map(|&j| x[j]).sum();
            out[i] = diag[i] * x[i] - beta * s;
        }
    };
    let b_norm = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut x: Vec<f64> = b.iter().zip(&diag).map(|(b, d)| b / d).collect();
    let mut r = vec![0.0; n];
    apply(&x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut kp = vec![0.0; n];
    let max_iter = 10 * n + 100;
    for _ in 0..max_iter {
        let r_norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        if r_norm <= CG_TOLERANCE * b_norm.max(f64::MIN_POSITIVE) {
            return Ok(x);
        }
        apply(&p, &mut kp);
        let pkp: f64 = p.iter().zip(&kp).map(|(a, b)| a * b).sum();
        if !(pkp > 0.0) {
            break;
        }
        let step = rz / pkp;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * kp[i];
            z[i] = r[i] / diag[i];
        }
        let rz_next: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let ratio = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + ratio * p[i];
        }
    }
    // Rounding can stall the residual just above the tolerance; accept
    // anything that is still accurate to well below the test tolerances.
    let mut kx = vec![0.0; n];
    apply(&x, &mut kx);
    let res = kx
        .iter()
        .zip(b)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    if res <= 1e-10 * b_norm.max(1.0) {
        Ok(x)
    } else {
        Err(Error::Numeric(format!(
            "conjugate gradients did not converge (residual {res:e})"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cycle4() -> AttributedGraph {
        AttributedGraph::structure_only(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap()
    }

    fn fixture() -> AttributedGraph {
        // A 4-cycle with a pendant path and a chord: mixed degrees.
        AttributedGraph::structure_only(
            7,
            &[(0, 1), (1, 2), (2, 3), (3, 0), (0, 2), (3, 4), (4, 5), (5, 6), (6, 4)],
        )
        .unwrap()
    }

    #[test]
    fn alpha_one_gives_identity() {
        let m = build_ppr(&fixture(), 1.0).unwrap();
        assert_eq!(m.ppr_matrix(), DMatrix::identity(7, 7));
        let s = delta_symmetric(&m, 0, 5, DenominatorForm::Revised).unwrap();
        assert_eq!(s.delta, 0.0);
        assert_eq!(quantile_threshold(&m, 0.5, DenominatorForm::Revised).unwrap(), 0.0);
    }

    #[test]
    fn rows_are_stochastic() {
        let g = AttributedGraph::structure_only(5, &[(0, 1), (1, 2)]).unwrap();
        let pi = build_ppr(&g, 0.1).unwrap().ppr_matrix();
        for r in 0..5 {
            assert!((pi.row(r).sum() - 1.0).abs() < 1e-12);
            assert!(pi.row(r).iter().all(|&x| x >= 0.0));
        }
        // Isolated nodes keep all their mass.
        assert!((pi[(3, 3)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bad_alpha_is_config_error() {
        assert!(matches!(build_ppr(&cycle4(), 0.0), Err(Error::Config(_))));
        assert!(matches!(build_ppr(&cycle4(), 1.5), Err(Error::Config(_))));
    }

    #[test]
    fn symmetric_score_is_symmetric() {
        let m = build_ppr(&fixture(), 0.1).unwrap();
        for (u, v) in [(0, 5), (1, 3), (2, 4), (0, 1)] {
            let a = delta_symmetric(&m, u, v, DenominatorForm::Revised).unwrap();
            let b = delta_symmetric(&m, v, u, DenominatorForm::Revised).unwrap();
            assert!((a.delta - b.delta).abs() < 1e-14);
            assert_eq!(a.action, b.action);
        }
    }

    #[test]
    fn low_degree_pairs_rejected() {
        let g = AttributedGraph::structure_only(5, &[(0, 1), (1, 2), (2, 0), (2, 3)]).unwrap();
        let m = build_ppr(&g, 0.1).unwrap();
        assert!(matches!(
            delta_directed(&m, 0, 3, FlipAction::Add, DenominatorForm::Revised),
            Err(Error::State(_))
        ));
        assert!(delta_directed(&m, 0, 1, FlipAction::Remove, DenominatorForm::Revised).is_ok());
    }

    #[test]
    fn add_with_larger_fundamental_entry_scores_lower() {
        let m = build_ppr(&fixture(), 0.1).unwrap();
        let u = 0;
        let mut rows: Vec<(f64, f64)> = (0..7)
            .filter(|&v| v != u && !m.has_edge(u, v) && m.degree(v) >= 2)
            .map(|v| {
                let d = delta_directed(&m, u, v, FlipAction::Add, DenominatorForm::Revised).unwrap();
                (m.fundamental()[(u, v)], d.abs())
            })
            .collect();
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert!(rows.len() >= 2);
        for w in rows.windows(2) {
            assert!(w[1].1 <= w[0].1);
        }
    }

    #[test]
    fn candidate_set_thresholds() {
        let m = build_ppr(&fixture(), 0.1).unwrap();
        let all = all_pair_deltas(&m, DenominatorForm::Revised);
        let min = all.iter().map(|s| s.delta).fold(f64::INFINITY, f64::min);
        assert!(candidate_set(&m, 7, None, min, DenominatorForm::Revised).is_empty());

        let anchored = candidate_set(&m, 7, Some(0), f64::INFINITY, DenominatorForm::Revised);
        let others: Vec<usize> = anchored.iter().map(|s| s.v).collect();
        assert_eq!(others, vec![1, 2, 3, 4, 5, 6]);

        let tau = quantile_threshold(&m, 0.9, DenominatorForm::Revised).unwrap();
        let below = candidate_set(&m, 7, None, tau, DenominatorForm::Revised);
        let expected: Vec<_> = all.iter().filter(|s| s.delta < tau).map(|s| (s.u, s.v)).collect();
        assert_eq!(below.iter().map(|s| (s.u, s.v)).collect::<Vec<_>>(), expected);
    }

    #[test]
    fn quantile_interpolates() {
        assert_eq!(quantile(vec![3.0, 1.0, 2.0], 0.5), Some(2.0));
        assert_eq!(quantile(vec![1.0, 2.0, 3.0, 4.0], 0.5), Some(2.5));
        assert_eq!(quantile(vec![1.0, 5.0], 0.999_999), Some(1.0 + 4.0 * 0.999_999));
        assert_eq!(quantile(vec![], 0.5), None);
    }

    #[test]
    fn anchored_slice_matches_dense() {
        let mut edges = vec![(0, 1), (1, 2), (2, 3), (3, 0), (0, 2), (3, 4), (4, 5), (5, 6), (6, 4)];
        edges.push((7, 8));
        let g = AttributedGraph::structure_only(10, &edges).unwrap();
        let m = build_ppr(&g, 0.1).unwrap();
        for anchor in [0, 4, 9] {
            let sparse = AnchoredInfluence::solve(&g, 0.1, anchor).unwrap();
            let dense = AnchoredInfluence::from_model(&m, anchor);
            for i in 0..10 {
                assert!((sparse.column[i] - dense.column[i]).abs() < 1e-11);
                assert!((sparse.row[i] - dense.row[i]).abs() < 1e-11);
                assert!((sparse.column_sums[i] - dense.column_sums[i]).abs() < 1e-11);
            }
        }
    }
}
