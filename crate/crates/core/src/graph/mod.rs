//! Attributed-graph data model.
//!
//! An [`AttributedGraph`] is an undirected simple graph over nodes `0..n`
//! together with a binary feature matrix. Graphs are immutable: perturbing
//! one with [`AttributedGraph::apply_flip`] produces a new value, so a clean
//! graph can be shared freely while several perturbed copies are built from
//! it.

mod generate;
mod io;
mod split;

pub use generate::{generate_chung_lu, generate_sbm, powerlaw_weights, FeatureModel, SbmConfig};
pub use io::{load_graph, save_graph, GraphFiles};
pub use split::{make_split, DataSplit, SplitRatios};

use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether a flip inserts or deletes the undirected edge `(u, v)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlipAction {
    Add,
    Remove,
}

impl FlipAction {
    /// `b_s`: +1 for an insertion, -1 for a deletion.
    pub fn sign(self) -> f64 {
        match self {
            FlipAction::Add => 1.0,
            FlipAction::Remove => -1.0,
        }
    }

    pub fn inverse(self) -> FlipAction {
        match self {
            FlipAction::Add => FlipAction::Remove,
            FlipAction::Remove => FlipAction::Add,
        }
    }
}

/// A single structural perturbation of the undirected edge `(u, v)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EdgeFlip {
    pub u: usize,
    pub v: usize,
    pub action: FlipAction,
}

impl EdgeFlip {
    pub fn new(u: usize, v: usize, action: FlipAction) -> Self {
        EdgeFlip { u, v, action }
    }

    /// The flip that toggles `(u, v)` on `graph`: a removal if the edge
    /// exists, an insertion otherwise.
    pub fn toggle(graph: &AttributedGraph, u: usize, v: usize) -> Self {
        let action = if graph.has_edge(u, v) {
            FlipAction::Remove
        } else {
            FlipAction::Add
        };
        EdgeFlip { u, v, action }
    }

    pub fn inverse(self) -> Self {
        EdgeFlip {
            action: self.action.inverse(),
            ..self
        }
    }

    /// Endpoints ordered as `(min, max)`.
    pub fn key(&self) -> (usize, usize) {
        (self.u.min(self.v), self.u.max(self.v))
    }
}

/// Which of the two classification tasks a label or model belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Target-label classification (the utility task).
    Target,
    /// Private-label classification (the adversary's task).
    Private,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Target => "target",
            Task::Private => "private",
        }
    }
}

/// Per-node target and private labels. `None` marks an unobserved label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    pub target: Vec<Option<usize>>,
    pub private: Vec<Option<u8>>,
}

impl LabelSet {
    pub fn new(target: Vec<Option<usize>>, private: Vec<Option<u8>>) -> Result<Self> {
        if target.len() != private.len() {
            return Err(Error::Shape(format!(
                "target labels cover {} nodes but private labels cover {}",
                target.len(),
                private.len()
            )));
        }
        if let Some(bad) = private.iter().flatten().find(|&&p| p > 1) {
            return Err(Error::Data(format!("private label {bad} is not binary")));
        }
        Ok(LabelSet { target, private })
    }

    /// A label set with every label unknown.
    pub fn unknown(n: usize) -> Self {
        LabelSet {
            target: vec![None; n],
            private: vec![None; n],
        }
    }

    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }

    /// Labels for one task as class indices.
    pub fn task_labels(&self, task: Task) -> Vec<Option<usize>> {
        match task {
            Task::Target => self.target.clone(),
            Task::Private => self.private.iter().map(|p| p.map(usize::from)).collect(),
        }
    }

    pub fn label(&self, task: Task, node: usize) -> Option<usize> {
        match task {
            Task::Target => self.target[node],
            Task::Private => self.private[node].map(usize::from),
        }
    }

    /// Number of classes for `task`; the private task is always binary.
    pub fn n_classes(&self, task: Task) -> usize {
        match task {
            Task::Target => self.target.iter().flatten().max().map_or(0, |&m| m + 1),
            Task::Private => 2,
        }
    }

    /// Nodes whose label for `task` is observed.
    pub fn known_mask(&self, task: Task) -> Vec<bool> {
        match task {
            Task::Target => self.target.iter().map(Option::is_some).collect(),
            Task::Private => self.private.iter().map(Option::is_some).collect(),
        }
    }
}

/// Undirected simple graph with a binary node-feature matrix.
#[derive(Debug, Clone)]
pub struct AttributedGraph {
    adjacency: Vec<Vec<usize>>,
    features: Arc<Array2<f64>>,
    n_edges: usize,
    node_ids: Option<Arc<Vec<String>>>,
    flips: usize,
}

impl PartialEq for AttributedGraph {
    /// Structural equality; the flip counter is history, not structure.
    fn eq(&self, other: &Self) -> bool {
        self.adjacency == other.adjacency
            && self.features == other.features
            && self.node_ids == other.node_ids
    }
}

impl AttributedGraph {
    /// Builds a graph from an undirected edge list. Each edge may appear once
    /// in either orientation; self-loops and repeated edges are rejected.
    pub fn from_edges(features: Array2<f64>, edges: &[(usize, usize)]) -> Result<Self> {
        let n = features.nrows();
        if let Some(bad) = features.iter().find(|&&x| x != 0.0 && x != 1.0) {
            return Err(Error::Data(format!("feature value {bad} is not binary")));
        }
        let mut adjacency = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::Data(format!(
                    "edge ({u}, {v}) references a node outside 0..{n}"
                )));
            }
            if u == v {
                return Err(Error::Data(format!("self-loop on node {u}")));
            }
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        for (u, list) in adjacency.iter_mut().enumerate() {
            list.sort_unstable();
            if let Some(w) = list.windows(2).find(|w| w[0] == w[1]) {
                return Err(Error::Data(format!("duplicate edge ({u}, {})", w[0])));
            }
        }
        Ok(AttributedGraph {
            adjacency,
            features: Arc::new(features),
            n_edges: edges.len(),
            node_ids: None,
            flips: 0,
        })
    }

    /// A featureless graph (`d = 0`), convenient for purely structural work.
    pub fn structure_only(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        Self::from_edges(Array2::zeros((n, 0)), edges)
    }

    pub fn with_node_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.n_nodes() {
            return Err(Error::Shape(format!(
                "{} node ids for {} nodes",
                ids.len(),
                self.n_nodes()
            )));
        }
        self.node_ids = Some(Arc::new(ids));
        Ok(self)
    }

    /// Same structure with a replacement feature matrix.
    pub fn with_features(&self, features: Array2<f64>) -> Result<Self> {
        if features.nrows() != self.n_nodes() {
            return Err(Error::Shape(format!(
                "feature matrix has {} rows for {} nodes",
                features.nrows(),
                self.n_nodes()
            )));
        }
        if let Some(bad) = features.iter().find(|&&x| x != 0.0 && x != 1.0) {
            return Err(Error::Data(format!("feature value {bad} is not binary")));
        }
        Ok(AttributedGraph {
            features: Arc::new(features),
            ..self.clone()
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.adjacency.len()
    }

    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn node_ids(&self) -> Option<&[String]> {
        self.node_ids.as_deref().map(Vec::as_slice)
    }

    /// Sorted neighbors of `u`.
    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.adjacency[u]
    }

    pub fn adjacency_lists(&self) -> &[Vec<usize>] {
        &self.adjacency
    }

    pub fn degree(&self, u: usize) -> usize {
        self.adjacency[u].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adjacency.iter().map(Vec::len).collect()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adjacency[u].binary_search(&v).is_ok()
    }

    /// Edges as `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(u, list)| list.iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
    }

    /// Whether `(u, v)` may be flipped by a defense: distinct endpoints that
    /// both have degree at least two.
    pub fn is_perturbable_pair(&self, u: usize, v: usize) -> bool {
        u != v && self.degree(u) >= 2 && self.degree(v) >= 2
    }

    /// Number of flips applied since construction (`N_p` for distinct flips).
    pub fn flip_count(&self) -> usize {
        self.flips
    }

    /// Checks that `flip` is applicable to this graph.
    pub fn check_flip(&self, flip: &EdgeFlip) -> Result<()> {
        let n = self.n_nodes();
        if flip.u >= n || flip.v >= n {
            return Err(Error::State(format!(
                "flip ({}, {}) references a node outside 0..{n}",
                flip.u, flip.v
            )));
        }
        if flip.u == flip.v {
            return Err(Error::State(format!("flip on self-pair ({0}, {0})", flip.u)));
        }
        let present = self.has_edge(flip.u, flip.v);
        match (flip.action, present) {
            (FlipAction::Add, true) => Err(Error::State(format!(
                "cannot add edge ({}, {}): already present",
                flip.u, flip.v
            ))),
            (FlipAction::Remove, false) => Err(Error::State(format!(
                "cannot remove edge ({}, {}): not present",
                flip.u, flip.v
            ))),
            _ => Ok(()),
        }
    }

    /// Returns the graph with `A_uv = A_vu = 1 - A_uv`.
    pub fn apply_flip(&self, flip: &EdgeFlip) -> Result<Self> {
        self.check_flip(flip)?;
        let mut next = self.clone();
        let (u, v) = (flip.u, flip.v);
        match flip.action {
            FlipAction::Add => {
                insert_sorted(&mut next.adjacency[u], v);
                insert_sorted(&mut next.adjacency[v], u);
                next.n_edges += 1;
            }
            FlipAction::Remove => {
                remove_sorted(&mut next.adjacency[u], v);
                remove_sorted(&mut next.adjacency[v], u);
                next.n_edges -= 1;
            }
        }
        next.flips += 1;
        Ok(next)
    }

    /// Applies `flips` in order.
    pub fn apply_flips<'a>(&self, flips: impl IntoIterator<Item = &'a EdgeFlip>) -> Result<Self> {
        let mut g = self.clone();
        for flip in flips {
            g = g.apply_flip(flip)?;
        }
        Ok(g)
    }

    /// `Σ|A - A'| / 2` against another graph on the same node set.
    pub fn edge_difference(&self, other: &AttributedGraph) -> usize {
        self.adjacency
            .iter()
            .zip(&other.adjacency)
            .enumerate()
            .map(|(u, (a, b))| {
                symmetric_difference_count(a, b, u)
            })
            .sum()
    }

    /// Number of triangles through `v`.
    pub fn triangles(&self, v: usize) -> usize {
        let nv = &self.adjacency[v];
        let mut twice = 0;
        for &u in nv {
            twice += intersection_count(nv, &self.adjacency[u]);
        }
        twice / 2
    }

    /// Local clustering coefficient of `v`; zero for degree below two.
    pub fn local_clustering(&self, v: usize) -> f64 {
        let d = self.degree(v);
        if d < 2 {
            return 0.0;
        }
        2.0 * self.triangles(v) as f64 / (d * (d - 1)) as f64
    }

    /// Mean local clustering coefficient over all nodes (CA).
    pub fn avg_clustering_coefficient(&self) -> f64 {
        let n = self.n_nodes();
        if n == 0 {
            return 0.0;
        }
        (0..n).map(|v| self.local_clustering(v)).sum::<f64>() / n as f64
    }

    /// Nodes within `hops` of any node in `sources` (sources included), sorted.
    pub fn within_hops(&self, sources: &[usize], hops: usize) -> Vec<usize> {
        let n = self.n_nodes();
        let mut seen = vec![false; n];
        let mut frontier: Vec<usize> = Vec::new();
        for &s in sources {
            if !seen[s] {
                seen[s] = true;
                frontier.push(s);
            }
        }
        for _ in 0..hops {
            let mut next = Vec::new();
            for &x in &frontier {
                for &y in &self.adjacency[x] {
                    if !seen[y] {
                        seen[y] = true;
                        next.push(y);
                    }
                }
            }
            frontier = next;
        }
        (0..n).filter(|&i| seen[i]).collect()
    }
}

/// Free-function form of [`AttributedGraph::avg_clustering_coefficient`].
pub fn avg_clustering_coefficient(graph: &AttributedGraph) -> f64 {
    graph.avg_clustering_coefficient()
}

/// Free-function form of [`AttributedGraph::apply_flip`].
pub fn apply_flip(graph: &AttributedGraph, flip: &EdgeFlip) -> Result<AttributedGraph> {
    graph.apply_flip(flip)
}

fn insert_sorted(list: &mut Vec<usize>, x: usize) {
    if let Err(pos) = list.binary_search(&x) {
        list.insert(pos, x);
    }
}

fn remove_sorted(list: &mut Vec<usize>, x: usize) {
    if let Ok(pos) = list.binary_search(&x) {
        list.remove(pos);
    }
}

pub(crate) fn intersection_count(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut c) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                c += 1;
                i += 1;
                j += 1;
            }
        }
    }
    c
}

// Counts entries w > u present in exactly one of the two sorted lists.
fn symmetric_difference_count(a: &[usize], b: &[usize], u: usize) -> usize {
    let a: Vec<usize> = a.iter().copied().filter(|&w| w > u).collect();
    let b: Vec<usize> = b.iter().copied().filter(|&w| w > u).collect();
    a.len() + b.len() - 2 * intersection_count(&a, &b)
}
