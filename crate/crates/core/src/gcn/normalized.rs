//! Symmetrically normalized adjacency `Â = D̃^{-1/2}(A + I)D̃^{-1/2}` and
//! its square, with an exact incremental update of `Â²` under one edge flip.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::graph::{AttributedGraph, EdgeFlip};

/// Sparse symmetric matrix stored as sorted rows of `(column, value)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymmetric {
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseSymmetric {
    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = &self.rows[i];
        match row.binary_search_by_key(&j, |&(c, _)| c) {
            Ok(pos) => row[pos].1,
            Err(_) => 0.0,
        }
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let n = self.n();
        let mut out = Array2::zeros((n, n));
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, x) in row {
                out[[i, j]] = x;
            }
        }
        out
    }

    /// `self · rhs`.
    pub fn matmul(&self, rhs: &ArrayView2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((self.n(), rhs.ncols()));
        for (i, row) in self.rows.iter().enumerate() {
            let mut target = out.row_mut(i);
            for &(j, x) in row {
                target.scaled_add(x, &rhs.row(j));
            }
        }
        out
    }

    /// `Σ_j self[i, j] · rhs[j, :]` for a single row.
    pub fn row_times(&self, i: usize, rhs: &ArrayView2<f64>) -> ndarray::Array1<f64> {
        row_times(&self.rows[i], rhs)
    }
}

pub(crate) fn row_times(row: &[(usize, f64)], rhs: &ArrayView2<f64>) -> ndarray::Array1<f64> {
    let mut out = ndarray::Array1::zeros(rhs.ncols());
    for &(j, x) in row {
        out.scaled_add(x, &rhs.row(j));
    }
    out
}

/// `Â`, `Â²` and the self-loop degrees `d̃ = deg + 1` of one graph.
#[derive(Debug, Clone)]
pub struct NormalizedAdjacency {
    pub a_hat: SparseSymmetric,
    pub a_hat_sq: SparseSymmetric,
    pub d_tilde: Vec<f64>,
    graph: AttributedGraph,
}

pub fn build_normalized(graph: &AttributedGraph) -> NormalizedAdjacency {
    NormalizedAdjacency::build(graph)
}

impl NormalizedAdjacency {
    pub fn build(graph: &AttributedGraph) -> Self {
        let n = graph.n_nodes();
        let d_tilde: Vec<f64> = (0..n).map(|i| (graph.degree(i) + 1) as f64).collect();
        let a_rows = (0..n).map(|i| a_hat_row(graph, &d_tilde, i)).collect();
        let mut sq_rows: Vec<Vec<(usize, f64)>> =
            (0..n).map(|i| a2_row_direct(graph, &d_tilde, i)).collect();
        // Mirror the upper triangle so the stored matrix is bitwise symmetric.
        for i in 1..n {
            let (upper, rest) = sq_rows.split_at_mut(i);
            for entry in rest[0].iter_mut().take_while(|e| e.0 < i) {
                let row = &upper[entry.0];
                let pos = row
                    .binary_search_by_key(&i, |&(c, _)| c)
                    .expect("2-hop relation is symmetric");
                entry.1 = row[pos].1;
            }
        }
        NormalizedAdjacency {
            a_hat: SparseSymmetric { rows: a_rows },
            a_hat_sq: SparseSymmetric { rows: sq_rows },
            d_tilde,
            graph: graph.clone(),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.d_tilde.len()
    }

    /// The graph these matrices were computed from.
    pub fn graph(&self) -> &AttributedGraph {
        &self.graph
    }

    /// Row `i` of `Â′²` after `flip`, without updating anything else.
    pub fn row_after_flip(&self, flip: &EdgeFlip, i: usize) -> Result<Vec<(usize, f64)>> {
        self.graph.check_flip(flip)?;
        let view = FlipView::new(self, flip);
        if !view.is_affected(i) {
            return Ok(self.a_hat_sq.row(i).to_vec());
        }
        Ok(view.updated_row(i))
    }

    /// The normalized matrices of the flipped graph, updated in place of a
    /// full recompute. Entries outside the 2-hop neighbourhood of the
    /// flipped pair are copied bitwise.
    pub fn apply_flip(&self, flip: &EdgeFlip) -> Result<NormalizedAdjacency> {
        self.graph.check_flip(flip)?;
        let view = FlipView::new(self, flip);
        let mut sq_rows = self.a_hat_sq.rows.clone();
        for &i in &view.affected {
            sq_rows[i] = view.updated_row(i);
        }
        let (k, m) = (flip.u, flip.v);
        let mut d_new = self.d_tilde.clone();
        d_new[k] = view.dn(k);
        d_new[m] = view.dn(m);
        let new_graph = self.graph.apply_flip(flip)?;
        let mut a_rows = self.a_hat.rows.clone();
        let mut touched: Vec<usize> = vec![k, m];
        touched.extend_from_slice(self.graph.neighbors(k));
        touched.extend_from_slice(self.graph.neighbors(m));
        touched.sort_unstable();
        touched.dedup();
        for &i in &touched {
            a_rows[i] = a_hat_row(&new_graph, &d_new, i);
        }
        Ok(NormalizedAdjacency {
            a_hat: SparseSymmetric { rows: a_rows },
            a_hat_sq: SparseSymmetric { rows: sq_rows },
            d_tilde: d_new,
            graph: new_graph,
        })
    }
}

/// Free-function form of [`NormalizedAdjacency::apply_flip`].
pub fn incremental_a2_update(norm: &NormalizedAdjacency, flip: &EdgeFlip) -> Result<NormalizedAdjacency> {
    norm.apply_flip(flip)
}

fn a_hat_row(graph: &AttributedGraph, d_tilde: &[f64], i: usize) -> Vec<(usize, f64)> {
    let mut row: Vec<(usize, f64)> = graph
        .neighbors(i)
        .iter()
        .map(|&j| (j, 1.0 / (d_tilde[i] * d_tilde[j]).sqrt()))
        .collect();
    let pos = row.partition_point(|&(j, _)| j < i);
    row.insert(pos, (i, 1.0 / d_tilde[i]));
    row
}

// Row i of Â² from its definition: Σ_l ã_il ã_lj / (d̃_l √(d̃_i d̃_j)).
fn a2_row_direct(graph: &AttributedGraph, d_tilde: &[f64], i: usize) -> Vec<(usize, f64)> {
    let mut acc: Vec<(usize, f64)> = Vec::new();
    let mut push = |j: usize, w: f64| acc.push((j, w));
    let through = |l: usize, push: &mut dyn FnMut(usize, f64)| {
        let w = 1.0 / d_tilde[l];
        push(l, w);
        for &j in graph.neighbors(l) {
            push(j, w);
        }
    };
    through(i, &mut push);
    for &l in graph.neighbors(i) {
        through(l, &mut push);
    }
    acc.sort_by_key(|&(j, _)| j);
    let mut row: Vec<(usize, f64)> = Vec::with_capacity(acc.len());
    for (j, w) in acc {
        match row.last_mut() {
            Some(last) if last.0 == j => last.1 += w,
            _ => row.push((j, w)),
        }
    }
    for (j, x) in &mut row {
        *x /= (d_tilde[i] * d_tilde[*j]).sqrt();
    }
    row
}

// The graph after flipping (k, m), seen through the unflipped one, with
// everything the element-wise update rule needs. Adjacency queries go
// through dense masks so one entry costs O(1).
struct FlipView<'a> {
    norm: &'a NormalizedAdjacency,
    k: usize,
    m: usize,
    adding: bool,
    /// Nodes within two hops of {k, m} in the union of both graphs.
    affected: Vec<usize>,
    in_affected: Vec<bool>,
    adj_k: Vec<bool>,
    adj_m: Vec<bool>,
}

impl<'a> FlipView<'a> {
    fn new(norm: &'a NormalizedAdjacency, flip: &EdgeFlip) -> Self {
        let (k, m) = (flip.u, flip.v);
        let n = norm.n_nodes();
        let adding = !norm.graph.has_edge(k, m);
        let mask = |x: usize| {
            let mut v = vec![false; n];
            for &y in norm.graph.neighbors(x) {
                v[y] = true;
            }
            v
        };
        let mut view = FlipView {
            norm,
            k,
            m,
            adding,
            affected: Vec::new(),
            in_affected: vec![false; n],
            adj_k: mask(k),
            adj_m: mask(m),
        };
        // The union graph is whichever of the two contains (k, m).
        let (affected, in_affected) = view.ball(&[k, m], true);
        view.affected = affected;
        view.in_affected = in_affected;
        view
    }

    fn old(&self) -> &AttributedGraph {
        &self.norm.graph
    }

    fn is_affected(&self, x: usize) -> bool {
        self.in_affected[x]
    }

    fn is_pair(&self, x: usize, y: usize) -> bool {
        (x == self.k && y == self.m) || (x == self.m && y == self.k)
    }

    // Old adjacency between x and an endpoint l of the flipped pair.
    fn a_old_end(&self, x: usize, l: usize) -> f64 {
        let mask = if l == self.k { &self.adj_k } else { &self.adj_m };
        f64::from(u8::from(mask[x]))
    }

    fn a_new_end(&self, x: usize, l: usize) -> f64 {
        if self.is_pair(x, l) {
            f64::from(u8::from(self.adding))
        } else {
            self.a_old_end(x, l)
        }
    }

    fn dn(&self, x: usize) -> f64 {
        let d = self.norm.d_tilde[x];
        if x == self.k || x == self.m {
            if self.adding {
                d + 1.0
            } else {
                d - 1.0
            }
        } else {
            d
        }
    }

    // Calls `f` on the neighbours of x in the new graph (with_pair = adding)
    // or in the union graph (with_pair = true).
    fn for_each_neighbor(&self, x: usize, with_pair: bool, mut f: impl FnMut(usize)) {
        let other = if x == self.k {
            Some(self.m)
        } else if x == self.m {
            Some(self.k)
        } else {
            None
        };
        for &y in self.old().neighbors(x) {
            if with_pair || Some(y) != other {
                f(y);
            }
        }
        if let Some(o) = other {
            if with_pair && !self.old().has_edge(x, o) {
                f(o);
            }
        }
    }

    // Nodes within two hops of `sources`, with a membership mask.
    fn ball(&self, sources: &[usize], with_pair: bool) -> (Vec<usize>, Vec<bool>) {
        let mut seen = vec![false; self.norm.n_nodes()];
        let mut out = Vec::new();
        let mut visit = |x: usize, out: &mut Vec<usize>| {
            if !seen[x] {
                seen[x] = true;
                out.push(x);
            }
        };
        for &s in sources {
            visit(s, &mut out);
        }
        let mut first = Vec::new();
        for &s in sources {
            self.for_each_neighbor(s, with_pair, |y| first.push(y));
        }
        for &x in &first {
            visit(x, &mut out);
        }
        for &x in &first {
            self.for_each_neighbor(x, with_pair, |y| visit(y, &mut out));
        }
        (out, seen)
    }

    fn updated_row(&self, i: usize) -> Vec<(usize, f64)> {
        let n = self.norm.n_nodes();
        // Columns that can be non-zero afterwards: the new 2-hop ball of i.
        let (mut cols, _) = self.ball(&[i], self.adding);
        cols.sort_unstable();
        let mut old_row = vec![0.0; n];
        for &(j, x) in self.norm.a_hat_sq.row(i) {
            old_row[j] = x;
        }
        let mut adj_i = vec![false; n];
        for &y in self.old().neighbors(i) {
            adj_i[y] = true;
        }
        cols.into_iter()
            .map(|j| {
                let value = if self.is_affected(j) {
                    self.updated_entry(i.min(j), i.max(j), adj_i[j], old_row[j])
                } else {
                    old_row[j]
                };
                (j, value)
            })
            .collect()
    }

    // The element-wise update of Â²_ij, evaluated with i ≤ j so that the
    // result is bitwise symmetric. `a_ij` and `sq_ij` are the old adjacency
    // and old Â² entry.
    fn updated_entry(&self, i: usize, j: usize, a_ij: bool, sq_ij: f64) -> f64 {
        let d = &self.norm.d_tilde;
        let a_tilde_old = if i == j { 1.0 } else { f64::from(u8::from(a_ij)) };
        let a_tilde_new = if i == j {
            1.0
        } else if self.is_pair(i, j) {
            f64::from(u8::from(self.adding))
        } else {
            a_tilde_old
        };

        let mut acc = (d[i] * d[j]).sqrt() * sq_ij;
        // Paths through i or j themselves; on the diagonal they coincide.
        if i == j {
            acc += 1.0 / self.dn(i) - 1.0 / d[i];
        } else {
            acc += a_tilde_new / self.dn(i) - a_tilde_old / d[i] + a_tilde_new / self.dn(j)
                - a_tilde_old / d[j];
        }
        // Paths through an endpoint of the flipped pair.
        for l in [self.k, self.m] {
            if l == i || l == j {
                continue;
            }
            acc += self.a_new_end(i, l) * self.a_new_end(j, l) / self.dn(l)
                - self.a_old_end(i, l) * self.a_old_end(j, l) / d[l];
        }
        acc / (self.dn(i) * self.dn(j)).sqrt()
    }
}

/// Checks that the matrices agree with a fresh computation on their graph;
/// returns the largest absolute deviation of `Â²`.
pub fn max_a2_deviation(norm: &NormalizedAdjacency) -> Result<f64> {
    let fresh = NormalizedAdjacency::build(&norm.graph);
    if fresh.n_nodes() != norm.n_nodes() {
        return Err(Error::Shape("node count changed".into()));
    }
    let a = fresh.a_hat_sq.to_dense();
    let b = norm.a_hat_sq.to_dense();
    Ok((&a - &b).iter().fold(0.0f64, |m, x| m.max(x.abs())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::FlipAction;
    use ndarray::array;

    fn dense_a_hat(g: &AttributedGraph) -> Array2<f64> {
        let n = g.n_nodes();
        let mut a = Array2::<f64>::eye(n);
        for (u, v) in g.edges() {
            a[[u, v]] = 1.0;
            a[[v, u]] = 1.0;
        }
        let d: Vec<f64> = a.rows().into_iter().map(|r| r.sum()).collect();
        Array2::from_shape_fn((n, n), |(i, j)| a[[i, j]] / (d[i] * d[j]).sqrt())
    }

    #[test]
    fn isolated_node_and_single_edge() {
        let g = AttributedGraph::structure_only(1, &[]).unwrap();
        let norm = build_normalized(&g);
        assert_eq!(norm.a_hat.to_dense(), array![[1.0]]);
        assert_eq!(norm.a_hat_sq.to_dense(), array![[1.0]]);

        let g = AttributedGraph::structure_only(2, &[(0, 1)]).unwrap();
        let norm = build_normalized(&g);
        assert_eq!(norm.a_hat.to_dense(), array![[0.5, 0.5], [0.5, 0.5]]);
    }

    #[test]
    fn square_matches_dense_product() {
        let g = AttributedGraph::structure_only(3, &[(0, 1), (1, 2)]).unwrap();
        let norm = build_normalized(&g);
        let a = dense_a_hat(&g);
        let sq = a.dot(&a);
        let got = norm.a_hat_sq.to_dense();
        for (x, y) in got.iter().zip(sq.iter()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn flip_matches_recompute_and_inverts() {
        let g = AttributedGraph::structure_only(
            6,
            &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 2)],
        )
        .unwrap();
        let norm = build_normalized(&g);
        for flip in [
            EdgeFlip::new(1, 2, FlipAction::Remove),
            EdgeFlip::new(0, 5, FlipAction::Add),
            EdgeFlip::new(3, 1, FlipAction::Add),
        ] {
            let updated = norm.apply_flip(&flip).unwrap();
            assert!(max_a2_deviation(&updated).unwrap() < 1e-12);
            let fresh = build_normalized(&g.apply_flip(&flip).unwrap());
            assert_eq!(updated.a_hat, fresh.a_hat);
            assert_eq!(updated.d_tilde, fresh.d_tilde);
            let row = norm.row_after_flip(&flip, flip.u).unwrap();
            assert_eq!(row, updated.a_hat_sq.row(flip.u));
            let back = updated.apply_flip(&flip.inverse()).unwrap();
            let dev = (&back.a_hat_sq.to_dense() - &norm.a_hat_sq.to_dense())
                .iter()
                .fold(0.0f64, |m, x| m.max(x.abs()));
            assert!(dev < 1e-12);
        }
    }

    #[test]
    fn invalid_flip_is_state_error() {
        let g = AttributedGraph::structure_only(3, &[(0, 1)]).unwrap();
        let norm = build_normalized(&g);
        assert!(matches!(
            norm.apply_flip(&EdgeFlip::new(0, 1, FlipAction::Add)),
            Err(Error::State(_))
        ));
    }
}
