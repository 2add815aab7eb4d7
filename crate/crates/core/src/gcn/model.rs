use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::normalized::NormalizedAdjacency;
use crate::error::{Error, Result};
use crate::graph::{DataSplit, Task};

/// Optimizer and architecture settings for the 2-layer GCN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub hidden_dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Keep the weights of the epoch with the best validation accuracy.
    pub select_on_validation: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden_dim: 16,
            epochs: 200,
            learning_rate: 0.01,
            weight_decay: 5e-4,
            select_on_validation: true,
            seed: 0,
        }
    }
}

/// A trained GCN for one task, plus the collapsed surrogate weight.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnModel {
    pub w1: Array2<f64>,
    pub w2: Array2<f64>,
    /// `W′ = W⁽¹⁾W⁽²⁾`, always derived, never trained.
    pub w_prime: Array2<f64>,
    pub task: Task,
    pub seed: u64,
    /// Epoch (1-based) whose weights were kept; 0 for untrained weights.
    pub best_epoch: usize,
}

impl GcnModel {
    pub fn from_weights(w1: Array2<f64>, w2: Array2<f64>, task: Task, seed: u64) -> Result<Self> {
        if w1.ncols() != w2.nrows() {
            return Err(Error::Shape(format!(
                "W1 is {}x{} but W2 is {}x{}",
                w1.nrows(),
                w1.ncols(),
                w2.nrows(),
                w2.ncols()
            )));
        }
        let w_prime = w1.dot(&w2);
        Ok(GcnModel {
            w1,
            w2,
            w_prime,
            task,
            seed,
            best_epoch: 0,
        })
    }

    /// Glorot-uniform weights drawn from `seed`.
    pub fn initialize(
        feature_dim: usize,
        hidden_dim: usize,
        n_classes: usize,
        task: Task,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w1 = glorot(&mut rng, feature_dim, hidden_dim);
        let w2 = glorot(&mut rng, hidden_dim, n_classes);
        GcnModel::from_weights(w1, w2, task, seed).expect("shapes agree by construction")
    }

    pub fn feature_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.w2.ncols()
    }
}

fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Array2<f64> {
    let limit = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
    Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-limit..=limit))
}

pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        row.mapv_inplace(|x| (x - max).exp());
        let s = row.sum();
        row.mapv_inplace(|x| x / s);
    }
    out
}

pub fn softmax(row: ArrayView1<f64>) -> Array1<f64> {
    let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let e = row.mapv(|x| (x - max).exp());
    let s = e.sum();
    e / s
}

fn check_features(norm: &NormalizedAdjacency, x: &ArrayView2<f64>, feature_dim: usize) -> Result<()> {
    if x.nrows() != norm.n_nodes() || x.ncols() != feature_dim {
        return Err(Error::Shape(format!(
            "features are {}x{}, expected {}x{}",
            x.nrows(),
            x.ncols(),
            norm.n_nodes(),
            feature_dim
        )));
    }
    Ok(())
}

/// `Z = softmax(Â relu(ÂXW⁽¹⁾) W⁽²⁾)`.
pub fn predict_full(model: &GcnModel, norm: &NormalizedAdjacency, x: &Array2<f64>) -> Result<Array2<f64>> {
    check_features(norm, &x.view(), model.feature_dim())?;
    let ax = norm.a_hat.matmul(&x.view());
    Ok(softmax_rows(&forward(norm, &ax, &model.w1, &model.w2).logits))
}

/// Raw surrogate scores `Z′ = Â²XW′`.
pub fn predict_surrogate(
    model: &GcnModel,
    norm: &NormalizedAdjacency,
    x: &Array2<f64>,
) -> Result<Array2<f64>> {
    check_features(norm, &x.view(), model.feature_dim())?;
    let xw = x.dot(&model.w_prime);
    Ok(norm.a_hat_sq.matmul(&xw.view()))
}

/// `Z[node, true] − max_{c ≠ true} Z[node, c]`.
pub fn classification_margin(z: &Array2<f64>, node: usize, true_label: usize) -> f64 {
    row_margin(z.row(node), true_label)
}

pub fn row_margin(row: ArrayView1<f64>, true_label: usize) -> f64 {
    let other = row
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != true_label)
        .map(|(_, &p)| p)
        .fold(f64::NEG_INFINITY, f64::max);
    row[true_label] - other
}

/// Row-wise argmax; ties go to the lowest class index.
pub fn argmax_rows(z: &Array2<f64>) -> Vec<usize> {
    z.rows()
        .into_iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (c, &p)| if p > best.1 { (c, p) } else { best })
                .0
        })
        .collect()
}

/// Change of the surrogate scores when feature `l` of node `k` is flipped:
/// row `i` changes by `Â²_ik · h · W′_l` with `h = ±1`.
pub fn perturb_feature_experimental(
    model: &GcnModel,
    norm: &NormalizedAdjacency,
    x: &Array2<f64>,
    k: usize,
    l: usize,
) -> Result<Array2<f64>> {
    check_features(norm, &x.view(), model.feature_dim())?;
    if k >= x.nrows() || l >= x.ncols() {
        return Err(Error::Shape(format!("feature ({k}, {l}) out of range")));
    }
    let h = if x[[k, l]] == 0.0 { 1.0 } else { -1.0 };
    let w_row = model.w_prime.row(l);
    let mut out = Array2::zeros((x.nrows(), model.n_classes()));
    for &(i, a) in norm.a_hat_sq.row(k) {
        out.row_mut(i).scaled_add(a * h, &w_row);
    }
    Ok(out)
}

struct Forward {
    h1: Array2<f64>,
    ar: Array2<f64>,
    logits: Array2<f64>,
}

fn forward(norm: &NormalizedAdjacency, ax: &Array2<f64>, w1: &Array2<f64>, w2: &Array2<f64>) -> Forward {
    let h1 = ax.dot(w1);
    let r = h1.mapv(|v| v.max(0.0));
    let ar = norm.a_hat.matmul(&r.view());
    let logits = ar.dot(w2);
    Forward { h1, ar, logits }
}

/// Training loss `−Σ_{v∈train} ln Z_{v,y_v} + (λ/2)‖W⁽¹⁾‖²` and its gradients
/// with respect to `W⁽¹⁾` and `W⁽²⁾`.
pub fn loss_and_gradients(
    norm: &NormalizedAdjacency,
    x: &Array2<f64>,
    w1: &Array2<f64>,
    w2: &Array2<f64>,
    labels: &[Option<usize>],
    train: &[usize],
    weight_decay: f64,
) -> Result<(f64, Array2<f64>, Array2<f64>)> {
    check_features(norm, &x.view(), w1.nrows())?;
    let ax = norm.a_hat.matmul(&x.view());
    Ok(loss_grad_inner(norm, &ax, w1, w2, labels, train, weight_decay))
}

fn loss_grad_inner(
    norm: &NormalizedAdjacency,
    ax: &Array2<f64>,
    w1: &Array2<f64>,
    w2: &Array2<f64>,
    labels: &[Option<usize>],
    train: &[usize],
    weight_decay: f64,
) -> (f64, Array2<f64>, Array2<f64>) {
    let f = forward(norm, ax, w1, w2);
    let z = softmax_rows(&f.logits);
    let mut d_logits = Array2::zeros(z.raw_dim());
    let mut loss = 0.0;
    for &v in train {
        let y = labels[v].expect("training labels checked before training");
        loss -= z[[v, y]].max(f64::MIN_POSITIVE).ln();
        let mut row = d_logits.row_mut(v);
        row.assign(&z.row(v));
        row[y] -= 1.0;
    }
    loss += 0.5 * weight_decay * w1.iter().map(|w| w * w).sum::<f64>();

    let g2 = f.ar.t().dot(&d_logits);
    let d_ar = d_logits.dot(&w2.t());
    let mut d_h1 = norm.a_hat.matmul(&d_ar.view());
    d_h1.zip_mut_with(&f.h1, |g, &h| {
        if h <= 0.0 {
            *g = 0.0
        }
    });
    let mut g1 = ax.t().dot(&d_h1);
    g1.scaled_add(weight_decay, w1);
    (loss, g1, g2)
}

struct Adam {
    m: Array2<f64>,
    v: Array2<f64>,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(shape: (usize, usize)) -> Self {
        Adam {
            m: Array2::zeros(shape),
            v: Array2::zeros(shape),
        }
    }

    fn step(&mut self, w: &mut Array2<f64>, g: &Array2<f64>, lr: f64, t: i32) {
        let c1 = 1.0 - Self::BETA1.powi(t);
        let c2 = 1.0 - Self::BETA2.powi(t);
        ndarray::Zip::from(w)
            .and(&mut self.m)
            .and(&mut self.v)
            .and(g)
            .for_each(|w, m, v, &g| {
                *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
                *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
                *w -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
            });
    }
}

fn accuracy(logits: &Array2<f64>, labels: &[Option<usize>], nodes: &[usize]) -> f64 {
    if nodes.is_empty() {
        return 0.0;
    }
    let pred = argmax_rows(logits);
    let correct = nodes
        .iter()
        .filter(|&&v| labels[v] == Some(pred[v]))
        .count();
    correct as f64 / nodes.len() as f64
}

/// Full-batch training of the 2-layer GCN for `task` on one graph.
pub fn train_gcn(
    norm: &NormalizedAdjacency,
    x: &Array2<f64>,
    labels: &[Option<usize>],
    n_classes: usize,
    split: &DataSplit,
    task: Task,
    config: &TrainConfig,
) -> Result<GcnModel> {
    if split.train.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    if labels.len() != norm.n_nodes() {
        return Err(Error::Shape(format!(
            "{} labels for {} nodes",
            labels.len(),
            norm.n_nodes()
        )));
    }
    if x.nrows() != norm.n_nodes() {
        return Err(Error::Shape(format!(
            "feature matrix has {} rows for {} nodes",
            x.nrows(),
            norm.n_nodes()
        )));
    }
    for &v in &split.train {
        match labels[v] {
            None => {
                return Err(Error::Data(format!(
                    "training node {v} has no {} label",
                    task.as_str()
                )))
            }
            Some(y) if y >= n_classes => {
                return Err(Error::Data(format!("label {y} of node {v} >= {n_classes} classes")))
            }
            _ => {}
        }
    }
    let validation: Vec<usize> = split
        .validation
        .iter()
        .copied()
        .filter(|&v| labels[v].is_some())
        .collect();

    let mut model = GcnModel::initialize(x.ncols(), config.hidden_dim, n_classes, task, config.seed);
    let ax = norm.a_hat.matmul(&x.view());
    let mut opt1 = Adam::new(model.w1.dim());
    let mut opt2 = Adam::new(model.w2.dim());
    let mut best: Option<(f64, usize, Array2<f64>, Array2<f64>)> = None;

    for epoch in 1..=config.epochs {
        let (loss, g1, g2) = loss_grad_inner(
            norm,
            &ax,
            &model.w1,
            &model.w2,
            labels,
            &split.train,
            config.weight_decay,
        );
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("training loss diverged at epoch {epoch}")));
        }
        opt1.step(&mut model.w1, &g1, config.learning_rate, epoch as i32);
        opt2.step(&mut model.w2, &g2, config.learning_rate, epoch as i32);

        if config.select_on_validation && !validation.is_empty() {
            let logits = forward(norm, &ax, &model.w1, &model.w2).logits;
            let acc = accuracy(&logits, labels, &validation);
            if best.as_ref().is_none_or(|b| acc >= b.0) {
                best = Some((acc, epoch, model.w1.clone(), model.w2.clone()));
            }
        }
    }
    match best {
        Some((_, epoch, w1, w2)) => {
            model.w1 = w1;
            model.w2 = w2;
            model.best_epoch = epoch;
        }
        None => model.best_epoch = config.epochs,
    }
    model.w_prime = model.w1.dot(&model.w2);
    log::debug!(
        "trained {} model, kept epoch {}",
        task.as_str(),
        model.best_epoch
    );
    Ok(model)
}

/// Per-node margins of `z` against `labels`; `None` where the label is unknown.
pub fn margins(z: &Array2<f64>, labels: &[Option<usize>]) -> Vec<Option<f64>> {
    labels
        .iter()
        .enumerate()
        .map(|(v, y)| y.map(|y| classification_margin(z, v, y)))
        .collect()
}

/// Mean of each column of `z` over `nodes` (diagnostics).
pub fn mean_rows(z: &Array2<f64>, nodes: &[usize]) -> Array1<f64> {
    z.select(Axis(0), nodes).mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(z.ncols()))
}
