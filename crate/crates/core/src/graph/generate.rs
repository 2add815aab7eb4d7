//! Seeded synthetic graph generators.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AttributedGraph, LabelSet};
use crate::error::{Error, Result};

/// Bag-of-words style binary features with planted topics.
///
/// The feature columns are laid out as `target_words` columns per block,
/// then `private_words` columns per private class, then `noise_words`
/// columns. A column tied to the node's own block (or private class) is
/// switched on with probability `target_signal` (`private_signal`); every
/// other column with probability `background`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureModel {
    pub target_words: usize,
    pub private_words: usize,
    pub noise_words: usize,
    pub target_signal: f64,
    pub private_signal: f64,
    pub background: f64,
}

impl FeatureModel {
    /// No feature columns at all.
    pub fn none() -> Self {
        FeatureModel {
            target_words: 0,
            private_words: 0,
            noise_words: 0,
            target_signal: 0.0,
            private_signal: 0.0,
            background: 0.0,
        }
    }

    /// One indicator column per block, each bit flipped with probability `noise`.
    pub fn block_indicator(noise: f64) -> Self {
        FeatureModel {
            target_words: 1,
            private_words: 0,
            noise_words: 0,
            target_signal: 1.0 - noise,
            private_signal: 0.0,
            background: noise,
        }
    }

    pub fn dim(&self, n_blocks: usize) -> usize {
        self.target_words * n_blocks + self.private_words * 2 + self.noise_words
    }

    fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("target_signal", self.target_signal),
            ("private_signal", self.private_signal),
            ("background", self.background),
        ] {
            check_probability(name, p)?;
        }
        Ok(())
    }
}

/// Parameters of the attributed stochastic block model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SbmConfig {
    pub block_sizes: Vec<usize>,
    pub intra_p: f64,
    pub inter_p: f64,
    /// Relative edge-probability boost for pairs sharing a private label:
    /// the block probability is scaled by `1 + h` for agreeing pairs and by
    /// `1 - h` otherwise. Zero leaves structure independent of the private label.
    #[serde(default)]
    pub private_homophily: f64,
    /// Probability that a node's private label is 1.
    #[serde(default = "half")]
    pub private_rate: f64,
    #[serde(default = "FeatureModel::none")]
    pub features: FeatureModel,
    #[serde(default)]
    pub seed: u64,
}

fn half() -> f64 {
    0.5
}

impl SbmConfig {
    pub fn new(block_sizes: Vec<usize>, intra_p: f64, inter_p: f64, seed: u64) -> Self {
        SbmConfig {
            block_sizes,
            intra_p,
            inter_p,
            private_homophily: 0.0,
            private_rate: 0.5,
            features: FeatureModel::none(),
            seed,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.block_sizes.iter().sum()
    }
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")));
    }
    Ok(())
}

/// Samples an attributed SBM. The block id is the target label; the private
/// label is an independent Bernoulli draw per node.
pub fn generate_sbm(config: &SbmConfig) -> Result<(AttributedGraph, LabelSet)> {
    check_probability("intra_p", config.intra_p)?;
    check_probability("inter_p", config.inter_p)?;
    check_probability("private_rate", config.private_rate)?;
    if !(0.0..=1.0).contains(&config.private_homophily) {
        return Err(Error::Config(format!(
            "private_homophily must lie in [0, 1], got {}",
            config.private_homophily
        )));
    }
    config.features.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let block: Vec<usize> = config
        .block_sizes
        .iter()
        .enumerate()
        .flat_map(|(b, &size)| std::iter::repeat_n(b, size))
        .collect();
    let n = block.len();
    let private: Vec<u8> = (0..n)
        .map(|_| u8::from(rng.random_bool(config.private_rate)))
        .collect();

    let h = config.private_homophily;
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let base = if block[u] == block[v] {
                config.intra_p
            } else {
                config.inter_p
            };
            let p = if private[u] == private[v] {
                base * (1.0 + h)
            } else {
                base * (1.0 - h)
            };
            if rng.random::<f64>() < p.min(1.0) {
                edges.push((u, v));
            }
        }
    }

    let fm = &config.features;
    let n_blocks = config.block_sizes.len();
    let dim = fm.dim(n_blocks);
    let private_offset = fm.target_words * n_blocks;
    let noise_offset = private_offset + fm.private_words * 2;
    let mut x = Array2::zeros((n, dim));
    for i in 0..n {
        for col in 0..dim {
            let p = if col < private_offset {
                if col / fm.target_words == block[i] {
                    fm.target_signal
                } else {
                    fm.background
                }
            } else if col < noise_offset {
                if (col - private_offset) / fm.private_words == private[i] as usize {
                    fm.private_signal
                } else {
                    fm.background
                }
            } else {
                fm.background
            };
            if rng.random::<f64>() < p {
                x[[i, col]] = 1.0;
            }
        }
    }

    let graph = AttributedGraph::from_edges(x, &edges)?;
    let labels = LabelSet::new(
        block.into_iter().map(Some).collect(),
        private.into_iter().map(Some).collect(),
    )?;
    Ok((graph, labels))
}

/// Pareto-distributed expected degrees with tail exponent `exponent`,
/// capped so that every Chung–Lu edge probability stays at most one.
pub fn powerlaw_weights(n: usize, exponent: f64, w_min: f64, seed: u64) -> Result<Vec<f64>> {
    if !(exponent > 1.0) || !(w_min > 0.0) {
        return Err(Error::Config(format!(
            "power-law weights need exponent > 1 and w_min > 0, got {exponent}, {w_min}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w: Vec<f64> = (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            w_min * (1.0 - u).powf(-1.0 / (exponent - 1.0))
        })
        .collect();
    let cap = w.iter().sum::<f64>().sqrt();
    for x in &mut w {
        *x = x.min(cap);
    }
    Ok(w)
}

/// Chung–Lu random graph: edge `(i, j)` present with probability
/// `min(1, w_i w_j / Σw)`. Featureless.
pub fn generate_chung_lu(weights: &[f64], seed: u64) -> Result<AttributedGraph> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Config("Chung-Lu weights must have positive sum".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = weights.len();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let p = (weights[u] * weights[v] / total).min(1.0);
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    AttributedGraph::structure_only(n, &edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_and_complete_blocks() {
        let (g, labels) = generate_sbm(&SbmConfig::new(vec![4, 3], 0.0, 0.0, 1)).unwrap();
        assert_eq!(g.n_edges(), 0);
        assert_eq!(labels.target, vec![Some(0), Some(0), Some(0), Some(0), Some(1), Some(1), Some(1)]);

        let (g, _) = generate_sbm(&SbmConfig::new(vec![3, 3], 1.0, 0.0, 1)).unwrap();
        let edges: Vec<_> = g.edges().collect();
        assert_eq!(edges, vec![(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5)]);
    }

    #[test]
    fn seeded_determinism() {
        let mut cfg = SbmConfig::new(vec![20, 20], 0.3, 0.05, 9);
        cfg.features = FeatureModel::block_indicator(0.1);
        let a = generate_sbm(&cfg).unwrap();
        let b = generate_sbm(&cfg).unwrap();
        assert_eq!(a, b);
        cfg.seed = 10;
        assert_ne!(a.0, generate_sbm(&cfg).unwrap().0);
    }

    #[test]
    fn edge_count_matches_binomial_expectation() {
        // E|E| = 0.1 * 2 * C(50, 2) + 0.01 * 50 * 50 = 270,
        // Var = 2450 * 0.1 * 0.9 + 2500 * 0.01 * 0.99.
        let mean = 0.1 * 2.0 * 1225.0 + 0.01 * 2500.0;
        let sd = (2450.0 * 0.09 + 2500.0 * 0.0099f64).sqrt();
        for seed in 0..10 {
            let (g, _) = generate_sbm(&SbmConfig::new(vec![50, 50], 0.1, 0.01, seed)).unwrap();
            let e = g.n_edges() as f64;
            assert!((e - mean).abs() < 3.0 * sd, "seed {seed}: {e} edges");
        }
    }

    #[test]
    fn feature_layout() {
        let mut cfg = SbmConfig::new(vec![5, 5], 0.0, 0.0, 3);
        cfg.features = FeatureModel {
            target_words: 2,
            private_words: 1,
            noise_words: 3,
            target_signal: 1.0,
            private_signal: 1.0,
            background: 0.0,
        };
        let (g, labels) = generate_sbm(&cfg).unwrap();
        assert_eq!(g.feature_dim(), 2 * 2 + 2 + 3);
        for i in 0..10 {
            let row = g.features().row(i);
            let b = labels.target[i].unwrap();
            let p = labels.private[i].unwrap() as usize;
            assert_eq!(row[2 * b], 1.0);
            assert_eq!(row[2 * b + 1], 1.0);
            assert_eq!(row[4 + p], 1.0);
            assert_eq!(row.sum(), 3.0);
        }
    }

    #[test]
    fn invalid_probabilities_rejected() {
        assert!(generate_sbm(&SbmConfig::new(vec![2], 1.5, 0.0, 0)).is_err());
        assert!(powerlaw_weights(10, 1.0, 1.0, 0).is_err());
    }
}
