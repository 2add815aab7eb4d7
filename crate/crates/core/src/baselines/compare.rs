//! Static candidate orderings and their effect on local structure, measured
//! by the average clustering coefficient (CA) after each flip.

use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::powerlaw::{DegreeTestConfig, DegreeTestState};
use crate::error::{Error, Result};
use crate::graph::{AttributedGraph, EdgeFlip};
use crate::ppr::{delta_symmetric, DenominatorForm, PprModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateStrategy {
    /// Uniformly drawn edges.
    Random,
    /// The edge whose removal least changes the power-law fit, greedily.
    DegreeTest,
    /// Ascending influence with the `1 − c′M_vu` denominator.
    PprOriginal,
    /// Ascending influence with the `1 + c′M_uv` denominator.
    PprRevised,
}

impl CandidateStrategy {
    pub const ALL: [CandidateStrategy; 4] = [
        CandidateStrategy::Random,
        CandidateStrategy::DegreeTest,
        CandidateStrategy::PprOriginal,
        CandidateStrategy::PprRevised,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CandidateStrategy::Random => "random",
            CandidateStrategy::DegreeTest => "degree_test",
            CandidateStrategy::PprOriginal => "ppr_original",
            CandidateStrategy::PprRevised => "ppr_revised",
        }
    }
}

impl FromStr for CandidateStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CandidateStrategy::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown candidate strategy `{s}`")))
    }
}

/// Flips of one strategy and CA before the first flip and after each one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub strategy: CandidateStrategy,
    pub flips: Vec<EdgeFlip>,
    pub ca: Vec<f64>,
}

impl Trajectory {
    /// `CA(clean) − CA(final)`.
    pub fn ca_drop(&self) -> f64 {
        self.ca[0] - self.ca[self.ca.len() - 1]
    }
}

/// Picks up to `n_flips` existing edges per strategy on the clean graph,
/// removes them in order and records CA after every removal. Only edges
/// whose endpoints both have degree at least two are eligible.
pub fn candidate_strategy_compare(
    graph: &AttributedGraph,
    strategies: &[CandidateStrategy],
    n_flips: usize,
    alpha: f64,
    seed: u64,
    degree_test: DegreeTestConfig,
) -> Result<Vec<Trajectory>> {
    if n_flips > graph.n_edges() {
        return Err(Error::Config(format!(
            "compare.n_flips = {n_flips} exceeds the edge count {}",
            graph.n_edges()
        )));
    }
    let needs_ppr = strategies
        .iter()
        .any(|s| matches!(s, CandidateStrategy::PprOriginal | CandidateStrategy::PprRevised));
    let model = if needs_ppr && n_flips > 0 {
        Some(PprModel::build(graph, alpha)?)
    } else {
        None
    };
    strategies
        .iter()
        .map(|&strategy| {
            let pairs = match strategy {
                _ if n_flips == 0 => Vec::new(),
                CandidateStrategy::Random => random_pairs(graph, n_flips, seed),
                CandidateStrategy::DegreeTest => {
                    degree_test_pairs(graph, n_flips, seed, degree_test)?
                }
                CandidateStrategy::PprOriginal => {
                    ppr_pairs(model.as_ref().expect("built"), n_flips, DenominatorForm::Original)
                }
                CandidateStrategy::PprRevised => {
                    ppr_pairs(model.as_ref().expect("built"), n_flips, DenominatorForm::Revised)
                }
            };
            trajectory(graph, strategy, &pairs)
        })
        .collect()
}

fn trajectory(
    graph: &AttributedGraph,
    strategy: CandidateStrategy,
    pairs: &[(usize, usize)],
) -> Result<Trajectory> {
    let mut g = graph.clone();
    let mut ca = vec![g.avg_clustering_coefficient()];
    let mut flips = Vec::with_capacity(pairs.len());
    for &(u, v) in pairs {
        let flip = EdgeFlip::toggle(&g, u, v);
        g = g.apply_flip(&flip)?;
        ca.push(g.avg_clustering_coefficient());
        flips.push(flip);
    }
    Ok(Trajectory { strategy, flips, ca })
}

// Existing edges whose endpoints both have degree at least two.
fn removable_edges(graph: &AttributedGraph) -> Vec<(usize, usize)> {
    graph.edges().filter(|&(u, v)| graph.is_perturbable_pair(u, v)).collect()
}

fn random_pairs(graph: &AttributedGraph, n_flips: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut edges = removable_edges(graph);
    edges.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    edges.truncate(n_flips);
    edges
}

// Greedy: each step removes the edge with the smallest likelihood-ratio
// statistic against the clean graph. Ties follow a seeded shuffle.
fn degree_test_pairs(
    graph: &AttributedGraph,
    n_flips: usize,
    seed: u64,
    config: DegreeTestConfig,
) -> Result<Vec<(usize, usize)>> {
    let mut remaining = random_pairs(graph, usize::MAX, seed);
    let mut test = DegreeTestState::new(graph, config);
    let mut g = graph.clone();
    let mut out = Vec::new();
    while out.len() < n_flips && !remaining.is_empty() {
        let mut best: Option<(f64, usize)> = None;
        for (i, &(u, v)) in remaining.iter().enumerate() {
            let stat = test.statistic_for(&g, &EdgeFlip::toggle(&g, u, v))?;
            if best.is_none_or(|(b, _)| stat < b) {
                best = Some((stat, i));
            }
        }
        let (_, i) = best.expect("remaining is non-empty");
        let (u, v) = remaining.remove(i);
        let flip = EdgeFlip::toggle(&g, u, v);
        test.commit(&g, &flip);
        g = g.apply_flip(&flip)?;
        out.push((u, v));
    }
    Ok(out)
}

fn ppr_pairs(model: &PprModel, n_flips: usize, form: DenominatorForm) -> Vec<(usize, usize)> {
    let graph = model.graph();
    let mut scores: Vec<(f64, usize, usize)> = removable_edges(graph)
        .into_iter()
        .filter_map(|(u, v)| delta_symmetric(model, u, v, form).ok().map(|s| (s.delta, u, v)))
        .collect();
    scores.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    scores.into_iter().take(n_flips).map(|s| (s.1, s.2)).collect()
}

/// Writes `flip_index,strategy,ca` rows; index 0 is the clean graph.
pub fn write_trajectories_csv(trajectories: &[Trajectory], path: impl AsRef<Path>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "flip_index,strategy,ca")?;
    for t in trajectories {
        for (i, ca) in t.ca.iter().enumerate() {
            writeln!(out, "{i},{},{ca}", t.strategy.as_str())?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_sbm, SbmConfig};

    fn fixture() -> AttributedGraph {
        generate_sbm(&SbmConfig::new(vec![30, 30], 0.3, 0.02, 4)).unwrap().0
    }

    #[test]
    fn zero_flips_gives_clean_ca() {
        let g = fixture();
        let t = candidate_strategy_compare(&g, &CandidateStrategy::ALL, 0, 0.1, 1, Default::default())
            .unwrap();
        assert_eq!(t.len(), 4);
        for tr in &t {
            assert_eq!(tr.ca, vec![g.avg_clustering_coefficient()]);
        }
    }

    #[test]
    fn trajectories_replay_and_are_seeded() {
        let g = fixture();
        let a = candidate_strategy_compare(&g, &CandidateStrategy::ALL, 10, 0.1, 3, Default::default())
            .unwrap();
        let b = candidate_strategy_compare(&g, &CandidateStrategy::ALL, 10, 0.1, 3, Default::default())
            .unwrap();
        assert_eq!(a, b);
        for t in &a {
            assert_eq!(t.ca.len(), t.flips.len() + 1);
            let h = g.apply_flips(&t.flips).unwrap();
            assert_eq!(h.flip_count(), t.flips.len());
            assert!((h.avg_clustering_coefficient() - t.ca[t.flips.len()]).abs() < 1e-15);
        }
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in CandidateStrategy::ALL {
            assert_eq!(s.as_str().parse::<CandidateStrategy>().unwrap(), s);
        }
        assert!("pagerank".parse::<CandidateStrategy>().is_err());
    }
}
