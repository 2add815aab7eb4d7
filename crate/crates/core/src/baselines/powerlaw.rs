//! Likelihood-ratio test for whether two degree sequences share one
//! power-law exponent.
//!
//! Degrees `d ≥ d_min` are fitted with the continuous maximum-likelihood
//! estimate `α = 1 + n / Σ ln(dᵢ/d_min)`, whose log-likelihood is
//! `n ln(α−1) − n ln d_min − α Σ ln(dᵢ/d_min)`. The statistic is
//! `Λ = −2(ℓ_combined − ℓ_before − ℓ_after)`; small values mean the
//! perturbation left the degree distribution unnoticeably changed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{AttributedGraph, EdgeFlip, FlipAction};

/// The critical value used by the defense literature this crate follows.
pub const DEFAULT_THRESHOLD: f64 = 0.004;
/// The conventional χ²(1) critical value at the 95% level.
pub const CHI2_95: f64 = 3.841_458_820_694_124;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DegreeTestConfig {
    pub d_min: usize,
    pub threshold: f64,
}

impl Default for DegreeTestConfig {
    fn default() -> Self {
        DegreeTestConfig {
            d_min: 2,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

/// Sufficient statistics of the tail `d ≥ d_min`: its size and `Σ ln(d/d_min)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailStats {
    pub d_min: usize,
    pub n: f64,
    pub log_sum: f64,
}

impl TailStats {
    pub fn new(degrees: impl IntoIterator<Item = usize>, d_min: usize) -> Self {
        let mut stats = TailStats {
            d_min,
            n: 0.0,
            log_sum: 0.0,
        };
        for d in degrees {
            stats.add(d, 1.0);
        }
        stats
    }

    fn add(&mut self, d: usize, weight: f64) {
        if d >= self.d_min {
            self.n += weight;
            self.log_sum += weight * (d as f64 / self.d_min as f64).ln();
        }
    }

    /// Statistics after one node's degree changes from `old` to `new`.
    pub fn with_change(mut self, old: usize, new: usize) -> Self {
        self.add(old, -1.0);
        self.add(new, 1.0);
        self
    }

    /// Statistics after `flip` is applied to a graph with the given endpoint degrees.
    pub fn after_flip(self, du: usize, dv: usize, action: FlipAction) -> Self {
        let shift = |d: usize| match action {
            FlipAction::Add => d + 1,
            FlipAction::Remove => d - 1,
        };
        self.with_change(du, shift(du)).with_change(dv, shift(dv))
    }

    pub fn combine(&self, other: &TailStats) -> TailStats {
        TailStats {
            d_min: self.d_min,
            n: self.n + other.n,
            log_sum: self.log_sum + other.log_sum,
        }
    }

    /// Maximum-likelihood exponent; infinite when every tail degree equals `d_min`.
    pub fn alpha(&self) -> f64 {
        1.0 + self.n / self.log_sum
    }

    pub fn log_likelihood(&self) -> f64 {
        if self.n == 0.0 {
            return 0.0;
        }
        if self.log_sum <= 1e-12 * self.n {
            // Degenerate fit at α → ∞.
            return f64::INFINITY;
        }
        let alpha = self.alpha();
        self.n * (alpha - 1.0).ln() - self.n * (self.d_min as f64).ln() - alpha * self.log_sum
    }
}

/// The likelihood-ratio statistic between two tails.
pub fn likelihood_ratio(before: &TailStats, after: &TailStats) -> Result<f64> {
    if before.n < 1.0 || after.n < 1.0 {
        return Err(Error::DegreeTest(format!(
            "no degrees at or above d_min = {}",
            before.d_min
        )));
    }
    let combined = before.combine(after);
    let (lc, lb, la) = (
        combined.log_likelihood(),
        before.log_likelihood(),
        after.log_likelihood(),
    );
    if lc.is_infinite() && lb.is_infinite() && la.is_infinite() {
        // All three tails consist of d_min only: identical distributions.
        return Ok(0.0);
    }
    let stat = -2.0 * (lc - (lb + la));
    // The separate fit can never be worse than the joint one.
    Ok(stat.max(0.0))
}

/// Degree-test statistic between two graphs and whether it passes.
pub fn powerlaw_unnoticeable(
    before: &AttributedGraph,
    after: &AttributedGraph,
    config: &DegreeTestConfig,
) -> Result<(f64, bool)> {
    let b = TailStats::new(before.degrees(), config.d_min);
    let a = TailStats::new(after.degrees(), config.d_min);
    let stat = likelihood_ratio(&b, &a)?;
    Ok((stat, stat < config.threshold))
}

/// Incremental degree test against a fixed clean graph.
#[derive(Debug, Clone)]
pub struct DegreeTestState {
    pub config: DegreeTestConfig,
    pub clean: TailStats,
    pub current: TailStats,
}

impl DegreeTestState {
    pub fn new(clean: &AttributedGraph, config: DegreeTestConfig) -> Self {
        let stats = TailStats::new(clean.degrees(), config.d_min);
        DegreeTestState {
            config,
            clean: stats,
            current: stats,
        }
    }

    /// Statistic of the graph obtained by applying `flip` to `graph`, whose
    /// tail statistics must be `self.current`.
    pub fn statistic_for(&self, graph: &AttributedGraph, flip: &EdgeFlip) -> Result<f64> {
        let after = self
            .current
            .after_flip(graph.degree(flip.u), graph.degree(flip.v), flip.action);
        likelihood_ratio(&self.clean, &after)
    }

    pub fn passes(&self, graph: &AttributedGraph, flip: &EdgeFlip) -> Result<bool> {
        Ok(self.statistic_for(graph, flip)? < self.config.threshold)
    }

    /// Records that `flip` was applied to `graph` (pre-flip degrees).
    pub fn commit(&mut self, graph: &AttributedGraph, flip: &EdgeFlip) {
        self.current = self
            .current
            .after_flip(graph.degree(flip.u), graph.degree(flip.v), flip.action);
    }
}
