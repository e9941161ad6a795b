//! Gradient-based MCMC over unconstrained parameter vectors.

mod adapt;
pub mod diagnostics;
mod fit;
mod hmc;

use serde::{Deserialize, Serialize};

use crate::error::{GppmError, Result};
use crate::par::Parallelism;

pub use diagnostics::{ess, rhat};
pub use fit::{fit_gppm, GppmFit};
pub use hmc::{hmc_sample, leapfrog, LeapfrogOutcome, DIVERGENCE_THRESHOLD};

/// A differentiable log density over `R^dim`.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Writes the gradient into `grad` and returns the log density.
    fn log_density_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> Result<f64>;

    fn log_density(&self, x: &[f64]) -> Result<f64> {
        let mut g = vec![0.0; self.dim()];
        self.log_density_and_gradient(x, &mut g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Multinomial no-U-turn trajectories.
    Nuts,
    /// Fixed-trajectory HMC with the leapfrog count drawn uniformly from
    /// `1..=max_leapfrog` every iteration.
    JitteredHmc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HmcConfig {
    pub warmup_iters: usize,
    pub sampling_iters: usize,
    pub chains: usize,
    pub target_accept: f64,
    /// Upper bound on leapfrog steps per iteration. For NUTS this caps the
    /// tree depth at `floor(log2(max_leapfrog + 1))`.
    pub max_leapfrog: usize,
    pub seed: u64,
    pub algorithm: Algorithm,
    /// Used only when `warmup_iters == 0`.
    pub initial_step_size: f64,
    pub parallelism: Parallelism,
}

impl Default for HmcConfig {
    fn default() -> Self {
        Self {
            warmup_iters: 1000,
            sampling_iters: 1000,
            chains: 4,
            target_accept: 0.8,
            max_leapfrog: 255,
            seed: 1,
            algorithm: Algorithm::Nuts,
            initial_step_size: 0.1,
            parallelism: Parallelism::default(),
        }
    }
}

impl HmcConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(GppmError::InvalidInput(m.to_string()));
        if self.chains == 0 {
            return bad("chains must be >= 1");
        }
        if self.warmup_iters > 0 && self.warmup_iters < 100 {
            return bad("warmup_iters must be 0 or >= 100");
        }
        if self.sampling_iters == 0 {
            return bad("sampling_iters must be >= 1");
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return bad("target_accept must lie in (0, 1)");
        }
        if self.max_leapfrog == 0 {
            return bad("max_leapfrog must be >= 1");
        }
        if !(self.initial_step_size > 0.0) {
            return bad("initial_step_size must be > 0");
        }
        Ok(())
    }
}

/// Post-warmup draws of one chain, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDraws {
    pub draws: Vec<f64>,
    pub accept_stats: Vec<f64>,
    pub divergent: Vec<bool>,
    pub n_leapfrog: Vec<u32>,
    pub step_size: f64,
    pub inv_mass: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraws {
    pub names: Vec<String>,
    pub chains: Vec<ChainDraws>,
    pub seed: u64,
}

impl PosteriorDraws {
    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn draws_per_chain(&self) -> usize {
        self.chains.first().map_or(0, |c| c.accept_stats.len())
    }

    pub fn n_draws(&self) -> usize {
        self.chains.iter().map(|c| c.accept_stats.len()).sum()
    }

    pub fn divergence_count(&self) -> usize {
        self.chains.iter().flat_map(|c| &c.divergent).filter(|d| **d).count()
    }

    pub fn draw(&self, chain: usize, iter: usize) -> &[f64] {
        let d = self.dim();
        &self.chains[chain].draws[iter * d..(iter + 1) * d]
    }

    /// All draws, chain-major.
    pub fn iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        let d = self.dim();
        self.chains.iter().flat_map(move |c| c.draws.chunks_exact(d))
    }

    /// One coordinate, one vector per chain.
    pub fn param_chains(&self, k: usize) -> Vec<Vec<f64>> {
        let d = self.dim();
        self.chains
            .iter()
            .map(|c| c.draws.iter().skip(k).step_by(d).copied().collect())
            .collect()
    }

    /// Evenly thinned draws, at most `max` of them, chain-major.
    pub fn thinned(&self, max: usize) -> Vec<&[f64]> {
        let all: Vec<&[f64]> = self.iter().collect();
        if all.len() <= max || max == 0 {
            return all;
        }
        let step = all.len() as f64 / max as f64;
        (0..max).map(|i| all[(i as f64 * step) as usize]).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}
