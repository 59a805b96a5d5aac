//! Run settings, stored posterior draws, and summaries over them.

use crate::error::{Result, SsipError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Duration;

/// Iteration schedule shared by both engines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSettings {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub chains: usize,
}

impl RunSettings {
    /// Burn-in defaults to 10% of `iterations`, thinning to 1, one chain.
    pub fn new(iterations: usize, seed: u64) -> Self {
        Self {
            iterations,
            burn_in: iterations / 10,
            thin: 1,
            seed,
            chains: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations <= self.burn_in {
            return Err(SsipError::InvalidConfig(format!(
                "iterations ({}) must exceed burn_in ({})",
                self.iterations, self.burn_in
            )));
        }
        if self.thin == 0 {
            return Err(SsipError::InvalidConfig("thin must be at least 1".into()));
        }
        if self.chains == 0 {
            return Err(SsipError::InvalidConfig("at least one chain is required".into()));
        }
        Ok(())
    }

    /// Number of stored draws per chain.
    pub fn kept_draws(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }

    /// Whether sweep `it` (0-based) is recorded.
    pub fn keeps(&self, it: usize) -> bool {
        it >= self.burn_in && (it - self.burn_in + 1) % self.thin == 0
    }

    /// Independent stream per chain index; identical for equal `(seed, chain)`.
    pub fn chain_rng(&self, chain: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(chain as u64);
        rng
    }
}

/// Which engine produced a chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    Gaussian,
    NegativeBinomial,
}

/// One recorded sweep. Region-by-covariate arrays are row-major.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Draw {
    pub beta: Vec<f64>,
    pub gamma: Vec<bool>,
    pub z: Vec<f64>,
    /// Per-region noise variance (Gaussian engine).
    pub sigma2: Vec<f64>,
    /// Per-region mean Pólya-Gamma weight (NB engine).
    pub omega_mean: Vec<f64>,
    pub mu: Vec<f64>,
    pub tau2: Vec<f64>,
    /// CAR regional intercepts, empty when disabled.
    pub alpha: Vec<f64>,
    pub tau_alpha: Option<f64>,
    /// Global level absorbing the CAR re-centering when no intercept column exists.
    pub level: f64,
    /// Temporal shifts, empty when disabled.
    pub zeta: Vec<f64>,
    pub ar_innov_var: Option<f64>,
    pub rho: f64,
}

/// Draws of one chain plus timing.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChainTrace {
    pub draws: Vec<Draw>,
    pub sweep_time: Duration,
    pub rho_acceptance: Option<f64>,
}

/// Metadata needed to re-run a chain exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMeta {
    pub engine: Engine,
    pub settings: RunSettings,
    /// Free-form `key=value` pairs describing the model configuration.
    pub config: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorChain {
    pub meta: RunMeta,
    pub n_regions: usize,
    pub p: usize,
    pub n_times: usize,
    /// Column index of the forced intercept, if any.
    pub intercept: Option<usize>,
    /// Negative-binomial dispersion `h` (NB engine only).
    pub dispersion: Option<f64>,
    pub chains: Vec<ChainTrace>,
}

/// Equal-tailed summary of a scalar posterior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub q025: f64,
    pub q975: f64,
}

impl PosteriorChain {
    /// All stored draws across chains, chain by chain.
    pub fn draws(&self) -> impl Iterator<Item = &Draw> {
        self.chains.iter().flat_map(|c| c.draws.iter())
    }

    pub fn n_draws(&self) -> usize {
        self.chains.iter().map(|c| c.draws.len()).sum()
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.p + j
    }

    /// Posterior inclusion probability of covariate `j` in region `i`.
    pub fn inclusion_prob(&self, i: usize, j: usize) -> f64 {
        let k = self.idx(i, j);
        let hits = self.draws().filter(|d| d.gamma[k]).count();
        hits as f64 / self.n_draws() as f64
    }

    /// Model-averaged coefficient summary (zeros from excluded draws count).
    pub fn beta_summary(&self, i: usize, j: usize) -> Summary {
        let k = self.idx(i, j);
        summarize(self.draws().map(|d| d.beta[k]).collect())
    }

    pub fn beta_mean(&self, i: usize, j: usize) -> f64 {
        let k = self.idx(i, j);
        self.draws().map(|d| d.beta[k]).sum::<f64>() / self.n_draws() as f64
    }

    /// Posterior mean of β as a row-major `n_regions × p` array.
    pub fn beta_means(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_regions * self.p];
        for d in self.draws() {
            for (o, b) in out.iter_mut().zip(&d.beta) {
                *o += b;
            }
        }
        let n = self.n_draws() as f64;
        out.iter_mut().for_each(|o| *o /= n);
        out
    }

    pub fn alpha_summary(&self, i: usize) -> Option<Summary> {
        if self.draws().next()?.alpha.is_empty() {
            return None;
        }
        Some(summarize(self.draws().map(|d| d.alpha[i]).collect()))
    }

    pub fn zeta_summary(&self, t: usize) -> Option<Summary> {
        if self.draws().next()?.zeta.is_empty() {
            return None;
        }
        Some(summarize(self.draws().map(|d| d.zeta[t]).collect()))
    }

    pub fn rho_summary(&self) -> Summary {
        summarize(self.draws().map(|d| d.rho).collect())
    }
}

/// Mean and 2.5% / 97.5% quantiles of a sample.
pub fn summarize(mut values: Vec<f64>) -> Summary {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.sort_by(f64::total_cmp);
    Summary {
        mean,
        q025: quantile_sorted(&values, 0.025),
        q975: quantile_sorted(&values, 0.975),
    }
}

/// Linear-interpolation quantile (type 7) of an ascending sample.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
