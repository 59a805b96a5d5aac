//! Gibbs sampler for per-region Gaussian linear regression with
//! spike-and-slab coefficients under the smoothed inclusion prior.
//!
//! Sweep order: collapsed `(γ, Z)` → `β` → `σ²` → `(μ, τ²)` → optional `ρ`.

use crate::chain::{ChainTrace, Draw, Engine, PosteriorChain, RunMeta, RunSettings};
use crate::collapsed::{
    active_set, draw_gamma_rate, update_beta, update_gamma_z, update_slab, RegionStats, SlabPrior,
};
use crate::error::{Result, SsipError};
use crate::graph::AdjacencyGraph;
use crate::ssip::{LatentField, RhoSampler, RhoUpdate, SsipConfig};
use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use std::time::Instant;

/// Design matrix and response of one region.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionData {
    x: DMatrix<f64>,
    y: Vec<f64>,
}

impl RegionData {
    pub fn new(x: DMatrix<f64>, y: Vec<f64>) -> Result<Self> {
        if y.is_empty() {
            return Err(SsipError::InvalidData("region has no observations".into()));
        }
        if x.nrows() != y.len() {
            return Err(SsipError::DimensionMismatch(format!(
                "design has {} rows but response has {}",
                x.nrows(),
                y.len()
            )));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(SsipError::InvalidData("non-finite value in region data".into()));
        }
        Ok(Self { x, y })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn m(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Replaces the response, keeping the design.
    pub fn set_y(&mut self, y: Vec<f64>) -> Result<()> {
        if y.len() != self.m() {
            return Err(SsipError::DimensionMismatch("response length changed".into()));
        }
        self.y = y;
        Ok(())
    }

    /// `‖y − Xβ‖²`.
    pub fn rss(&self, beta: &[f64]) -> f64 {
        (0..self.m())
            .map(|r| {
                let fit: f64 = (0..self.p()).map(|j| self.x[(r, j)] * beta[j]).sum();
                (self.y[r] - fit).powi(2)
            })
            .sum()
    }
}

/// Fixed prior constants: slab prior plus `1/σ²_i ~ Gamma(a, b)` (rate `b`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianHyper {
    pub mu0: f64,
    pub s0: f64,
    pub a_t: f64,
    pub b_t: f64,
    pub a: f64,
    pub b: f64,
}

impl Default for GaussianHyper {
    fn default() -> Self {
        let slab = SlabPrior::default();
        Self {
            mu0: slab.mu0,
            s0: slab.s0,
            a_t: slab.a_t,
            b_t: slab.b_t,
            a: 2.0,
            b: 1.0,
        }
    }
}

impl GaussianHyper {
    pub fn slab(&self) -> SlabPrior {
        SlabPrior {
            mu0: self.mu0,
            s0: self.s0,
            a_t: self.a_t,
            b_t: self.b_t,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.slab().validate()?;
        if self.a > 0.0 && self.b > 0.0 && self.a.is_finite() && self.b.is_finite() {
            Ok(())
        } else {
            Err(SsipError::InvalidConfig(format!("invalid noise prior {self:?}")))
        }
    }

    pub fn describe(&self) -> Vec<(String, String)> {
        [
            ("mu0", self.mu0),
            ("s0", self.s0),
            ("a_t", self.a_t),
            ("b_t", self.b_t),
            ("a", self.a),
            ("b", self.b),
        ]
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianOptions {
    pub hyper: GaussianHyper,
    pub ssip: SsipConfig,
    /// Column 0 is an intercept included in every region.
    pub force_intercept: bool,
    /// One noise variance shared by all regions instead of one per region.
    pub pooled_sigma: bool,
    /// Ignore the responses entirely so the chain targets the prior.
    pub prior_only: bool,
}

impl Default for GaussianOptions {
    fn default() -> Self {
        Self {
            hyper: GaussianHyper::default(),
            ssip: SsipConfig::default(),
            force_intercept: true,
            pooled_sigma: false,
            prior_only: false,
        }
    }
}

impl GaussianOptions {
    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        self.ssip.validate()
    }
}

/// Full sampler state. `beta` is row-major `n_regions × p`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    pub beta: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub mu: Vec<f64>,
    pub tau2: Vec<f64>,
    pub field: LatentField,
    pub rho: f64,
}

impl GaussianState {
    /// Deterministic starting point: everything included, `β = 0`, `σ² = 1`,
    /// slab parameters at their prior centres.
    pub fn initial(n_regions: usize, p: usize, forced: Vec<bool>, hyper: &GaussianHyper, rho: f64) -> Result<Self> {
        Ok(Self {
            beta: vec![0.0; n_regions * p],
            sigma2: vec![1.0; n_regions],
            mu: vec![hyper.mu0; p],
            tau2: vec![hyper.b_t / (hyper.a_t + 1.0); p],
            field: LatentField::new(n_regions, p, forced)?,
            rho,
        })
    }

    /// `β_ij = 0` exactly where `γ_ij = 0`, positive variances, consistent field.
    pub fn is_valid(&self) -> bool {
        self.field.is_consistent()
            && self
                .beta
                .iter()
                .zip(self.field.gamma_values())
                .all(|(&b, &g)| g || b == 0.0)
            && self.sigma2.iter().all(|&s| s > 0.0 && s.is_finite())
            && self.tau2.iter().all(|&t| t > 0.0 && t.is_finite())
    }

    pub fn to_draw(&self) -> Draw {
        Draw {
            beta: self.beta.clone(),
            gamma: self.field.gamma_values().to_vec(),
            z: self.field.z_values().to_vec(),
            sigma2: self.sigma2.clone(),
            mu: self.mu.clone(),
            tau2: self.tau2.clone(),
            rho: self.rho,
            ..Draw::default()
        }
    }
}

/// `ln Ψ`: the region's response density with `β_i` integrated out,
/// `N(Y; X_γ μ_γ, σ² I + X_γ T_γ X_γᵀ)`.
pub fn log_marginal_likelihood(
    region: &RegionData,
    gamma_i: &[bool],
    mu: &[f64],
    tau2: &[f64],
    sigma2: f64,
) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(SsipError::InvalidConfig(format!("sigma2 must be positive, got {sigma2}")));
    }
    if gamma_i.len() != region.p() || mu.len() != region.p() || tau2.len() != region.p() {
        return Err(SsipError::DimensionMismatch("indicator/slab length differs from p".into()));
    }
    RegionStats::homoskedastic(region.x(), region.y(), sigma2).log_marginal(&active_set(gamma_i), mu, tau2)
}

/// Forced-inclusion mask for `n × p` where the first `leading` columns are
/// included in every region.
pub fn leading_mask(n_regions: usize, p: usize, leading: usize) -> Vec<bool> {
    (0..n_regions * p).map(|k| k % p < leading).collect()
}

/// Sampler bound to a graph and a data set.
pub struct GaussianSampler<'g> {
    graph: &'g AdjacencyGraph,
    regions: Vec<RegionData>,
    opts: GaussianOptions,
    unit_stats: Vec<RegionStats>,
    rho_sampler: Option<RhoSampler>,
    p: usize,
}

impl<'g> GaussianSampler<'g> {
    pub fn new(graph: &'g AdjacencyGraph, regions: Vec<RegionData>, opts: GaussianOptions) -> Result<Self> {
        opts.validate()?;
        if regions.len() != graph.n_regions() {
            return Err(SsipError::DimensionMismatch(format!(
                "{} regions of data for a graph with {} regions",
                regions.len(),
                graph.n_regions()
            )));
        }
        let p = regions[0].p();
        if p == 0 || regions.iter().any(|r| r.p() != p) {
            return Err(SsipError::DimensionMismatch("covariate count differs across regions".into()));
        }
        let rho_sampler = match opts.ssip.rho_update {
            RhoUpdate::Off => None,
            RhoUpdate::Metropolis { step } => Some(RhoSampler::new(graph, step)?),
        };
        let unit_stats = Self::unit_stats_for(&regions, opts.prior_only, p);
        Ok(Self {
            graph,
            regions,
            opts,
            unit_stats,
            rho_sampler,
            p,
        })
    }

    fn unit_stats_for(regions: &[RegionData], prior_only: bool, p: usize) -> Vec<RegionStats> {
        regions
            .iter()
            .map(|r| {
                if prior_only {
                    RegionStats::empty(p)
                } else {
                    RegionStats::homoskedastic(r.x(), r.y(), 1.0)
                }
            })
            .collect()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn regions(&self) -> &[RegionData] {
        &self.regions
    }

    pub fn options(&self) -> &GaussianOptions {
        &self.opts
    }

    /// Replaces region `i`'s response (used by joint-distribution tests).
    pub fn set_response(&mut self, i: usize, y: Vec<f64>) -> Result<()> {
        self.regions[i].set_y(y)?;
        if !self.opts.prior_only {
            self.unit_stats[i] = RegionStats::homoskedastic(self.regions[i].x(), self.regions[i].y(), 1.0);
        }
        Ok(())
    }

    pub fn initial_state(&self) -> Result<GaussianState> {
        let n = self.graph.n_regions();
        GaussianState::initial(
            n,
            self.p,
            leading_mask(n, self.p, usize::from(self.opts.force_intercept)),
            &self.opts.hyper,
            self.opts.ssip.rho,
        )
    }

    fn current_stats(&self, state: &GaussianState) -> Vec<RegionStats> {
        self.unit_stats
            .iter()
            .zip(&state.sigma2)
            .map(|(s, &s2)| s.rescaled(s2))
            .collect()
    }

    pub fn update_gamma_z<R: Rng + ?Sized>(&self, state: &mut GaussianState, rng: &mut R) -> Result<()> {
        let stats = self.current_stats(state);
        update_gamma_z(&mut state.field, self.graph, &stats, &state.mu, &state.tau2, state.rho, rng)
    }

    pub fn update_beta<R: Rng + ?Sized>(&self, state: &mut GaussianState, rng: &mut R) -> Result<()> {
        let stats = self.current_stats(state);
        update_beta(&mut state.beta, &state.field, &stats, &state.mu, &state.tau2, rng)
    }

    /// `1/σ²_i ~ Gamma(a + m_i/2, b + RSS_i/2)`, or the pooled analogue.
    pub fn update_sigma2<R: Rng + ?Sized>(&self, state: &mut GaussianState, rng: &mut R) -> Result<()> {
        let h = &self.opts.hyper;
        let p = self.p;
        let (counts, rss): (Vec<f64>, Vec<f64>) = if self.opts.prior_only {
            (vec![0.0; self.regions.len()], vec![0.0; self.regions.len()])
        } else {
            self.regions
                .iter()
                .enumerate()
                .map(|(i, r)| (r.m() as f64, r.rss(&state.beta[i * p..(i + 1) * p])))
                .unzip()
        };
        if self.opts.pooled_sigma {
            let shape = h.a + 0.5 * counts.iter().sum::<f64>();
            let rate = h.b + 0.5 * rss.iter().sum::<f64>();
            let s2 = 1.0 / draw_gamma_rate(shape, rate, rng)?;
            state.sigma2.fill(s2);
        } else {
            for (i, s2) in state.sigma2.iter_mut().enumerate() {
                *s2 = 1.0 / draw_gamma_rate(h.a + 0.5 * counts[i], h.b + 0.5 * rss[i], rng)?;
            }
        }
        Ok(())
    }

    pub fn update_hyper<R: Rng + ?Sized>(&self, state: &mut GaussianState, rng: &mut R) -> Result<()> {
        update_slab(&state.beta, &state.field, &self.opts.hyper.slab(), &mut state.mu, &mut state.tau2, rng)
    }

    pub fn update_rho<R: Rng + ?Sized>(&mut self, state: &mut GaussianState, rng: &mut R) {
        if let Some(s) = self.rho_sampler.as_mut() {
            state.rho = s.step(&state.field, self.graph, state.rho, rng);
        }
    }

    /// One full sweep in the fixed order.
    pub fn sweep<R: Rng + ?Sized>(&mut self, state: &mut GaussianState, rng: &mut R) -> Result<()> {
        self.update_gamma_z(state, rng)?;
        self.update_beta(state, rng)?;
        self.update_sigma2(state, rng)?;
        self.update_hyper(state, rng)?;
        self.update_rho(state, rng);
        Ok(())
    }

    fn run_chain(mut self, run: &RunSettings, chain: usize) -> Result<ChainTrace> {
        let mut rng = run.chain_rng(chain);
        let mut state = self.initial_state()?;
        let mut trace = ChainTrace::default();
        trace.draws.reserve(run.kept_draws());
        let start = Instant::now();
        for it in 0..run.iterations {
            self.sweep(&mut state, &mut rng).map_err(|e| e.at_iteration(it))?;
            if run.keeps(it) {
                trace.draws.push(state.to_draw());
            }
        }
        trace.sweep_time = start.elapsed();
        trace.rho_acceptance = self
            .rho_sampler
            .as_ref()
            .map(|s| s.accepted as f64 / s.proposed.max(1) as f64);
        Ok(trace)
    }
}

/// Runs `run.chains` independent chains (in parallel) and collects their draws.
pub fn fit_gaussian_ssip(
    regions: &[RegionData],
    graph: &AdjacencyGraph,
    opts: &GaussianOptions,
    run: &RunSettings,
) -> Result<PosteriorChain> {
    run.validate()?;
    // Validate eagerly so configuration errors surface before any sampling.
    let probe = GaussianSampler::new(graph, regions.to_vec(), *opts)?;
    let p = probe.p();
    drop(probe);
    let chains = (0..run.chains)
        .into_par_iter()
        .map(|c| GaussianSampler::new(graph, regions.to_vec(), *opts)?.run_chain(run, c))
        .collect::<Result<Vec<_>>>()?;
    let mut config = opts.hyper.describe();
    config.push(("rho".into(), opts.ssip.rho.to_string()));
    config.push(("rho_update".into(), format!("{:?}", opts.ssip.rho_update)));
    config.push(("force_intercept".into(), opts.force_intercept.to_string()));
    config.push(("pooled_sigma".into(), opts.pooled_sigma.to_string()));
    config.push(("prior_only".into(), opts.prior_only.to_string()));
    Ok(PosteriorChain {
        meta: RunMeta {
            engine: Engine::Gaussian,
            settings: *run,
            config,
        },
        n_regions: graph.n_regions(),
        p,
        n_times: 0,
        intercept: opts.force_intercept.then_some(0),
        dispersion: None,
        chains,
    })
}
