//! Negative-binomial regression with smoothed spike-and-slab selection via
//! Pólya-Gamma augmentation, with optional CAR regional intercepts and an
//! AR(1) temporal shift.
//!
//! Counts follow `Y | λ ~ Poisson(λ)`, `λ ~ Gamma(h, scale e^ψ)`, so the mean
//! is `h e^ψ` and the linear predictor is
//! `ψ = x·β_i + α_i + level + ζ_t`.
//! Given `ω ~ PG(Y + h, ψ)`, the pseudo-data `(Y − h) / (2ω)` are Gaussian
//! with mean `ψ` and variance `1/ω`, so the Gaussian machinery applies with
//! per-row weights.
//!
//! Sweep order: `ω` → collapsed `(γ, Z)` → `β` → `α` → `ζ` → `(μ, τ²)` →
//! optional `ρ`.

use crate::chain::{ChainTrace, Draw, Engine, PosteriorChain, RunMeta, RunSettings};
use crate::collapsed::{draw_gamma_rate, draw_inverse_gamma, update_beta, update_gamma_z, update_slab, RegionStats, SlabPrior};
use crate::error::{Result, SsipError};
use crate::gaussian::leading_mask;
use crate::graph::AdjacencyGraph;
use crate::polya_gamma::{pg_mean, sample_pg_with, PgConfig, PgParams};
use crate::ssip::{LatentField, RhoSampler, RhoUpdate, SsipConfig};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use rayon::prelude::*;
use std::time::Instant;

/// Count data of one region, optionally labelled by time.
#[derive(Debug, Clone, PartialEq)]
pub struct NbRegionData {
    x: DMatrix<f64>,
    y: Vec<u64>,
    time: Option<Vec<usize>>,
}

impl NbRegionData {
    pub fn new(x: DMatrix<f64>, y: Vec<u64>, time: Option<Vec<usize>>) -> Result<Self> {
        if y.is_empty() {
            return Err(SsipError::InvalidData("region has no observations".into()));
        }
        if x.nrows() != y.len() {
            return Err(SsipError::DimensionMismatch(format!(
                "design has {} rows but {} counts",
                x.nrows(),
                y.len()
            )));
        }
        if time.as_ref().is_some_and(|t| t.len() != y.len()) {
            return Err(SsipError::DimensionMismatch("time labels differ in length from counts".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SsipError::InvalidData("non-finite design entry".into()));
        }
        Ok(Self { x, y, time })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &[u64] {
        &self.y
    }

    pub fn time(&self) -> Option<&[usize]> {
        self.time.as_deref()
    }

    pub fn m(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    fn time_of(&self, r: usize) -> usize {
        self.time.as_ref().map_or(0, |t| t[r])
    }

    pub fn set_y(&mut self, y: Vec<u64>) -> Result<()> {
        if y.len() != self.m() {
            return Err(SsipError::DimensionMismatch("count vector length changed".into()));
        }
        self.y = y;
        Ok(())
    }

    fn row_dot(&self, r: usize, beta: &[f64]) -> f64 {
        (0..self.p()).map(|j| self.x[(r, j)] * beta[j]).sum()
    }
}

/// Count-model settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NbConfig {
    /// Fixed dispersion `h > 0`.
    pub h: f64,
    pub car_intercept: bool,
    pub temporal: bool,
    /// AR(1) coefficient of the temporal shift, held fixed.
    pub ar_coef: f64,
    /// Number of leading design columns included in every region. When at
    /// least one, column 0 is treated as the intercept.
    pub forced_leading: usize,
    /// Gamma(shape, rate) prior on the CAR precision `τ_α`.
    pub tau_alpha_prior: (f64, f64),
    /// Inverse-gamma(shape, scale) prior on the AR innovation variance.
    pub innov_prior: (f64, f64),
    /// Sampling aborts if any linear predictor leaves `[−bound, bound]`.
    pub psi_bound: f64,
    pub pg: PgConfig,
}

impl Default for NbConfig {
    fn default() -> Self {
        Self {
            h: 1.0,
            car_intercept: false,
            temporal: false,
            ar_coef: 0.9,
            forced_leading: 1,
            tau_alpha_prior: (2.0, 1.0),
            innov_prior: (2.0, 1.0),
            psi_bound: 30.0,
            pg: PgConfig::default(),
        }
    }
}

impl NbConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.h) {
            return Err(SsipError::InvalidConfig(format!("h must be positive, got {}", self.h)));
        }
        if !(self.ar_coef > -1.0 && self.ar_coef < 1.0) {
            return Err(SsipError::InvalidConfig(format!("ar_coef must lie in (-1, 1), got {}", self.ar_coef)));
        }
        let (a, b) = self.tau_alpha_prior;
        let (c, d) = self.innov_prior;
        if ![a, b, c, d, self.psi_bound].into_iter().all(positive) {
            return Err(SsipError::InvalidConfig("count-model prior constants must be positive".into()));
        }
        if self.pg.series_terms == 0 || !(self.pg.gaussian_crossover >= 1.0) {
            return Err(SsipError::InvalidConfig("invalid Pólya-Gamma sampler settings".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NbOptions {
    pub hyper: SlabPrior,
    pub ssip: SsipConfig,
    pub nb: NbConfig,
}

impl NbOptions {
    /// Preset for log-linear capture-recapture fits: CAR intercepts and a
    /// unit-scale slab (variance 4) on interaction effects. Interaction
    /// columns are supported only by small cells, and a wide slab lets their
    /// hierarchical means drift until the linear predictor overflows.
    pub fn capture_recapture() -> Self {
        Self {
            hyper: SlabPrior {
                s0: 4.0,
                ..SlabPrior::default()
            },
            ssip: SsipConfig::default(),
            nb: NbConfig {
                car_intercept: true,
                ..NbConfig::default()
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        self.ssip.validate()?;
        self.nb.validate()
    }

    pub fn describe(&self) -> Vec<(String, String)> {
        let h = &self.hyper;
        let nb = &self.nb;
        vec![
            ("mu0".into(), h.mu0.to_string()),
            ("s0".into(), h.s0.to_string()),
            ("a_t".into(), h.a_t.to_string()),
            ("b_t".into(), h.b_t.to_string()),
            ("rho".into(), self.ssip.rho.to_string()),
            ("rho_update".into(), format!("{:?}", self.ssip.rho_update)),
            ("h".into(), nb.h.to_string()),
            ("forced_leading".into(), nb.forced_leading.to_string()),
            ("car_intercept".into(), nb.car_intercept.to_string()),
            ("temporal".into(), nb.temporal.to_string()),
            ("ar_coef".into(), nb.ar_coef.to_string()),
            ("tau_alpha_prior".into(), format!("gamma({},{})", nb.tau_alpha_prior.0, nb.tau_alpha_prior.1)),
            ("innov_prior".into(), format!("inv_gamma({},{})", nb.innov_prior.0, nb.innov_prior.1)),
            ("identifiability".into(), "alpha sum-to-zero; zeta_1 = 0".into()),
            ("pg_crossover".into(), nb.pg.gaussian_crossover.to_string()),
            ("pg_series_terms".into(), nb.pg.series_terms.to_string()),
        ]
    }
}

/// Full sampler state. `beta` is row-major `n_regions × p`; `omega[i]` holds
/// region `i`'s per-row weights.
#[derive(Debug, Clone, PartialEq)]
pub struct NbState {
    pub beta: Vec<f64>,
    pub field: LatentField,
    pub mu: Vec<f64>,
    pub tau2: Vec<f64>,
    pub omega: Vec<Vec<f64>>,
    /// CAR intercepts (empty when disabled), kept summing to zero.
    pub alpha: Vec<f64>,
    pub tau_alpha: f64,
    /// Global shift absorbing the CAR mean when there is no intercept column.
    pub level: f64,
    /// Temporal shifts with `zeta[0] = 0` (empty when disabled).
    pub zeta: Vec<f64>,
    pub ar_coef: f64,
    pub ar_innov_var: f64,
    pub h: f64,
    pub rho: f64,
}

impl NbState {
    pub fn is_valid(&self) -> bool {
        self.field.is_consistent()
            && self.beta.iter().zip(self.field.gamma_values()).all(|(&b, &g)| g || b == 0.0)
            && self.omega.iter().flatten().all(|&w| w > 0.0 && w.is_finite())
            && self.tau2.iter().all(|&t| t > 0.0)
            && self.zeta.first().is_none_or(|&z| z == 0.0)
            && self.h > 0.0
            && self.ar_coef.abs() < 1.0
    }

    /// Offset `α_i + level + ζ_t` added to `x·β_i`.
    pub fn offset(&self, i: usize, t: usize) -> f64 {
        self.alpha.get(i).copied().unwrap_or(0.0) + self.level + self.zeta.get(t).copied().unwrap_or(0.0)
    }

    pub fn to_draw(&self) -> Draw {
        Draw {
            beta: self.beta.clone(),
            gamma: self.field.gamma_values().to_vec(),
            z: self.field.z_values().to_vec(),
            omega_mean: self
                .omega
                .iter()
                .map(|w| w.iter().sum::<f64>() / w.len() as f64)
                .collect(),
            mu: self.mu.clone(),
            tau2: self.tau2.clone(),
            alpha: self.alpha.clone(),
            tau_alpha: (!self.alpha.is_empty()).then_some(self.tau_alpha),
            level: self.level,
            zeta: self.zeta.clone(),
            ar_innov_var: (!self.zeta.is_empty()).then_some(self.ar_innov_var),
            rho: self.rho,
            ..Draw::default()
        }
    }
}

/// Elementwise `(Y − h) / (2ω)`.
pub fn compute_pseudo_data(y: &[u64], omega: &[f64], h: f64) -> Vec<f64> {
    y.iter().zip(omega).map(|(&y, &w)| (y as f64 - h) / (2.0 * w)).collect()
}

/// Draws `Y ~ NB(h, ψ)` as a gamma-Poisson mixture with mean `h e^ψ`.
pub fn sample_nb<R: Rng + ?Sized>(h: f64, psi: f64, rng: &mut R) -> u64 {
    let lambda = Gamma::new(h, psi.exp()).expect("positive shape and scale").sample(rng);
    if !(lambda > 0.0) {
        return 0;
    }
    match Poisson::new(lambda) {
        Ok(d) => d.sample(rng) as u64,
        Err(_) => lambda.round() as u64,
    }
}

/// One Gibbs sweep over CAR intercepts given per-region Gaussian likelihood
/// summaries: `precision[i] = Σ ω` and `weighted_resid[i] = Σ ω · (target −
/// rest of predictor)`. Passing zeros leaves only the intrinsic CAR
/// conditional `N(mean of neighbours, 1/(τ n_i))`.
pub fn sample_car_intercepts<R: Rng + ?Sized>(
    alpha: &mut [f64],
    graph: &AdjacencyGraph,
    tau_alpha: f64,
    precision: &[f64],
    weighted_resid: &[f64],
    rng: &mut R,
) {
    for i in 0..alpha.len() {
        let prior_prec = tau_alpha * graph.degree(i) as f64;
        let post_prec = prior_prec + precision[i];
        let mean = (tau_alpha * graph.neighbor_sum(alpha, i) + weighted_resid[i]) / post_prec;
        let e: f64 = StandardNormal.sample(rng);
        alpha[i] = mean + e / post_prec.sqrt();
    }
}

/// `τ_α | α ~ Gamma(a + (n − c)/2, b + Σ_edges (α_i − α_k)² / 2)` with `c` the
/// number of connected components. Returns `(shape, rate)`.
pub fn tau_alpha_conditional(alpha: &[f64], graph: &AdjacencyGraph, prior: (f64, f64)) -> (f64, f64) {
    let (_, components) = graph.components();
    let ss: f64 = graph.edges().map(|(i, k)| (alpha[i] - alpha[k]).powi(2)).sum();
    (
        prior.0 + 0.5 * (graph.n_regions() - components) as f64,
        prior.1 + 0.5 * ss,
    )
}

/// Joint draw of `ζ_2..ζ_T` under the AR(1) prior anchored at `ζ_1 = 0`,
/// given per-time likelihood precision and weighted residual sums.
pub fn sample_ar1_path<R: Rng + ?Sized>(
    zeta: &mut [f64],
    precision: &[f64],
    weighted_resid: &[f64],
    phi: f64,
    innov_var: f64,
    rng: &mut R,
) -> Result<()> {
    let t_len = zeta.len();
    if t_len == 0 {
        return Ok(());
    }
    zeta[0] = 0.0;
    if t_len == 1 {
        return Ok(());
    }
    let k = t_len - 1;
    let inv = 1.0 / innov_var;
    let mut prec = DMatrix::zeros(k, k);
    let mut rhs = DVector::zeros(k);
    for a in 0..k {
        let t = a + 1;
        let interior = t + 1 < t_len;
        prec[(a, a)] = if interior { (1.0 + phi * phi) * inv } else { inv } + precision[t];
        if a + 1 < k {
            prec[(a, a + 1)] = -phi * inv;
            prec[(a + 1, a)] = -phi * inv;
        }
        rhs[a] = weighted_resid[t];
    }
    let chol = prec
        .cholesky()
        .ok_or_else(|| SsipError::numerical("temporal precision not positive definite"))?;
    let mean = chol.solve(&rhs);
    let e = DVector::from_fn(k, |_, _| StandardNormal.sample(rng));
    let offset = chol
        .l()
        .transpose()
        .solve_upper_triangular(&e)
        .ok_or_else(|| SsipError::numerical("singular temporal factor"))?;
    for a in 0..k {
        zeta[a + 1] = mean[a] + offset[a];
    }
    Ok(())
}

/// Sum of squared AR(1) innovations `Σ_{t≥2} (ζ_t − φ ζ_{t−1})²`.
pub fn ar1_innovation_ss(zeta: &[f64], phi: f64) -> f64 {
    zeta.windows(2).map(|w| (w[1] - phi * w[0]).powi(2)).sum()
}

/// Sampler bound to a graph and a data set.
pub struct NbSampler<'g> {
    graph: &'g AdjacencyGraph,
    regions: Vec<NbRegionData>,
    opts: NbOptions,
    n_times: usize,
    rho_sampler: Option<RhoSampler>,
    p: usize,
}

impl<'g> NbSampler<'g> {
    pub fn new(graph: &'g AdjacencyGraph, regions: Vec<NbRegionData>, opts: NbOptions) -> Result<Self> {
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
        let n_times = time_extent(&regions)?;
        if opts.nb.temporal && regions.iter().any(|r| r.time().is_none()) {
            return Err(SsipError::InvalidConfig("temporal effect requested but rows carry no time label".into()));
        }
        let rho_sampler = match opts.ssip.rho_update {
            RhoUpdate::Off => None,
            RhoUpdate::Metropolis { step } => Some(RhoSampler::new(graph, step)?),
        };
        Ok(Self {
            graph,
            regions,
            opts,
            n_times,
            rho_sampler,
            p,
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n_times(&self) -> usize {
        self.n_times
    }

    pub fn regions(&self) -> &[NbRegionData] {
        &self.regions
    }

    pub fn options(&self) -> &NbOptions {
        &self.opts
    }

    pub fn set_counts(&mut self, i: usize, y: Vec<u64>) -> Result<()> {
        self.regions[i].set_y(y)
    }

    /// Deterministic start: everything included, `β = 0`, `ω` at its prior
    /// mean given `ψ = 0`, zero offsets.
    pub fn initial_state(&self) -> Result<NbState> {
        let n = self.graph.n_regions();
        let nb = &self.opts.nb;
        let hyper = &self.opts.hyper;
        let omega = self
            .regions
            .iter()
            .map(|r| r.y().iter().map(|&y| pg_mean(PgParams { b: y as f64 + nb.h, c: 0.0 })).collect())
            .collect();
        Ok(NbState {
            beta: vec![0.0; n * self.p],
            field: LatentField::new(n, self.p, leading_mask(n, self.p, nb.forced_leading.min(self.p)))?,
            mu: vec![hyper.mu0; self.p],
            tau2: vec![hyper.b_t / (hyper.a_t + 1.0); self.p],
            omega,
            alpha: if nb.car_intercept { vec![0.0; n] } else { Vec::new() },
            tau_alpha: nb.tau_alpha_prior.0 / nb.tau_alpha_prior.1,
            level: 0.0,
            zeta: if nb.temporal { vec![0.0; self.n_times] } else { Vec::new() },
            ar_coef: nb.ar_coef,
            ar_innov_var: nb.innov_prior.1 / (nb.innov_prior.0 + 1.0),
            h: nb.h,
            rho: self.opts.ssip.rho,
        })
    }

    /// Linear predictor of every row, checked against the guard.
    pub fn linear_predictor(&self, state: &NbState) -> Result<Vec<Vec<f64>>> {
        let p = self.p;
        let bound = self.opts.nb.psi_bound;
        self.regions
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let beta = &state.beta[i * p..(i + 1) * p];
                (0..r.m())
                    .map(|row| {
                        let psi = r.row_dot(row, beta) + state.offset(i, r.time_of(row));
                        if psi.abs() <= bound {
                            Ok(psi)
                        } else {
                            Err(SsipError::numerical(format!(
                                "linear predictor {psi:.3} outside [-{bound}, {bound}] at region {i}, row {row} (count {})",
                                r.y()[row]
                            )))
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// `ω ~ PG(Y + h, ψ)` for every observation.
    pub fn update_omega<R: Rng + ?Sized>(&self, state: &mut NbState, rng: &mut R) -> Result<()> {
        let psi = self.linear_predictor(state)?;
        let h = state.h;
        for (i, r) in self.regions.iter().enumerate() {
            for (row, &y) in r.y().iter().enumerate() {
                state.omega[i][row] = sample_pg_with(PgParams { b: y as f64 + h, c: psi[i][row] }, &self.opts.nb.pg, rng);
            }
        }
        Ok(())
    }

    /// Weighted regression statistics of the pseudo-data with the current
    /// offsets removed; this is what the collapsed update and `β` draw see.
    pub fn working_stats(&self, state: &NbState) -> Vec<RegionStats> {
        self.regions
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let target: Vec<f64> = compute_pseudo_data(r.y(), &state.omega[i], state.h)
                    .into_iter()
                    .enumerate()
                    .map(|(row, z)| z - state.offset(i, r.time_of(row)))
                    .collect();
                RegionStats::weighted(r.x(), &target, &state.omega[i])
            })
            .collect()
    }

    pub fn update_gamma_z<R: Rng + ?Sized>(&self, state: &mut NbState, rng: &mut R) -> Result<()> {
        let stats = self.working_stats(state);
        update_gamma_z(&mut state.field, self.graph, &stats, &state.mu, &state.tau2, state.rho, rng)
    }

    pub fn update_beta<R: Rng + ?Sized>(&self, state: &mut NbState, rng: &mut R) -> Result<()> {
        let stats = self.working_stats(state);
        update_beta(&mut state.beta, &state.field, &stats, &state.mu, &state.tau2, rng)
    }

    /// Per-row `(time, weight, residual)` of the pseudo-data after removing
    /// `x·β_i`, the level, and whichever of `α`, `ζ` are flagged.
    fn residuals(&self, state: &NbState, keep_alpha: bool, keep_zeta: bool) -> Vec<Vec<(usize, f64, f64)>> {
        let p = self.p;
        self.regions
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let beta = &state.beta[i * p..(i + 1) * p];
                let pseudo = compute_pseudo_data(r.y(), &state.omega[i], state.h);
                (0..r.m())
                    .map(|row| {
                        let t = r.time_of(row);
                        let mut res = pseudo[row] - r.row_dot(row, beta) - state.level;
                        if keep_alpha {
                            res -= state.alpha.get(i).copied().unwrap_or(0.0);
                        }
                        if keep_zeta {
                            res -= state.zeta.get(t).copied().unwrap_or(0.0);
                        }
                        (t, state.omega[i][row], res)
                    })
                    .collect()
            })
            .collect()
    }

    /// CAR intercept sweep, re-centering, then `τ_α`.
    pub fn update_alpha<R: Rng + ?Sized>(&self, state: &mut NbState, rng: &mut R) -> Result<()> {
        if state.alpha.is_empty() {
            return Ok(());
        }
        let res = self.residuals(state, false, true);
        let precision: Vec<f64> = res.iter().map(|rows| rows.iter().map(|r| r.1).sum()).collect();
        let weighted: Vec<f64> = res.iter().map(|rows| rows.iter().map(|r| r.1 * r.2).sum()).collect();
        sample_car_intercepts(&mut state.alpha, self.graph, state.tau_alpha, &precision, &weighted, rng);
        let mean = state.alpha.iter().sum::<f64>() / state.alpha.len() as f64;
        state.alpha.iter_mut().for_each(|a| *a -= mean);
        if self.opts.nb.forced_leading > 0 {
            let p = self.p;
            for i in 0..self.graph.n_regions() {
                state.beta[i * p] += mean;
            }
            state.mu[0] += mean;
        } else {
            state.level += mean;
        }
        let (shape, rate) = tau_alpha_conditional(&state.alpha, self.graph, self.opts.nb.tau_alpha_prior);
        state.tau_alpha = draw_gamma_rate(shape, rate, rng)?;
        Ok(())
    }

    /// Joint temporal-path draw, then the innovation variance.
    pub fn update_temporal<R: Rng + ?Sized>(&self, state: &mut NbState, rng: &mut R) -> Result<()> {
        if state.zeta.is_empty() {
            return Ok(());
        }
        let mut precision = vec![0.0; self.n_times];
        let mut weighted = vec![0.0; self.n_times];
        for rows in self.residuals(state, true, false) {
            for (t, w, r) in rows {
                precision[t] += w;
                weighted[t] += w * r;
            }
        }
        sample_ar1_path(&mut state.zeta, &precision, &weighted, state.ar_coef, state.ar_innov_var, rng)?;
        let (a, b) = self.opts.nb.innov_prior;
        let k = (self.n_times - 1) as f64;
        state.ar_innov_var = draw_inverse_gamma(a + 0.5 * k, b + 0.5 * ar1_innovation_ss(&state.zeta, state.ar_coef), rng)?;
        Ok(())
    }

    pub fn update_hyper<R: Rng + ?Sized>(&self, state: &mut NbState, rng: &mut R) -> Result<()> {
        update_slab(&state.beta, &state.field, &self.opts.hyper, &mut state.mu, &mut state.tau2, rng)
    }

    pub fn update_rho<R: Rng + ?Sized>(&mut self, state: &mut NbState, rng: &mut R) {
        if let Some(s) = self.rho_sampler.as_mut() {
            state.rho = s.step(&state.field, self.graph, state.rho, rng);
        }
    }

    pub fn sweep<R: Rng + ?Sized>(&mut self, state: &mut NbState, rng: &mut R) -> Result<()> {
        self.update_omega(state, rng)?;
        self.update_gamma_z(state, rng)?;
        self.update_beta(state, rng)?;
        self.update_alpha(state, rng)?;
        self.update_temporal(state, rng)?;
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

/// Number of time points; labels must cover `0..T` without gaps.
fn time_extent(regions: &[NbRegionData]) -> Result<usize> {
    let labels: Vec<usize> = regions.iter().filter_map(|r| r.time()).flatten().copied().collect();
    let Some(&max) = labels.iter().max() else {
        return Ok(1);
    };
    let mut seen = vec![false; max + 1];
    labels.iter().for_each(|&t| seen[t] = true);
    if let Some(gap) = seen.iter().position(|s| !s) {
        return Err(SsipError::InvalidData(format!("time labels are not contiguous: {gap} is missing")));
    }
    Ok(max + 1)
}

/// Runs `run.chains` independent chains (in parallel) of the count model.
pub fn fit_nb_ssip(
    regions: &[NbRegionData],
    graph: &AdjacencyGraph,
    opts: &NbOptions,
    run: &RunSettings,
) -> Result<PosteriorChain> {
    run.validate()?;
    let probe = NbSampler::new(graph, regions.to_vec(), *opts)?;
    let (p, n_times) = (probe.p(), probe.n_times());
    drop(probe);
    let chains = (0..run.chains)
        .into_par_iter()
        .map(|c| NbSampler::new(graph, regions.to_vec(), *opts)?.run_chain(run, c))
        .collect::<Result<Vec<_>>>()?;
    Ok(PosteriorChain {
        meta: RunMeta {
            engine: Engine::NegativeBinomial,
            settings: *run,
            config: opts.describe(),
        },
        n_regions: graph.n_regions(),
        p,
        n_times,
        intercept: (opts.nb.forced_leading > 0).then_some(0),
        dispersion: Some(opts.nb.h),
        chains,
    })
}

/// Simulates counts for one region from a coefficient vector and offsets.
pub fn simulate_counts<R: Rng + ?Sized>(x: &DMatrix<f64>, beta: &[f64], offsets: &[f64], h: f64, rng: &mut R) -> Vec<u64> {
    (0..x.nrows())
        .map(|r| {
            let psi: f64 = (0..x.ncols()).map(|j| x[(r, j)] * beta[j]).sum::<f64>() + offsets[r];
            sample_nb(h, psi, rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy(n: usize, m: usize, times: usize, seed: u64) -> Vec<NbRegionData> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let x = DMatrix::from_fn(m, 3, |_, j| if j == 0 { 1.0 } else { rng.random::<f64>() });
                let y = simulate_counts(&x, &[1.0, 1.0, 0.0], &vec![0.0; m], 2.0, &mut rng);
                let t = (times > 1).then(|| (0..m).map(|r| r % times).collect());
                NbRegionData::new(x, y, t).unwrap()
            })
            .collect()
    }

    #[test]
    fn pseudo_data_examples() {
        assert_eq!(compute_pseudo_data(&[1, 1], &[0.3, 7.0], 1.0), vec![0.0, 0.0]);
        assert_eq!(compute_pseudo_data(&[3], &[0.5], 1.0), vec![2.0]);
    }

    #[test]
    fn nb_draws_have_the_right_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (h, psi) = (2.0, 1.2);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| sample_nb(h, psi, &mut rng) as f64).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let mu = h * psi.exp();
        let sd = (mu + mu * mu / h).sqrt();
        assert!((mean - mu).abs() < 4.0 * sd / (n as f64).sqrt(), "{mean} vs {mu}");
    }

    #[test]
    fn car_conditional_without_data() {
        let g = AdjacencyGraph::grid(1, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 50_000;
        let mut draws = Vec::with_capacity(n);
        for _ in 0..n {
            let mut alpha = vec![0.0, 1.5];
            sample_car_intercepts(&mut alpha, &g, 2.0, &[0.0; 2], &[0.0; 2], &mut rng);
            draws.push(alpha[0]);
        }
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n as f64;
        assert!((mean - 1.5).abs() < 4.0 * (0.5 / n as f64).sqrt());
        assert_relative_eq!(var, 0.5, max_relative = 0.03);
    }

    #[test]
    fn tau_alpha_conditional_counts_components() {
        let g = AdjacencyGraph::from_edges(4, &[(0, 1), (2, 3)]).unwrap();
        let (shape, rate) = tau_alpha_conditional(&[0.0, 1.0, 2.0, 0.0], &g, (2.0, 1.0));
        assert_eq!(shape, 3.0);
        assert_eq!(rate, 1.0 + 0.5 * (1.0 + 4.0));
    }

    #[test]
    fn single_time_point_is_anchored() {
        let mut zeta = vec![3.0];
        sample_ar1_path(&mut zeta, &[1.0], &[1.0], 0.9, 1.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(zeta, vec![0.0]);
    }

    #[test]
    fn sweeps_keep_invariants_with_all_extensions() {
        let g = AdjacencyGraph::grid(2, 2).unwrap();
        let opts = NbOptions {
            nb: NbConfig {
                car_intercept: true,
                temporal: true,
                ..NbConfig::default()
            },
            ..NbOptions::default()
        };
        let mut s = NbSampler::new(&g, toy(4, 9, 3, 5), opts).unwrap();
        let mut st = s.initial_state().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..300 {
            s.sweep(&mut st, &mut rng).unwrap();
            assert!(st.is_valid());
            assert!(st.alpha.iter().sum::<f64>().abs() < 1e-9);
            assert_eq!(st.zeta.len(), 3);
        }
    }

    #[test]
    fn temporal_without_labels_is_rejected() {
        let g = AdjacencyGraph::grid(1, 2).unwrap();
        let opts = NbOptions {
            nb: NbConfig {
                temporal: true,
                ..NbConfig::default()
            },
            ..NbOptions::default()
        };
        assert!(NbSampler::new(&g, toy(2, 4, 1, 0), opts).is_err());
    }

    #[test]
    fn gapped_time_labels_are_rejected() {
        let x = DMatrix::from_element(2, 1, 1.0);
        let r = NbRegionData::new(x, vec![1, 2], Some(vec![0, 2])).unwrap();
        assert!(time_extent(&[r]).is_err());
    }

    #[test]
    fn guard_aborts_on_extreme_predictor() {
        let g = AdjacencyGraph::grid(1, 2).unwrap();
        let s = NbSampler::new(&g, toy(2, 4, 1, 0), NbOptions::default()).unwrap();
        let mut st = s.initial_state().unwrap();
        st.beta[0] = 40.0;
        let err = s.update_omega(&mut st, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
        assert!(err.to_string().contains("outside"));
    }

    #[test]
    fn seeded_fits_repeat() {
        let g = AdjacencyGraph::grid(2, 2).unwrap();
        let data = toy(4, 6, 1, 3);
        let run = RunSettings::new(200, 4);
        let a = fit_nb_ssip(&data, &g, &NbOptions::default(), &run).unwrap();
        let b = fit_nb_ssip(&data, &g, &NbOptions::default(), &run).unwrap();
        assert_eq!(a.chains[0].draws, b.chains[0].draws);
        assert_eq!(a.dispersion, Some(1.0));
    }
}
