//! Latent-probit inclusion prior with CAR smoothing.
//!
//! Each covariate `j` carries a latent Gaussian column `Z_·j` over regions
//! with full conditionals
//!
//! ```text
//! Z_ij | Z_-ij ~ N(ρ/n_i · Σ_{k~i} Z_kj, 1/n_i)
//! ```
//!
//! and inclusion indicators `γ_ij = 1[Z_ij > 0]`. For `ρ < 1` the joint law is
//! `N(0, (D − ρW)⁻¹)` per column, so every `γ_ij` has marginal probability ½.

use crate::error::{Result, SsipError};
use crate::graph::AdjacencyGraph;
use crate::special::norm_cdf;
use crate::truncnorm::sample_signed;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Upper buffer keeping `D − ρW` invertible during Metropolis updates.
pub const RHO_EPS: f64 = 1e-6;

pub const DEFAULT_RHO: f64 = 0.9;

/// Row-major `n_regions × p` latent field with paired indicators.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentField {
    n_regions: usize,
    p: usize,
    z: Vec<f64>,
    gamma: Vec<bool>,
    forced: Vec<bool>,
}

impl LatentField {
    /// Every entry starts included with `Z = 0.5`.
    pub fn new(n_regions: usize, p: usize, forced: Vec<bool>) -> Result<Self> {
        Self::from_z(n_regions, p, vec![0.5; n_regions * p], forced)
    }

    /// Builds a field from latent values; indicators follow the sign of `z`.
    /// Forced entries must be positive.
    pub fn from_z(n_regions: usize, p: usize, z: Vec<f64>, forced: Vec<bool>) -> Result<Self> {
        if z.len() != n_regions * p || forced.len() != n_regions * p {
            return Err(SsipError::DimensionMismatch(format!(
                "latent field expects {} entries",
                n_regions * p
            )));
        }
        if let Some(idx) = (0..z.len()).find(|&k| forced[k] && z[k] <= 0.0) {
            return Err(SsipError::InvalidConfig(format!(
                "forced entry ({}, {}) has non-positive latent value",
                idx / p,
                idx % p
            )));
        }
        let gamma = z.iter().map(|&v| v > 0.0).collect();
        Ok(Self {
            n_regions,
            p,
            z,
            gamma,
            forced,
        })
    }

    pub fn n_regions(&self) -> usize {
        self.n_regions
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn z(&self, i: usize, j: usize) -> f64 {
        self.z[i * self.p + j]
    }

    pub fn gamma(&self, i: usize, j: usize) -> bool {
        self.gamma[i * self.p + j]
    }

    pub fn is_forced(&self, i: usize, j: usize) -> bool {
        self.forced[i * self.p + j]
    }

    pub fn z_values(&self) -> &[f64] {
        &self.z
    }

    pub fn gamma_values(&self) -> &[bool] {
        &self.gamma
    }

    pub fn forced_mask(&self) -> &[bool] {
        &self.forced
    }

    /// Indicator row for region `i`.
    pub fn gamma_row(&self, i: usize) -> &[bool] {
        &self.gamma[i * self.p..(i + 1) * self.p]
    }

    /// Writes a latent value and its thresholded indicator.
    pub fn set_z(&mut self, i: usize, j: usize, value: f64) {
        let k = i * self.p + j;
        debug_assert!(!self.forced[k] || value > 0.0);
        self.z[k] = value;
        self.gamma[k] = value > 0.0;
    }

    /// Sets an indicator ahead of the matching latent draw. Between this call
    /// and [`sample_z_given_gamma`] the field is temporarily inconsistent.
    pub fn set_gamma(&mut self, i: usize, j: usize, value: bool) {
        self.gamma[i * self.p + j] = value;
    }

    /// `γ = 1[Z > 0]` everywhere and forced entries are included.
    pub fn is_consistent(&self) -> bool {
        self.z
            .iter()
            .zip(&self.gamma)
            .zip(&self.forced)
            .all(|((&z, &g), &f)| g == (z > 0.0) && (!f || g))
    }

    /// Columns with no forced entries; only these carry a proper CAR law.
    pub fn free_columns(&self) -> Vec<usize> {
        (0..self.p)
            .filter(|&j| (0..self.n_regions).all(|i| !self.is_forced(i, j)))
            .collect()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_regions).map(|i| self.z(i, j)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RhoUpdate {
    Off,
    /// Reflected random-walk Metropolis with the given proposal scale.
    Metropolis { step: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsipConfig {
    pub rho: f64,
    pub rho_update: RhoUpdate,
}

impl Default for SsipConfig {
    fn default() -> Self {
        Self {
            rho: DEFAULT_RHO,
            rho_update: RhoUpdate::Off,
        }
    }
}

impl SsipConfig {
    pub fn fixed(rho: f64) -> Self {
        Self {
            rho,
            rho_update: RhoUpdate::Off,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(SsipError::InvalidConfig(format!("rho = {} outside [0, 1]", self.rho)));
        }
        if let RhoUpdate::Metropolis { step } = self.rho_update {
            if !(step > 0.0 && step.is_finite()) {
                return Err(SsipError::InvalidConfig(format!(
                    "rho proposal step must be positive, got {step}"
                )));
            }
            if self.rho > 1.0 - RHO_EPS {
                return Err(SsipError::InvalidConfig(
                    "rho must start below 1 when it is estimated".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Conditional mean and variance of `Z_ij` given the rest of column `j`.
pub fn conditional_moments(
    field: &LatentField,
    graph: &AdjacencyGraph,
    i: usize,
    j: usize,
    rho: f64,
) -> (f64, f64) {
    let n_i = graph.degree(i) as f64;
    let s = graph.neighbor_sum_strided(&field.z, field.p, i, j);
    (rho * s / n_i, 1.0 / n_i)
}

/// `w_ij = Φ(ρ · n_i^{-1/2} · Σ_{k~i} Z_kj)`.
pub fn conditional_inclusion_prob(
    field: &LatentField,
    graph: &AdjacencyGraph,
    i: usize,
    j: usize,
    rho: f64,
) -> f64 {
    let n_i = graph.degree(i) as f64;
    let s = graph.neighbor_sum_strided(&field.z, field.p, i, j);
    norm_cdf(rho * s / n_i.sqrt())
}

/// Redraws `Z_ij` from its conditional truncated to the side implied by the
/// current `γ_ij`, stores it, and returns it.
pub fn sample_z_given_gamma<R: Rng + ?Sized>(
    field: &mut LatentField,
    graph: &AdjacencyGraph,
    i: usize,
    j: usize,
    rho: f64,
    rng: &mut R,
) -> f64 {
    let (mean, var) = conditional_moments(field, graph, i, j, rho);
    let positive = field.gamma(i, j) || field.is_forced(i, j);
    let z = sample_signed(mean, var.sqrt(), positive, rng);
    field.set_z(i, j, z);
    z
}

/// One row-major Gibbs sweep of the prior alone: every unforced `Z_ij` is
/// redrawn from its untruncated conditional (so `γ_ij` follows by
/// thresholding) and forced entries from the positive half.
pub fn prior_sweep<R: Rng + ?Sized>(
    field: &mut LatentField,
    graph: &AdjacencyGraph,
    rho: f64,
    rng: &mut R,
) {
    for i in 0..field.n_regions {
        for j in 0..field.p {
            if field.is_forced(i, j) {
                sample_z_given_gamma(field, graph, i, j, rho, rng);
            } else {
                let (mean, var) = conditional_moments(field, graph, i, j, rho);
                let e: f64 = StandardNormal.sample(rng);
                field.set_z(i, j, mean + var.sqrt() * e);
            }
        }
    }
}

/// Exact joint draw of `p` independent CAR columns `N(0, (D − ρW)⁻¹)`.
/// Forced entries (if any) are afterwards redrawn from their positive
/// truncated conditionals in row-major order.
pub fn sample_prior_field<R: Rng + ?Sized>(
    graph: &AdjacencyGraph,
    rho: f64,
    p: usize,
    forced: Option<&[bool]>,
    rng: &mut R,
) -> Result<LatentField> {
    let chol = CarFactor::new(graph, rho)?;
    let n = graph.n_regions();
    let mut z = vec![0.0; n * p];
    for j in 0..p {
        let col = chol.draw(rng);
        for i in 0..n {
            z[i * p + j] = col[i];
        }
    }
    let forced = forced.map(<[bool]>::to_vec).unwrap_or_else(|| vec![false; n * p]);
    if forced.len() != n * p {
        return Err(SsipError::DimensionMismatch("forced mask size".into()));
    }
    // Temporarily mark forced entries positive so construction succeeds.
    for k in 0..n * p {
        if forced[k] {
            z[k] = z[k].abs().max(f64::MIN_POSITIVE);
        }
    }
    let mut field = LatentField::from_z(n, p, z, forced)?;
    for i in 0..n {
        for j in 0..p {
            if field.is_forced(i, j) {
                sample_z_given_gamma(&mut field, graph, i, j, rho, rng);
            }
        }
    }
    Ok(field)
}

/// Cholesky factor of a proper CAR precision for exact joint draws.
pub struct CarFactor {
    l: DMatrix<f64>,
}

impl CarFactor {
    pub fn new(graph: &AdjacencyGraph, rho: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rho) {
            return Err(SsipError::InvalidConfig(format!(
                "joint CAR draws need 0 <= rho < 1, got {rho}"
            )));
        }
        let q = graph.car_precision(rho)?.to_dense();
        let l = q
            .cholesky()
            .ok_or_else(|| SsipError::numerical("CAR precision is not positive definite"))?
            .l();
        Ok(Self { l })
    }

    /// `x = L⁻ᵀ e` so that `Cov(x) = (L Lᵀ)⁻¹`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let n = self.l.nrows();
        let e = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
        let x = self
            .l
            .transpose()
            .solve_upper_triangular(&e)
            .expect("Cholesky factor has a positive diagonal");
        x.as_slice().to_vec()
    }
}

/// Metropolis–Hastings update for `ρ` under a uniform prior on `[0, 1 − ε]`.
///
/// `ln det(D − ρW) = Σ ln n_i + Σ_k ln(1 − ρ λ_k)` with `λ_k` the eigenvalues
/// of `D^{-1/2} W D^{-1/2}`, so the determinant is cheap once the graph
/// spectrum is known.
#[derive(Debug, Clone)]
pub struct RhoSampler {
    eigenvalues: Vec<f64>,
    log_det_d: f64,
    step: f64,
    pub proposed: usize,
    pub accepted: usize,
}

impl RhoSampler {
    pub fn new(graph: &AdjacencyGraph, step: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(SsipError::InvalidConfig(format!(
                "rho proposal step must be positive, got {step}"
            )));
        }
        let n = graph.n_regions();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for &k in graph.neighbors(i) {
                m[(i, k)] = 1.0 / ((graph.degree(i) * graph.degree(k)) as f64).sqrt();
            }
        }
        let eigenvalues = SymmetricEigen::new(m).eigenvalues.as_slice().to_vec();
        let log_det_d = graph.degrees().iter().map(|&d| (d as f64).ln()).sum();
        Ok(Self {
            eigenvalues,
            log_det_d,
            step,
            proposed: 0,
            accepted: 0,
        })
    }

    pub fn log_det(&self, rho: f64) -> f64 {
        self.log_det_d + self.eigenvalues.iter().map(|&l| (1.0 - rho * l).ln()).sum::<f64>()
    }

    /// Joint CAR log-density (up to a constant) of the free columns.
    pub fn log_target(&self, field: &LatentField, graph: &AdjacencyGraph, rho: f64) -> f64 {
        let cols = field.free_columns();
        let mut quad = 0.0;
        for &j in &cols {
            for i in 0..field.n_regions() {
                let zi = field.z(i, j);
                let s = graph.neighbor_sum_strided(field.z_values(), field.p(), i, j);
                quad += graph.degree(i) as f64 * zi * zi - rho * zi * s;
            }
        }
        0.5 * cols.len() as f64 * self.log_det(rho) - 0.5 * quad
    }

    /// One reflected random-walk step; returns the new `ρ`.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        field: &LatentField,
        graph: &AdjacencyGraph,
        rho: f64,
        rng: &mut R,
    ) -> f64 {
        let e: f64 = StandardNormal.sample(rng);
        let proposal = reflect_rho(rho + self.step * e);
        self.proposed += 1;
        let log_ratio =
            self.log_target(field, graph, proposal) - self.log_target(field, graph, rho);
        let u: f64 = rng.random();
        if u.ln() < log_ratio {
            self.accepted += 1;
            proposal
        } else {
            rho
        }
    }
}

/// Folds a proposal back into `[0, 1 − ε]` by reflection at both ends.
pub fn reflect_rho(mut x: f64) -> f64 {
    let hi = 1.0 - RHO_EPS;
    if !x.is_finite() {
        return 0.5 * hi;
    }
    let period = 2.0 * hi;
    x = x.rem_euclid(period);
    if x > hi {
        period - x
    } else {
        x
    }
}

/// Convenience wrapper building a [`RhoSampler`] for a single update.
pub fn update_rho_mh<R: Rng + ?Sized>(
    field: &LatentField,
    graph: &AdjacencyGraph,
    config: &SsipConfig,
    rng: &mut R,
) -> Result<f64> {
    config.validate()?;
    match config.rho_update {
        RhoUpdate::Off => Err(SsipError::InvalidConfig("rho update is disabled".into())),
        RhoUpdate::Metropolis { step } => {
            let mut sampler = RhoSampler::new(graph, step)?;
            Ok(sampler.step(field, graph, config.rho, rng))
        }
    }
}
