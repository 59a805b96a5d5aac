//! Collapsed spike-and-slab machinery shared by the Gaussian and
//! negative-binomial engines.
//!
//! Both engines reduce, conditionally, to a weighted Gaussian regression
//! `y ~ N(Xβ, diag(1/w))` per region: the Gaussian engine has `w = 1/σ²_i`,
//! the NB engine has `w = ω` and `y` the Pólya-Gamma pseudo-data. Everything
//! here works from the weighted cross-products of that regression.

use crate::error::{Result, SsipError};
use crate::graph::AdjacencyGraph;
use crate::special::{log_add_exp, log_norm_cdf, LN_SQRT_2PI};
use crate::ssip::{sample_z_given_gamma, LatentField};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal, StandardNormal};

/// Prior on the slab means and variances: `μ_j ~ N(μ₀, s₀)`,
/// `τ²_j ~ IG(a_t, b_t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlabPrior {
    pub mu0: f64,
    pub s0: f64,
    pub a_t: f64,
    pub b_t: f64,
}

impl Default for SlabPrior {
    fn default() -> Self {
        Self {
            mu0: 0.0,
            s0: 100.0,
            a_t: 2.0,
            b_t: 1.0,
        }
    }
}

impl SlabPrior {
    pub fn validate(&self) -> Result<()> {
        let ok = self.mu0.is_finite()
            && [self.s0, self.a_t, self.b_t].iter().all(|v| *v > 0.0 && v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(SsipError::InvalidConfig(format!("invalid slab prior {self:?}")))
        }
    }
}

/// Weighted sufficient statistics `XᵀWX`, `XᵀWy`, `yᵀWy` of one region.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionStats {
    p: usize,
    m: usize,
    gram: DMatrix<f64>,
    xty: DVector<f64>,
    yty: f64,
    /// `Σ ln(1/w_r)`, the log-determinant of the noise covariance.
    log_det_noise: f64,
}

impl RegionStats {
    /// `x` is `m × p`; `weights` are per-row precisions.
    pub fn weighted(x: &DMatrix<f64>, y: &[f64], weights: &[f64]) -> Self {
        let (m, p) = x.shape();
        debug_assert_eq!(y.len(), m);
        debug_assert_eq!(weights.len(), m);
        let mut gram = DMatrix::zeros(p, p);
        let mut xty = DVector::zeros(p);
        let mut yty = 0.0;
        let mut log_det_noise = 0.0;
        for r in 0..m {
            let w = weights[r];
            let yr = y[r];
            yty += w * yr * yr;
            log_det_noise -= w.ln();
            for a in 0..p {
                let xa = x[(r, a)];
                if xa == 0.0 {
                    continue;
                }
                xty[a] += w * xa * yr;
                for b in a..p {
                    gram[(a, b)] += w * xa * x[(r, b)];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                gram[(a, b)] = gram[(b, a)];
            }
        }
        Self {
            p,
            m,
            gram,
            xty,
            yty,
            log_det_noise,
        }
    }

    /// Homoskedastic statistics with noise variance `sigma2`.
    pub fn homoskedastic(x: &DMatrix<f64>, y: &[f64], sigma2: f64) -> Self {
        Self::weighted(x, y, &vec![1.0 / sigma2; y.len()])
    }

    /// No observations: the marginal likelihood is identically one and the
    /// coefficient conditional is the prior.
    pub fn empty(p: usize) -> Self {
        Self {
            p,
            m: 0,
            gram: DMatrix::zeros(p, p),
            xty: DVector::zeros(p),
            yty: 0.0,
            log_det_noise: 0.0,
        }
    }

    /// Rescales unit-weight statistics to noise variance `sigma2`.
    pub fn rescaled(&self, sigma2: f64) -> Self {
        let s = 1.0 / sigma2;
        Self {
            p: self.p,
            m: self.m,
            gram: &self.gram * s,
            xty: &self.xty * s,
            yty: self.yty * s,
            log_det_noise: self.log_det_noise + self.m as f64 * sigma2.ln(),
        }
    }

    pub fn n_obs(&self) -> usize {
        self.m
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Posterior precision `X_AᵀWX_A + T_A⁻¹` and the pieces needed by both the
    /// marginal likelihood and the coefficient draw.
    fn active_system(
        &self,
        active: &[usize],
        mu: &[f64],
    ) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
        let k = active.len();
        let mut prec = DMatrix::zeros(k, k);
        let mut c = DVector::zeros(k);
        let mut m_a = DVector::zeros(k);
        for (a, &ja) in active.iter().enumerate() {
            c[a] = self.xty[ja];
            m_a[a] = mu[ja];
            for (b, &jb) in active.iter().enumerate() {
                prec[(a, b)] = self.gram[(ja, jb)];
            }
        }
        (prec, c, m_a)
    }

    /// `ln N(y; X_A μ_A, W⁻¹ + X_A T_A X_Aᵀ)` via the Woodbury identity and the
    /// matrix determinant lemma, using only `k × k` linear algebra.
    pub fn log_marginal(&self, active: &[usize], mu: &[f64], tau2: &[f64]) -> Result<f64> {
        let (gram_a, c, m_a) = self.active_system(active, mu);
        let g_mu = &gram_a * &m_a;
        // Weighted residual norm of r = y − X_A μ_A.
        let rwr = self.yty - 2.0 * c.dot(&m_a) + m_a.dot(&g_mu);
        let b = &c - &g_mu;
        let mut prec = gram_a;
        let mut log_det_t = 0.0;
        for (a, &ja) in active.iter().enumerate() {
            prec[(a, a)] += 1.0 / tau2[ja];
            log_det_t += tau2[ja].ln();
        }
        let (quad, log_det_prec) = if active.is_empty() {
            (rwr, 0.0)
        } else {
            let chol = prec.cholesky().ok_or_else(|| {
                SsipError::numerical("posterior precision not positive definite")
            })?;
            let sol = chol.solve(&b);
            let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
            (rwr - b.dot(&sol), log_det)
        };
        let value = -(self.m as f64) * LN_SQRT_2PI
            - 0.5 * (self.log_det_noise + log_det_t + log_det_prec)
            - 0.5 * quad;
        if value.is_finite() {
            Ok(value)
        } else {
            Err(SsipError::numerical(format!(
                "non-finite marginal likelihood (active {active:?})"
            )))
        }
    }

    /// Draws the active coefficients from `N(M⁻¹m, M⁻¹)` with
    /// `M = X_AᵀWX_A + T_A⁻¹` and `m = X_AᵀWy + T_A⁻¹μ_A`.
    pub fn draw_active_beta<R: Rng + ?Sized>(
        &self,
        active: &[usize],
        mu: &[f64],
        tau2: &[f64],
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        if active.is_empty() {
            return Ok(Vec::new());
        }
        let (mut prec, mut rhs, _) = self.active_system(active, mu);
        for (a, &ja) in active.iter().enumerate() {
            prec[(a, a)] += 1.0 / tau2[ja];
            rhs[a] += mu[ja] / tau2[ja];
        }
        let chol = prec
            .cholesky()
            .ok_or_else(|| SsipError::numerical("coefficient precision not positive definite"))?;
        let mean = chol.solve(&rhs);
        let e = DVector::from_fn(active.len(), |_, _| StandardNormal.sample(rng));
        let l = chol.l();
        let offset = l
            .transpose()
            .solve_upper_triangular(&e)
            .ok_or_else(|| SsipError::numerical("singular Cholesky factor"))?;
        let beta = mean + offset;
        if beta.iter().all(|b| b.is_finite()) {
            Ok(beta.as_slice().to_vec())
        } else {
            Err(SsipError::numerical("non-finite coefficient draw"))
        }
    }
}

/// Indices of included columns in an indicator row.
pub fn active_set(gamma_row: &[bool]) -> Vec<usize> {
    gamma_row
        .iter()
        .enumerate()
        .filter_map(|(j, &g)| g.then_some(j))
        .collect()
}

/// Posterior probability of inclusion from `ln w`, `ln(1−w)` and the two
/// log marginal likelihoods, computed in log space.
pub fn inclusion_posterior(log_w: f64, log_1mw: f64, log_psi1: f64, log_psi0: f64) -> f64 {
    let a = log_w + log_psi1;
    let b = log_1mw + log_psi0;
    (a - log_add_exp(a, b)).exp()
}

/// One row-major sweep of the collapsed `(γ_ij, Z_ij)` update.
///
/// For each unforced entry, `γ_ij` is drawn from its conditional with `β_i`
/// integrated out, then `Z_ij` from its CAR conditional truncated to agree
/// with `γ_ij`. Forced entries only refresh `Z_ij` on the positive half.
pub fn update_gamma_z<R: Rng + ?Sized>(
    field: &mut LatentField,
    graph: &AdjacencyGraph,
    stats: &[RegionStats],
    mu: &[f64],
    tau2: &[f64],
    rho: f64,
    rng: &mut R,
) -> Result<()> {
    let p = field.p();
    let n_i_sqrt: Vec<f64> = graph.degrees().iter().map(|&d| (d as f64).sqrt()).collect();
    let mut active = Vec::with_capacity(p);
    for i in 0..field.n_regions() {
        for j in 0..p {
            if !field.is_forced(i, j) {
                let s = graph.neighbor_sum_strided(field.z_values(), p, i, j);
                let x = rho * s / n_i_sqrt[i];
                active.clear();
                active.extend((0..p).filter(|&k| k != j && field.gamma(i, k)));
                let log_psi0 = stats[i].log_marginal(&active, mu, tau2)?;
                let pos = active.partition_point(|&k| k < j);
                active.insert(pos, j);
                let log_psi1 = stats[i].log_marginal(&active, mu, tau2)?;
                let prob = inclusion_posterior(log_norm_cdf(x), log_norm_cdf(-x), log_psi1, log_psi0);
                let u: f64 = rng.random();
                field.set_gamma(i, j, u < prob);
            }
            sample_z_given_gamma(field, graph, i, j, rho, rng);
        }
    }
    Ok(())
}

/// Redraws every region's coefficients given the indicators; excluded
/// coefficients are set to exactly zero. `beta` is row-major `n × p`.
pub fn update_beta<R: Rng + ?Sized>(
    beta: &mut [f64],
    field: &LatentField,
    stats: &[RegionStats],
    mu: &[f64],
    tau2: &[f64],
    rng: &mut R,
) -> Result<()> {
    let p = field.p();
    for (i, st) in stats.iter().enumerate() {
        let active = active_set(field.gamma_row(i));
        let draw = st.draw_active_beta(&active, mu, tau2, rng)?;
        let row = &mut beta[i * p..(i + 1) * p];
        row.fill(0.0);
        for (&j, b) in active.iter().zip(draw) {
            row[j] = b;
        }
    }
    Ok(())
}

/// Conjugate updates of `μ_j` then `τ²_j` from the included coefficients.
/// With no region including `j`, both are drawn from their priors.
pub fn update_slab<R: Rng + ?Sized>(
    beta: &[f64],
    field: &LatentField,
    prior: &SlabPrior,
    mu: &mut [f64],
    tau2: &mut [f64],
    rng: &mut R,
) -> Result<()> {
    let p = field.p();
    for j in 0..p {
        let included: Vec<f64> = (0..field.n_regions())
            .filter(|&i| field.gamma(i, j))
            .map(|i| beta[i * p + j])
            .collect();
        let count = included.len() as f64;
        let sum: f64 = included.iter().sum();
        let prec = 1.0 / prior.s0 + count / tau2[j];
        let mean = (prior.mu0 / prior.s0 + sum / tau2[j]) / prec;
        mu[j] = Normal::new(mean, prec.recip().sqrt())
            .map_err(|e| SsipError::numerical(format!("slab mean: {e}")))?
            .sample(rng);
        let ss: f64 = included.iter().map(|b| (b - mu[j]).powi(2)).sum();
        tau2[j] = draw_inverse_gamma(prior.a_t + 0.5 * count, prior.b_t + 0.5 * ss, rng)?;
    }
    Ok(())
}

/// `1 / Gamma(shape, rate)`.
pub fn draw_inverse_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    Ok(1.0 / draw_gamma_rate(shape, rate, rng)?)
}

/// Gamma draw in the shape/rate parameterisation.
pub fn draw_gamma_rate<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    let g = Gamma::new(shape, 1.0 / rate)
        .map_err(|e| SsipError::numerical(format!("Gamma({shape}, {rate}): {e}")))?;
    let v = g.sample(rng);
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(SsipError::numerical(format!("degenerate Gamma({shape}, {rate}) draw")))
    }
}
