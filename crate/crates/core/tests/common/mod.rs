//! Independent reference computations shared by the integration tests.
//!
//! Nothing here calls the collapsed machinery under test: marginal
//! likelihoods are obtained by brute-force integration or dense linear
//! algebra, and prior draws are assembled from textbook distributions.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal, StandardNormal};
use ssip_core::graph::AdjacencyGraph;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Standard normal CDF through `erfc`, accurate in both tails.
pub fn phi(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Upper tail `1 − Φ(x)` without cancellation.
pub fn phi_upper(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// CDF of `N(0,1)` restricted to `[a, ∞)`.
pub fn truncated_above_cdf(x: f64, a: f64) -> f64 {
    if x <= a {
        0.0
    } else {
        (1.0 - phi_upper(x) / phi_upper(a)).clamp(0.0, 1.0)
    }
}

/// CDF of `N(0,1)` restricted to `(−∞, b]`.
pub fn truncated_below_cdf(x: f64, b: f64) -> f64 {
    if x >= b {
        1.0
    } else {
        (phi(x) / phi(b)).clamp(0.0, 1.0)
    }
}

/// `ln N(y; 0 + Xβ, σ² I)` summed over rows.
fn log_lik(x: &DMatrix<f64>, y: &[f64], beta: &[f64], active: &[usize], sigma2: f64) -> f64 {
    let mut ss = 0.0;
    for (r, &yr) in y.iter().enumerate() {
        let fit: f64 = active.iter().zip(beta).map(|(&j, b)| x[(r, j)] * b).sum();
        ss += (yr - fit).powi(2);
    }
    -0.5 * y.len() as f64 * (LN_2PI + sigma2.ln()) - 0.5 * ss / sigma2
}

fn log_prior(beta: &[f64], active: &[usize], mu: &[f64], tau2: &[f64]) -> f64 {
    active
        .iter()
        .zip(beta)
        .map(|(&j, b)| -0.5 * (LN_2PI + tau2[j].ln()) - 0.5 * (b - mu[j]).powi(2) / tau2[j])
        .sum()
}

/// Dense evaluation of `ln N(y; X_A μ_A, σ²I + X_A T_A X_Aᵀ)` with an explicit
/// `m × m` covariance.
pub fn dense_log_marginal(x: &DMatrix<f64>, y: &[f64], active: &[usize], mu: &[f64], tau2: &[f64], sigma2: f64) -> f64 {
    let m = y.len();
    let mut cov = DMatrix::identity(m, m) * sigma2;
    let mut mean = DVector::zeros(m);
    for r in 0..m {
        for &j in active {
            mean[r] += x[(r, j)] * mu[j];
            for c in 0..m {
                cov[(r, c)] += x[(r, j)] * tau2[j] * x[(c, j)];
            }
        }
    }
    let resid = DVector::from_column_slice(y) - mean;
    let inv = cov.clone().try_inverse().expect("covariance invertible");
    let quad = resid.dot(&(&inv * &resid));
    -0.5 * (m as f64 * LN_2PI + cov.determinant().ln() + quad)
}

/// Numerical integration of likelihood × slab prior over the active
/// coefficients (at most two). The integrand is first standardised around
/// its mode, located with finite-difference Newton steps, then integrated
/// with composite Simpson rules over ±12 standard deviations.
pub fn quadrature_log_marginal(x: &DMatrix<f64>, y: &[f64], active: &[usize], mu: &[f64], tau2: &[f64], sigma2: f64) -> f64 {
    let k = active.len();
    assert!(k <= 2, "quadrature oracle supports at most two active columns");
    let log_f = |b: &[f64]| log_lik(x, y, b, active, sigma2) + log_prior(b, active, mu, tau2);
    if k == 0 {
        return log_f(&[]);
    }
    let (mode, hess) = newton_mode(&log_f, k, active.iter().map(|&j| mu[j]).collect());
    // Standardise with the Cholesky factor of the negative Hessian.
    let neg = -hess;
    let chol = neg.clone().cholesky().expect("log-concave integrand");
    let l_inv = chol.l().try_inverse().expect("invertible factor");
    let jac = l_inv.determinant().abs();
    let peak = log_f(mode.as_slice());
    let half = 12.0;
    let n = 600; // even number of Simpson intervals per dimension
    let h = 2.0 * half / n as f64;
    let weight = |i: usize| if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
    let point = |u: &[f64]| -> Vec<f64> {
        let u = DVector::from_column_slice(u);
        (&mode + l_inv.transpose() * u).as_slice().to_vec()
    };
    let mut total = 0.0;
    if k == 1 {
        for i in 0..=n {
            let u = -half + i as f64 * h;
            total += weight(i) * (log_f(&point(&[u])) - peak).exp();
        }
        total *= h / 3.0;
    } else {
        for i in 0..=n {
            for j in 0..=n {
                let u = [-half + i as f64 * h, -half + j as f64 * h];
                total += weight(i) * weight(j) * (log_f(&point(&u)) - peak).exp();
            }
        }
        total *= (h / 3.0).powi(2);
    }
    peak + (total * jac).ln()
}

fn newton_mode(log_f: &dyn Fn(&[f64]) -> f64, k: usize, start: Vec<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eps = 1e-3;
    let grad_hess = |b: &DVector<f64>| {
        let mut g = DVector::zeros(k);
        let mut hm = DMatrix::zeros(k, k);
        let f0 = log_f(b.as_slice());
        for a in 0..k {
            let mut bp = b.clone();
            let mut bm = b.clone();
            bp[a] += eps;
            bm[a] -= eps;
            let (fp, fm) = (log_f(bp.as_slice()), log_f(bm.as_slice()));
            g[a] = (fp - fm) / (2.0 * eps);
            hm[(a, a)] = (fp - 2.0 * f0 + fm) / (eps * eps);
            for c in 0..a {
                let mut pp = b.clone();
                let mut pm = b.clone();
                let mut mp = b.clone();
                let mut mm = b.clone();
                pp[a] += eps;
                pp[c] += eps;
                pm[a] += eps;
                pm[c] -= eps;
                mp[a] -= eps;
                mp[c] += eps;
                mm[a] -= eps;
                mm[c] -= eps;
                let v = (log_f(pp.as_slice()) - log_f(pm.as_slice()) - log_f(mp.as_slice()) + log_f(mm.as_slice()))
                    / (4.0 * eps * eps);
                hm[(a, c)] = v;
                hm[(c, a)] = v;
            }
        }
        (g, hm)
    };
    let mut b = DVector::from_vec(start);
    for _ in 0..50 {
        let (g, hm) = grad_hess(&b);
        let step = hm.clone().lu().solve(&g).expect("non-singular Hessian");
        b -= &step;
        if step.norm() < 1e-12 {
            break;
        }
    }
    let (_, hm) = grad_hess(&b);
    (b, hm)
}

/// Monte Carlo estimate of the marginal likelihood by averaging the
/// likelihood over slab-prior draws. Returns `(ln estimate, relative SE)`.
pub fn monte_carlo_marginal<R: Rng>(
    x: &DMatrix<f64>,
    y: &[f64],
    active: &[usize],
    mu: &[f64],
    tau2: &[f64],
    sigma2: f64,
    draws: usize,
    rng: &mut R,
) -> (f64, f64) {
    let logs: Vec<f64> = (0..draws)
        .map(|_| {
            let b: Vec<f64> = active
                .iter()
                .map(|&j| Normal::new(mu[j], tau2[j].sqrt()).unwrap().sample(rng))
                .collect();
            log_lik(x, y, &b, active, sigma2)
        })
        .collect();
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let scaled: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let n = draws as f64;
    let mean = scaled.iter().sum::<f64>() / n;
    let var = scaled.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (top + mean.ln(), (var / n).sqrt() / mean)
}

/// Mean of `PG(b, c)` from its infinite-convolution representation
/// `(1/2π²) Σ_k g_k / ((k − ½)² + c²/4π²)`, `g_k ~ Gamma(b, 1)`, summed to
/// `terms` with an integral tail correction.
pub fn pg_series_mean(b: f64, c: f64, terms: usize) -> f64 {
    let pi2 = std::f64::consts::PI.powi(2);
    let d2 = c * c / (4.0 * pi2);
    let head: f64 = (1..=terms).map(|k| b / ((k as f64 - 0.5).powi(2) + d2)).sum();
    let n = terms as f64;
    let tail = if d2 > 0.0 {
        let d = d2.sqrt();
        b * (std::f64::consts::FRAC_PI_2 - (n / d).atan()) / d
    } else {
        b / n
    };
    (head + tail) / (2.0 * pi2)
}

/// Variance from the same representation (each `g_k` has variance `b`).
pub fn pg_series_var(b: f64, c: f64, terms: usize) -> f64 {
    let pi2 = std::f64::consts::PI.powi(2);
    let d2 = c * c / (4.0 * pi2);
    let sum: f64 = (1..=terms).map(|k| b / ((k as f64 - 0.5).powi(2) + d2).powi(2)).sum();
    let n = terms as f64;
    (sum + b / (3.0 * n.powi(3))) / (4.0 * pi2 * pi2)
}

/// Hyperparameters of the joint-distribution simulators.
#[derive(Debug, Clone, Copy)]
pub struct PriorSpec {
    pub mu0: f64,
    pub s0: f64,
    pub a_t: f64,
    pub b_t: f64,
    /// Precision prior `Gamma(a, rate b)` for the Gaussian noise.
    pub a: f64,
    pub b: f64,
    pub rho: f64,
}

/// One draw of every prior quantity for `n` regions and `p` free columns.
#[derive(Debug, Clone)]
pub struct PriorDraw {
    pub z: Vec<f64>,
    pub gamma: Vec<bool>,
    pub beta: Vec<f64>,
    pub mu: Vec<f64>,
    pub tau2: Vec<f64>,
    pub sigma2: Vec<f64>,
}

/// Dense CAR covariance `(D − ρW)⁻¹`.
pub fn car_covariance(graph: &AdjacencyGraph, rho: f64) -> DMatrix<f64> {
    let n = graph.n_regions();
    let mut q = DMatrix::zeros(n, n);
    for i in 0..n {
        q[(i, i)] = graph.degree(i) as f64;
        for &k in graph.neighbors(i) {
            q[(i, k)] -= rho;
        }
    }
    q.try_inverse().expect("proper CAR precision")
}

pub fn draw_prior<R: Rng>(graph: &AdjacencyGraph, p: usize, spec: &PriorSpec, rng: &mut R) -> PriorDraw {
    let n = graph.n_regions();
    let l = car_covariance(graph, spec.rho).cholesky().unwrap().l();
    let mut z = vec![0.0; n * p];
    for j in 0..p {
        let e = DVector::from_fn(n, |_, _| Distribution::<f64>::sample(&StandardNormal, rng));
        let col = &l * e;
        for i in 0..n {
            z[i * p + j] = col[i];
        }
    }
    let gamma: Vec<bool> = z.iter().map(|&v| v > 0.0).collect();
    let mu: Vec<f64> = (0..p)
        .map(|_| Normal::new(spec.mu0, spec.s0.sqrt()).unwrap().sample(rng))
        .collect();
    let tau2: Vec<f64> = (0..p)
        .map(|_| 1.0 / Gamma::new(spec.a_t, 1.0 / spec.b_t).unwrap().sample(rng))
        .collect();
    let beta = (0..n * p)
        .map(|k| {
            let j = k % p;
            if gamma[k] {
                Normal::new(mu[j], tau2[j].sqrt()).unwrap().sample(rng)
            } else {
                0.0
            }
        })
        .collect();
    let sigma2 = (0..n)
        .map(|_| 1.0 / Gamma::new(spec.a, 1.0 / spec.b).unwrap().sample(rng))
        .collect();
    PriorDraw {
        z,
        gamma,
        beta,
        mu,
        tau2,
        sigma2,
    }
}

pub fn gaussian_response<R: Rng>(x: &DMatrix<f64>, beta: &[f64], sigma2: f64, rng: &mut R) -> Vec<f64> {
    (0..x.nrows())
        .map(|r| {
            let fit: f64 = (0..x.ncols()).map(|j| x[(r, j)] * beta[j]).sum();
            fit + sigma2.sqrt() * Distribution::<f64>::sample(&StandardNormal, rng)
        })
        .collect()
}

/// Accumulates a named scalar series for moment comparisons.
#[derive(Debug, Default, Clone)]
pub struct Series {
    pub name: String,
    pub values: Vec<f64>,
}

impl Series {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            values: Vec::new(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Standard error of the mean for independent values.
    pub fn iid_se(&self) -> f64 {
        let n = self.values.len() as f64;
        let m = self.mean();
        let var = self.values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    }

    /// Batch-means standard error for a correlated chain.
    pub fn batch_se(&self, batches: usize) -> f64 {
        ssip_core::diagnostics::batch_means_se(&self.values, batches)
    }
}

/// Outcome of comparing one moment between two simulators.
#[derive(Debug, Clone)]
pub struct MomentCheck {
    pub name: String,
    pub z_score: f64,
}

/// Compares the means of matching series: the first set from a correlated
/// chain, the second from independent draws.
pub fn compare_series(chain: &[Series], independent: &[Series], batches: usize) -> Vec<MomentCheck> {
    chain
        .iter()
        .zip(independent)
        .map(|(a, b)| {
            assert_eq!(a.name, b.name);
            let se = (a.batch_se(batches).powi(2) + b.iid_se().powi(2)).sqrt();
            let diff = a.mean() - b.mean();
            MomentCheck {
                name: a.name.clone(),
                z_score: if se > 0.0 { diff / se } else if diff == 0.0 { 0.0 } else { f64::INFINITY },
            }
        })
        .collect()
}

pub mod joint;
pub mod naive;
