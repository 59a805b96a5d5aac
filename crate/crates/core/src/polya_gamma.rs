//! Pólya-Gamma `PG(b, c)` sampling and moments.
//!
//! `PG(1, c)` is drawn exactly with Devroye's alternating-series rejection
//! sampler in the form given by Polson, Scott and Windle. Integer shapes are
//! sums of unit draws; a fractional remainder uses the truncated
//! sum-of-gammas representation; very large shapes switch to a moment-matched
//! normal.

use crate::error::{Result, SsipError};
use crate::special::norm_cdf;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use std::f64::consts::{FRAC_PI_2, PI};

/// Truncation point of the two-piece proposal for `J*(1, z)`.
const TRUNC: f64 = 0.64;
/// Below this `|c|` the `c → 0` limits of the moment formulas are used.
const SMALL_C: f64 = 1e-8;

/// Shape `b > 0` and tilting `c` of a Pólya-Gamma law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgParams {
    pub b: f64,
    pub c: f64,
}

impl PgParams {
    pub fn new(b: f64, c: f64) -> Result<Self> {
        if b > 0.0 && b.is_finite() && c.is_finite() {
            Ok(Self { b, c })
        } else {
            Err(SsipError::InvalidConfig(format!("PG shape must be positive and finite, got b={b}, c={c}")))
        }
    }
}

/// Tuning of the composite sampler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgConfig {
    /// Shapes above this are drawn from the moment-matched normal.
    pub gaussian_crossover: f64,
    /// Number of gamma terms for the fractional-shape series.
    pub series_terms: usize,
}

impl Default for PgConfig {
    fn default() -> Self {
        Self {
            gaussian_crossover: 170.0,
            series_terms: 200,
        }
    }
}

/// `E[PG(b, c)] = (b / 2c) tanh(c / 2)`.
pub fn pg_mean(params: PgParams) -> f64 {
    let PgParams { b, c } = params;
    if c.abs() < SMALL_C {
        b / 4.0
    } else {
        b / (2.0 * c) * (0.5 * c).tanh()
    }
}

/// `Var[PG(b, c)] = b (2 tanh(c/2) − c sech²(c/2)) / (4c³)`.
pub fn pg_var(params: PgParams) -> f64 {
    let PgParams { b, c } = params;
    let c = c.abs();
    if c < 1e-4 {
        return b / 24.0 * (1.0 - c * c / 5.0);
    }
    let sech = 1.0 / (0.5 * c).cosh();
    b / (4.0 * c.powi(3)) * (2.0 * (0.5 * c).tanh() - c * sech * sech)
}

/// Draws from `PG(b, c)` with the default configuration.
pub fn sample_pg<R: Rng + ?Sized>(params: PgParams, rng: &mut R) -> f64 {
    sample_pg_with(params, &PgConfig::default(), rng)
}

/// Draws from `PG(b, c)`; the result is strictly positive.
pub fn sample_pg_with<R: Rng + ?Sized>(params: PgParams, config: &PgConfig, rng: &mut R) -> f64 {
    let PgParams { b, c } = params;
    debug_assert!(b > 0.0);
    if b > config.gaussian_crossover {
        return sample_moment_matched(params, rng);
    }
    let whole = b.floor();
    let frac = b - whole;
    let mut total = 0.0;
    for _ in 0..whole as usize {
        total += sample_pg_one(c, rng);
    }
    if frac > 0.0 {
        total += sample_series(frac, c, config.series_terms, rng);
    }
    total.max(f64::MIN_POSITIVE)
}

fn sample_moment_matched<R: Rng + ?Sized>(params: PgParams, rng: &mut R) -> f64 {
    let mean = pg_mean(params);
    let sd = pg_var(params).sqrt();
    loop {
        let e: f64 = StandardNormal.sample(rng);
        let x = mean + sd * e;
        if x > 0.0 {
            return x;
        }
    }
}

/// Truncated sum-of-gammas draw,
/// `(1/2π²) Σ_k g_k / ((k − ½)² + c²/4π²)` with `g_k ~ Gamma(b, 1)`,
/// plus the expected value of the omitted tail.
fn sample_series<R: Rng + ?Sized>(b: f64, c: f64, terms: usize, rng: &mut R) -> f64 {
    let gamma = Gamma::new(b, 1.0).expect("positive shape");
    let d2 = c * c / (4.0 * PI * PI);
    let mut sum = 0.0;
    for k in 1..=terms {
        let h = k as f64 - 0.5;
        let g: f64 = gamma.sample(rng);
        sum += g / (h * h + d2);
    }
    let d = d2.sqrt();
    let n = terms as f64;
    let tail = if d < 1e-12 {
        1.0 / n
    } else {
        (FRAC_PI_2 - (n / d).atan()) / d
    };
    (sum + b * tail) / (2.0 * PI * PI)
}

/// Exact `PG(1, c)` via `J*(1, |c|/2) / 4`.
fn sample_pg_one<R: Rng + ?Sized>(c: f64, rng: &mut R) -> f64 {
    let z = 0.5 * c.abs();
    let k = PI * PI / 8.0 + 0.5 * z * z;
    let p = PI / (2.0 * k) * (-k * TRUNC).exp();
    let rt = (1.0 / TRUNC).sqrt();
    let b_arg = rt * (TRUNC * z - 1.0);
    let a_arg = -rt * (TRUNC * z + 1.0);
    let q = 2.0 * ((-z).exp() * norm_cdf(b_arg) + z.exp() * norm_cdf(a_arg));
    let p_right = p / (p + q);
    loop {
        let x = if rng.random::<f64>() < p_right {
            let e: f64 = Exp1.sample(rng);
            TRUNC + e / k
        } else {
            truncated_inverse_gaussian(z, rng)
        };
        if accept_series(x, rng) {
            return 0.25 * x;
        }
    }
}

/// Alternating-series acceptance test for a proposal `x`.
fn accept_series<R: Rng + ?Sized>(x: f64, rng: &mut R) -> bool {
    let mut s = series_coef(0, x);
    let y = rng.random::<f64>() * s;
    let mut n = 0;
    loop {
        n += 1;
        if n % 2 == 1 {
            s -= series_coef(n, x);
            if y <= s {
                return true;
            }
        } else {
            s += series_coef(n, x);
            if y > s {
                return false;
            }
        }
    }
}

/// Piecewise coefficient `a_n(x)` of the Jacobi density series.
fn series_coef(n: usize, x: f64) -> f64 {
    let h = n as f64 + 0.5;
    if x > TRUNC {
        PI * h * (-0.5 * h * h * PI * PI * x).exp()
    } else {
        PI * h * (2.0 / (PI * x)).powf(1.5) * (-2.0 * h * h / x).exp()
    }
}

/// Inverse Gaussian with mean `1/z`, shape 1, restricted to `(0, TRUNC)`.
fn truncated_inverse_gaussian<R: Rng + ?Sized>(z: f64, rng: &mut R) -> f64 {
    let t = TRUNC;
    if z < 1.0 / t {
        // Mean beyond the truncation point: propose from the Lévy-type
        // envelope and accept with the exponential tilt.
        loop {
            let e1 = loop {
                let e1: f64 = Exp1.sample(rng);
                let e2: f64 = Exp1.sample(rng);
                if e1 * e1 <= 2.0 * e2 / t {
                    break e1;
                }
            };
            let x = t / (1.0 + t * e1).powi(2);
            if rng.random::<f64>() <= (-0.5 * z * z * x).exp() {
                return x;
            }
        }
    }
    let mu = 1.0 / z;
    loop {
        let n: f64 = StandardNormal.sample(rng);
        let y = n * n;
        let mut x = mu + 0.5 * mu * mu * y - 0.5 * mu * (4.0 * mu * y + (mu * y).powi(2)).sqrt();
        if rng.random::<f64>() > mu / (mu + x) {
            x = mu * mu / x;
        }
        if x < t {
            return x;
        }
    }
}
