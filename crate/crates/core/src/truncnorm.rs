//! One-sided truncated normal sampling.

use crate::special::{norm_cdf, norm_quantile};
use rand::Rng;
use rand_distr::{Distribution, Exp1};

/// Truncation points further than this many standard deviations into the
/// upper tail switch from inverse-CDF to exponential rejection.
pub const TAIL_SWITCH: f64 = 5.0;

/// Support of a one-sided truncated normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Truncation {
    /// `[bound, ∞)`
    Above(f64),
    /// `(−∞, bound]`
    Below(f64),
}

/// Draws a standard normal conditioned on `x ≥ a`.
pub fn sample_std_tail<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    if a > TAIL_SWITCH {
        // Robert (1995) translated-exponential proposal with optimal rate.
        let lambda = 0.5 * (a + (a * a + 4.0).sqrt());
        loop {
            let e: f64 = Exp1.sample(rng);
            let z = a + e / lambda;
            let u: f64 = rng.random();
            if u <= (-0.5 * (z - lambda) * (z - lambda)).exp() {
                return z;
            }
        }
    }
    // Invert in the mirrored lower tail, where Φ keeps full relative precision.
    let mass = norm_cdf(-a);
    let u = 1.0 - rng.random::<f64>();
    let x = -norm_quantile(u * mass);
    // Rounding can push x a hair below a when mass ≈ 1.
    x.max(a)
}

/// Draws from `N(mean, sd²)` restricted to `support`.
pub fn sample_truncated_normal<R: Rng + ?Sized>(
    mean: f64,
    sd: f64,
    support: Truncation,
    rng: &mut R,
) -> f64 {
    debug_assert!(sd > 0.0);
    match support {
        Truncation::Above(b) => mean + sd * sample_std_tail((b - mean) / sd, rng),
        Truncation::Below(b) => mean - sd * sample_std_tail((mean - b) / sd, rng),
    }
}

/// Draws from `N(mean, sd²)` restricted to the strictly positive half-line
/// (`positive == true`) or to `(−∞, 0]`.
pub fn sample_signed<R: Rng + ?Sized>(mean: f64, sd: f64, positive: bool, rng: &mut R) -> f64 {
    if positive {
        let x = sample_truncated_normal(mean, sd, Truncation::Above(0.0), rng);
        if x > 0.0 {
            x
        } else {
            f64::MIN_POSITIVE
        }
    } else {
        sample_truncated_normal(mean, sd, Truncation::Below(0.0), rng).min(0.0)
    }
}
