//! Capture-recapture: list-intersection tables, log-linear interaction
//! designs, and unseen-population estimates from count-model posteriors.
//!
//! A capture pattern `d₁…d_K` is stored as an integer with `d₁` as the most
//! significant bit, so `"001"` is 1 and `"1010"` is 10. Design rows are the
//! patterns `1..2^K − 1` in increasing order.

use crate::chain::{quantile_sorted, PosteriorChain};
use crate::error::{Result, SsipError};
use crate::nb::{sample_nb, NbRegionData};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::function::beta::beta_reg;

/// Largest supported list count.
pub const MAX_LISTS: usize = 16;

/// Parses a 0/1 capture string into `(K, pattern)`.
pub fn parse_pattern(s: &str) -> Result<(usize, u32)> {
    let k = s.len();
    if k == 0 || k > MAX_LISTS {
        return Err(SsipError::InvalidData(format!("pattern {s:?} must have 1..={MAX_LISTS} characters")));
    }
    let mut bits = 0u32;
    for ch in s.chars() {
        bits <<= 1;
        match ch {
            '0' => {}
            '1' => bits |= 1,
            _ => return Err(SsipError::InvalidData(format!("pattern {s:?} contains {ch:?}"))),
        }
    }
    Ok((k, bits))
}

/// Formats a pattern as a `K`-character 0/1 string.
pub fn format_pattern(pattern: u32, k: usize) -> String {
    (0..k).map(|l| if pattern >> (k - 1 - l) & 1 == 1 { '1' } else { '0' }).collect()
}

/// Whether list `l` (0-based, `d_{l+1}`) appears in `pattern`.
pub fn on_list(pattern: u32, k: usize, l: usize) -> bool {
    pattern >> (k - 1 - l) & 1 == 1
}

/// One captured individual.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CaptureHistory {
    pub region: usize,
    pub time: usize,
    pub pattern: u32,
}

/// Intersection counts for every `(region, time)` stratum.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptureTable {
    k: usize,
    n_regions: usize,
    n_times: usize,
    /// `counts[(region * n_times + time) * cells + pattern − 1]`.
    counts: Vec<u64>,
}

impl CaptureTable {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_regions(&self) -> usize {
        self.n_regions
    }

    pub fn n_times(&self) -> usize {
        self.n_times
    }

    /// `2^K − 1`.
    pub fn n_cells(&self) -> usize {
        (1usize << self.k) - 1
    }

    /// Counts of one stratum indexed by `pattern − 1`.
    pub fn stratum(&self, region: usize, time: usize) -> &[u64] {
        let c = self.n_cells();
        let start = (region * self.n_times + time) * c;
        &self.counts[start..start + c]
    }

    pub fn count(&self, region: usize, time: usize, pattern: u32) -> u64 {
        self.stratum(region, time)[pattern as usize - 1]
    }

    pub fn stratum_total(&self, region: usize, time: usize) -> u64 {
        self.stratum(region, time).iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Strata with no captured individuals.
    pub fn is_sparse(&self, region: usize, time: usize) -> bool {
        self.stratum_total(region, time) == 0
    }

    /// One count-model region per spatial unit: every time point contributes
    /// the `2^K − 1` design rows, labelled with its time index.
    pub fn to_regions(&self, design: &CrcDesign) -> Result<Vec<NbRegionData>> {
        if design.k() != self.k {
            return Err(SsipError::DimensionMismatch(format!(
                "design built for K={} but table has K={}",
                design.k(),
                self.k
            )));
        }
        let c = self.n_cells();
        let p = design.n_columns();
        (0..self.n_regions)
            .map(|i| {
                let rows = c * self.n_times;
                let x = DMatrix::from_fn(rows, p, |r, j| design.matrix()[(r % c, j)]);
                let y = (0..self.n_times).flat_map(|t| self.stratum(i, t).iter().copied()).collect();
                let time = (0..rows).map(|r| r / c).collect();
                NbRegionData::new(x, y, Some(time))
            })
            .collect()
    }
}

/// Counts individuals per `(region, time, pattern)`; strata without captures
/// are kept as all-zero rows.
pub fn build_intersection_table(
    k: usize,
    n_regions: usize,
    n_times: usize,
    histories: &[CaptureHistory],
) -> Result<CaptureTable> {
    if k == 0 || k > MAX_LISTS {
        return Err(SsipError::InvalidConfig(format!("list count must be in 1..={MAX_LISTS}, got {k}")));
    }
    if n_regions == 0 || n_times == 0 {
        return Err(SsipError::InvalidConfig("table needs at least one region and time".into()));
    }
    let cells = (1usize << k) - 1;
    let mut counts = vec![0u64; n_regions * n_times * cells];
    for (idx, h) in histories.iter().enumerate() {
        if h.pattern == 0 {
            return Err(SsipError::InvalidData(format!("history {idx} was captured on no list")));
        }
        if h.pattern as usize > cells {
            return Err(SsipError::InvalidData(format!("history {idx} has a pattern wider than K={k}")));
        }
        if h.region >= n_regions || h.time >= n_times {
            return Err(SsipError::InvalidData(format!(
                "history {idx} refers to region {} / time {} outside the table",
                h.region, h.time
            )));
        }
        counts[(h.region * n_times + h.time) * cells + h.pattern as usize - 1] += 1;
    }
    Ok(CaptureTable {
        k,
        n_regions,
        n_times,
        counts,
    })
}

/// Log-linear design over the observable cells: intercept, `K` main effects,
/// then interactions ordered by size and lexicographically within a size.
#[derive(Debug, Clone, PartialEq)]
pub struct CrcDesign {
    k: usize,
    max_order: usize,
    terms: Vec<Vec<usize>>,
    matrix: DMatrix<f64>,
}

impl CrcDesign {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn n_rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_columns(&self) -> usize {
        self.terms.len()
    }

    /// Intercept plus main effects.
    pub fn n_forced(&self) -> usize {
        1 + self.k
    }

    pub fn n_unforced(&self) -> usize {
        self.n_columns() - self.n_forced()
    }

    /// Member lists (0-based) of each column; the intercept is empty.
    pub fn terms(&self) -> &[Vec<usize>] {
        &self.terms
    }

    pub fn forced_mask(&self) -> Vec<bool> {
        (0..self.n_columns()).map(|j| j < self.n_forced()).collect()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Readable column names such as `intercept`, `d1`, `d1:d3`.
    pub fn column_names(&self) -> Vec<String> {
        self.terms
            .iter()
            .map(|t| {
                if t.is_empty() {
                    "intercept".to_string()
                } else {
                    t.iter().map(|l| format!("d{}", l + 1)).collect::<Vec<_>>().join(":")
                }
            })
            .collect()
    }
}

fn combinations(k: usize, r: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, k: usize, r: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == r {
            out.push(cur.clone());
            return;
        }
        for l in start..k {
            cur.push(l);
            rec(l + 1, k, r, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, k, r, &mut Vec::with_capacity(r), &mut out);
    out
}

pub fn build_design(k: usize, max_order: usize) -> Result<CrcDesign> {
    if k == 0 || k > MAX_LISTS {
        return Err(SsipError::InvalidConfig(format!("list count must be in 1..={MAX_LISTS}, got {k}")));
    }
    if max_order == 0 || max_order > k {
        return Err(SsipError::InvalidConfig(format!("interaction order must be in 1..={k}, got {max_order}")));
    }
    let mut terms = vec![Vec::new()];
    for r in 1..=max_order {
        terms.extend(combinations(k, r));
    }
    let rows = (1usize << k) - 1;
    let matrix = DMatrix::from_fn(rows, terms.len(), |r, j| {
        let pattern = (r + 1) as u32;
        f64::from(u8::from(terms[j].iter().all(|&l| on_list(pattern, k, l))))
    });
    Ok(CrcDesign {
        k,
        max_order,
        terms,
        matrix,
    })
}

/// Predictive summary of the unseen (all-zeros) cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnseenEstimate {
    pub mean: f64,
    pub median: f64,
    pub lo95: f64,
    pub hi95: f64,
    /// `h·exp` of the posterior-mean log-rate at the unseen cell, the
    /// plug-in analogue of the model-averaged estimate.
    pub plug_in: f64,
}

/// Log-rate `ψ₀` of the unseen cell for every draw (intercept column,
/// CAR intercept, level and temporal shift).
pub fn unseen_log_rates(chain: &PosteriorChain, region: usize, time: usize) -> Result<Vec<f64>> {
    if region >= chain.n_regions {
        return Err(SsipError::MissingStratum(format!("region {region}")));
    }
    if time >= chain.n_times.max(1) {
        return Err(SsipError::MissingStratum(format!("time {time}")));
    }
    let p = chain.p;
    Ok(chain
        .draws()
        .map(|d| {
            let intercept = chain.intercept.map_or(0.0, |j| d.beta[region * p + j]);
            intercept + d.alpha.get(region).copied().unwrap_or(0.0) + d.level + d.zeta.get(time).copied().unwrap_or(0.0)
        })
        .collect())
}

/// `P(Y ≤ y)` for `Y ~ NB(h, ψ)` with mean `h e^ψ`.
pub fn nb_cdf(y: u64, h: f64, psi: f64) -> f64 {
    // Failure probability 1/(1 + e^ψ) written to stay accurate for large |ψ|.
    let x = if psi > 0.0 {
        let e = (-psi).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + psi.exp())
    };
    beta_reg(h, y as f64 + 1.0, x)
}

/// Posterior-predictive CDF of the unseen count, averaged over draws.
fn mixture_cdf(y: u64, h: f64, sorted_psi: &[f64]) -> f64 {
    sorted_psi.iter().map(|&psi| nb_cdf(y, h, psi)).sum::<f64>() / sorted_psi.len() as f64
}

/// Smallest integer `y` with mixture CDF at least `q`.
fn mixture_quantile(q: f64, h: f64, sorted_psi: &[f64]) -> u64 {
    if mixture_cdf(0, h, sorted_psi) >= q {
        return 0;
    }
    let mut lo = 0u64;
    let mut hi = 1u64;
    while mixture_cdf(hi, h, sorted_psi) < q {
        lo = hi;
        hi = hi.saturating_mul(2);
        if hi == u64::MAX {
            return hi;
        }
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if mixture_cdf(mid, h, sorted_psi) >= q {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

fn dispersion(chain: &PosteriorChain) -> Result<f64> {
    chain
        .dispersion
        .ok_or_else(|| SsipError::InvalidConfig("unseen estimates need a count-model chain".into()))
}

/// Model-averaged posterior predictive of the unseen count in one stratum,
/// computed exactly from the negative-binomial mixture over draws. The
/// result depends only on the multiset of draws.
pub fn estimate_unseen(chain: &PosteriorChain, region: usize, time: usize) -> Result<UnseenEstimate> {
    let h = dispersion(chain)?;
    let mut psi = unseen_log_rates(chain, region, time)?;
    if psi.is_empty() {
        return Err(SsipError::InvalidData("chain has no draws".into()));
    }
    psi.sort_by(f64::total_cmp);
    let n = psi.len() as f64;
    let mean = psi.iter().map(|&v| h * v.exp()).sum::<f64>() / n;
    let psi_bar = psi.iter().sum::<f64>() / n;
    Ok(UnseenEstimate {
        mean,
        median: mixture_quantile(0.5, h, &psi) as f64,
        lo95: mixture_quantile(0.025, h, &psi) as f64,
        hi95: mixture_quantile(0.975, h, &psi) as f64,
        plug_in: h * psi_bar.exp(),
    })
}

/// Predictive summary of the unseen total over a group of regions at one
/// time, by simulating one count per member and draw. Deterministic in
/// `seed`.
pub fn estimate_unseen_group(chain: &PosteriorChain, regions: &[usize], time: usize, seed: u64) -> Result<UnseenEstimate> {
    let h = dispersion(chain)?;
    if regions.is_empty() {
        return Err(SsipError::InvalidConfig("group has no regions".into()));
    }
    let per_region: Vec<Vec<f64>> = regions
        .iter()
        .map(|&i| unseen_log_rates(chain, i, time))
        .collect::<Result<_>>()?;
    let draws = per_region[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut totals = Vec::with_capacity(draws);
    let mut mean = 0.0;
    let mut log_rate_sum = vec![0.0; regions.len()];
    for d in 0..draws {
        let mut total = 0u64;
        for (g, psi) in per_region.iter().enumerate() {
            total += sample_nb(h, psi[d], &mut rng);
            mean += h * psi[d].exp();
            log_rate_sum[g] += psi[d];
        }
        totals.push(total as f64);
    }
    totals.sort_by(f64::total_cmp);
    let n = draws as f64;
    Ok(UnseenEstimate {
        mean: mean / n,
        median: quantile_sorted(&totals, 0.5),
        lo95: quantile_sorted(&totals, 0.025),
        hi95: quantile_sorted(&totals, 0.975),
        plug_in: log_rate_sum.iter().map(|s| h * (s / n).exp()).sum(),
    })
}

/// Accuracy of unseen-count estimates against known truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrcEvaluation {
    /// Fraction of truths inside `[lo95, hi95]`.
    pub coverage: f64,
    /// Root mean squared error of the medians.
    pub rmse: f64,
    /// Mean absolute difference between medians and truth.
    pub mean_median_abs_diff: f64,
    /// Pearson correlation of truth and medians; NaN when undefined.
    pub correlation: f64,
}

pub fn evaluate_crc(estimates: &[UnseenEstimate], truth: &[f64]) -> Result<CrcEvaluation> {
    if estimates.len() != truth.len() {
        return Err(SsipError::DimensionMismatch(format!(
            "{} estimates for {} true values",
            estimates.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(SsipError::InvalidData("nothing to evaluate".into()));
    }
    let n = truth.len() as f64;
    let covered = estimates.iter().zip(truth).filter(|(e, &t)| e.lo95 <= t && t <= e.hi95).count();
    let medians: Vec<f64> = estimates.iter().map(|e| e.median).collect();
    let sq: f64 = medians.iter().zip(truth).map(|(m, t)| (m - t).powi(2)).sum();
    let abs: f64 = medians.iter().zip(truth).map(|(m, t)| (m - t).abs()).sum();
    let correlation = crate::diagnostics::pearson(truth, &medians);
    if correlation.is_nan() {
        log::warn!("correlation undefined: truth or estimates have zero variance");
    }
    Ok(CrcEvaluation {
        coverage: covered as f64 / n,
        rmse: (sq / n).sqrt(),
        mean_median_abs_diff: abs / n,
        correlation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{ChainTrace, Draw, Engine, RunMeta, RunSettings};
    use approx::assert_relative_eq;

    fn constant_chain(psi: &[f64], h: f64) -> PosteriorChain {
        let draws = psi
            .iter()
            .map(|&v| Draw {
                beta: vec![v],
                ..Draw::default()
            })
            .collect();
        PosteriorChain {
            meta: RunMeta {
                engine: Engine::NegativeBinomial,
                settings: RunSettings::new(10, 0),
                config: Vec::new(),
            },
            n_regions: 1,
            p: 1,
            n_times: 1,
            intercept: Some(0),
            dispersion: Some(h),
            chains: vec![ChainTrace {
                draws,
                ..ChainTrace::default()
            }],
        }
    }

    #[test]
    fn pattern_encoding() {
        assert_eq!(parse_pattern("001").unwrap(), (3, 1));
        assert_eq!(parse_pattern("1010").unwrap(), (4, 10));
        assert_eq!(format_pattern(10, 4), "1010");
        assert!(parse_pattern("012").is_err());
        assert!(parse_pattern("").is_err());
        assert!(on_list(10, 4, 0) && !on_list(10, 4, 1) && on_list(10, 4, 2));
    }

    #[test]
    fn table_examples() {
        let t = build_intersection_table(3, 1, 1, &[CaptureHistory { region: 0, time: 0, pattern: 1 }]).unwrap();
        assert_eq!(t.count(0, 0, 0b001), 1);
        assert_eq!(t.total(), 1);
        let t = build_intersection_table(4, 2, 1, &[CaptureHistory { region: 1, time: 0, pattern: 0b1010 }]).unwrap();
        assert_eq!(t.count(1, 0, 10), 1);
        assert!(t.is_sparse(0, 0));
        let empty = build_intersection_table(2, 2, 2, &[]).unwrap();
        assert_eq!(empty.total(), 0);
        assert_eq!(empty.stratum(1, 1).len(), 3);
        assert!(build_intersection_table(2, 1, 1, &[CaptureHistory { region: 0, time: 0, pattern: 0 }]).is_err());
        assert!(build_intersection_table(2, 1, 1, &[CaptureHistory { region: 0, time: 0, pattern: 4 }]).is_err());
    }

    #[test]
    fn design_shapes() {
        let d = build_design(5, 4).unwrap();
        assert_eq!(d.n_columns(), 31);
        assert_eq!(d.n_rows(), 31);
        let d = build_design(2, 1).unwrap();
        assert_eq!((d.n_rows(), d.n_columns(), d.n_unforced()), (3, 3, 0));
        let d = build_design(3, 2).unwrap();
        let col = d.terms().iter().position(|t| t == &vec![0, 1]).unwrap();
        assert_eq!(d.matrix()[(0b110 - 1, col)], 1.0);
        assert_eq!(d.matrix()[(0b100 - 1, col)], 0.0);
        assert_eq!(d.column_names()[col], "d1:d2");
        assert!(build_design(3, 0).is_err());
        assert!(build_design(3, 4).is_err());
    }

    #[test]
    fn regions_stack_times() {
        let hist = [
            CaptureHistory { region: 0, time: 1, pattern: 3 },
            CaptureHistory { region: 0, time: 1, pattern: 3 },
        ];
        let t = build_intersection_table(2, 1, 2, &hist).unwrap();
        let r = &t.to_regions(&build_design(2, 2).unwrap()).unwrap()[0];
        assert_eq!(r.m(), 6);
        assert_eq!(r.y(), &[0, 0, 0, 0, 0, 2]);
        assert_eq!(r.time().unwrap(), &[0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn nb_cdf_matches_direct_sum() {
        let (h, psi) = (2.5, 0.7_f64);
        let q = psi.exp() / (1.0 + psi.exp());
        let mut pmf = (1.0 - q).powf(h);
        let mut cdf = 0.0;
        for y in 0..30u64 {
            cdf += pmf;
            assert_relative_eq!(nb_cdf(y, h, psi), cdf, max_relative = 1e-10);
            pmf *= (y as f64 + h) / (y as f64 + 1.0) * q;
        }
    }

    #[test]
    fn constant_draws_recover_nb_mean() {
        let (h, mu) = (2.0, 40.0_f64);
        let chain = constant_chain(&[(mu / h).ln(); 50], h);
        let e = estimate_unseen(&chain, 0, 0).unwrap();
        assert_relative_eq!(e.mean, mu, max_relative = 1e-12);
        assert_relative_eq!(e.plug_in, mu, max_relative = 1e-12);
        assert!(e.lo95 < e.median && e.median < e.hi95);
    }

    #[test]
    fn estimate_ignores_draw_order() {
        let psi: Vec<f64> = (0..40).map(|k| 1.0 + 0.05 * k as f64).collect();
        let mut rev = psi.clone();
        rev.reverse();
        let a = estimate_unseen(&constant_chain(&psi, 1.5), 0, 0).unwrap();
        let b = estimate_unseen(&constant_chain(&rev, 1.5), 0, 0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn strongly_negative_rate_gives_zero() {
        let e = estimate_unseen(&constant_chain(&[-12.0; 10], 1.0), 0, 0).unwrap();
        assert_eq!((e.lo95, e.median), (0.0, 0.0));
        assert!(e.hi95 <= 1.0);
        assert!(estimate_unseen(&constant_chain(&[0.0], 1.0), 1, 0).is_err());
    }

    #[test]
    fn evaluation_examples() {
        let truth = [3.0, 7.0, 11.0];
        let est: Vec<UnseenEstimate> = truth
            .iter()
            .map(|&t| UnseenEstimate { mean: t, median: t, lo95: t - 5.0, hi95: t + 5.0, plug_in: t })
            .collect();
        let ev = evaluate_crc(&est, &truth).unwrap();
        assert_eq!((ev.coverage, ev.rmse, ev.mean_median_abs_diff), (1.0, 0.0, 0.0));
        assert_relative_eq!(ev.correlation, 1.0, epsilon = 1e-12);
        let flat = evaluate_crc(&est, &[5.0; 3]).unwrap();
        assert!(flat.correlation.is_nan());
        assert!(evaluate_crc(&est, &[1.0]).is_err());
    }
}
