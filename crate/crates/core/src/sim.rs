//! Simulation generators for the grid regression and capture-recapture
//! studies, the non-spatial and AIC comparators, and replication drivers
//! that tie generators, engines and evaluators together.

use crate::chain::{PosteriorChain, RunSettings};
use crate::crc::{
    build_design, build_intersection_table, estimate_unseen, evaluate_crc, CaptureHistory, CaptureTable,
    CrcEvaluation, UnseenEstimate,
};
use crate::error::{Result, SsipError};
use crate::gaussian::{fit_gaussian_ssip, GaussianOptions, RegionData};
use crate::graph::AdjacencyGraph;
use crate::nb::{fit_nb_ssip, NbOptions, NbRegionData};
use crate::ssip::{RhoUpdate, SsipConfig};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal, Poisson};
use statrs::function::gamma::ln_gamma;

/// Shape of the grid regression study.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSimConfig {
    pub rows: usize,
    pub cols: usize,
    pub obs_per_region: usize,
    pub noise_var: f64,
    /// Beta parameters of the per-region inclusion propensities.
    pub xi_shape: (f64, f64),
    /// `(mean, variance)` of each included covariate's coefficient.
    pub coefficients: Vec<(f64, f64)>,
    /// `(mean, variance)` of the per-region intercept.
    pub intercept: (f64, f64),
}

impl Default for GaussianSimConfig {
    fn default() -> Self {
        Self {
            rows: 3,
            cols: 3,
            obs_per_region: 4,
            noise_var: 1.0,
            xi_shape: (2.0, 2.0),
            coefficients: vec![(5.0, 0.25), (3.0, 1.0)],
            intercept: (0.0, 1.0),
        }
    }
}

impl GaussianSimConfig {
    pub fn n_covariates(&self) -> usize {
        self.coefficients.len()
    }
}

/// Ground truth of a grid regression simulation. Arrays are row-major by
/// region; `beta_true` includes the intercept in column 0.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSimTruth {
    pub gamma_true: Vec<bool>,
    pub beta_true: Vec<f64>,
    pub xi: Vec<f64>,
    pub seed: u64,
}

fn normal(mean: f64, var: f64) -> Normal<f64> {
    Normal::new(mean, var.sqrt()).expect("finite normal parameters")
}

/// Grid regression study with default shape (3×3 rook grid, intercept plus
/// two covariates).
pub fn simulate_gaussian_grid(
    seed: u64,
    obs_per_region: usize,
    noise_var: f64,
) -> Result<(Vec<RegionData>, AdjacencyGraph, GaussianSimTruth)> {
    simulate_gaussian_with(
        &GaussianSimConfig {
            obs_per_region,
            noise_var,
            ..GaussianSimConfig::default()
        },
        seed,
    )
}

/// For each covariate: draw one propensity per region from the Beta law,
/// sort them so lower-indexed regions get smaller values, and include the
/// covariate with that probability. Designs are iid Uniform(0,1).
pub fn simulate_gaussian_with(
    config: &GaussianSimConfig,
    seed: u64,
) -> Result<(Vec<RegionData>, AdjacencyGraph, GaussianSimTruth)> {
    if config.obs_per_region == 0 || !(config.noise_var > 0.0) {
        return Err(SsipError::InvalidConfig("need observations and a positive noise variance".into()));
    }
    let graph = AdjacencyGraph::grid(config.rows, config.cols)?;
    let n = graph.n_regions();
    let q = config.n_covariates();
    let p = q + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beta_law = Beta::new(config.xi_shape.0, config.xi_shape.1)
        .map_err(|e| SsipError::InvalidConfig(format!("propensity law: {e}")))?;
    let mut xi = vec![0.0; n * q];
    let mut gamma_true = vec![false; n * q];
    let mut beta_true = vec![0.0; n * p];
    for j in 0..q {
        let mut draws: Vec<f64> = (0..n).map(|_| beta_law.sample(&mut rng)).collect();
        draws.sort_by(f64::total_cmp);
        let coef = normal(config.coefficients[j].0, config.coefficients[j].1);
        for (i, &x) in draws.iter().enumerate() {
            xi[i * q + j] = x;
            let included = rng.random::<f64>() < x;
            gamma_true[i * q + j] = included;
            if included {
                beta_true[i * p + j + 1] = coef.sample(&mut rng);
            }
        }
    }
    let intercept = normal(config.intercept.0, config.intercept.1);
    for i in 0..n {
        beta_true[i * p] = intercept.sample(&mut rng);
    }
    let noise = normal(0.0, config.noise_var);
    let m = config.obs_per_region;
    let regions = (0..n)
        .map(|i| {
            let x = DMatrix::from_fn(m, p, |_, j| if j == 0 { 1.0 } else { rng.random::<f64>() });
            let beta = &beta_true[i * p..(i + 1) * p];
            let y = (0..m)
                .map(|r| (0..p).map(|j| x[(r, j)] * beta[j]).sum::<f64>() + noise.sample(&mut rng))
                .collect();
            RegionData::new(x, y)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((
        regions,
        graph,
        GaussianSimTruth {
            gamma_true,
            beta_true,
            xi,
            seed,
        },
    ))
}

/// Ground truth of a capture-recapture simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct CrcSimTruth {
    pub locations: Vec<(f64, f64)>,
    /// Capture pattern of every simulated point, including unseen ones.
    pub capture_patterns: Vec<u32>,
    /// Grid cell of every point (`row * side + col`).
    pub cells: Vec<usize>,
    /// Points per cell captured on no list.
    pub unseen_true: Vec<u64>,
    pub intensity_scale: f64,
    pub grid_side: usize,
}

/// Point-process intensity `c (√2/2 − ‖s − (½, ½)‖)`.
pub fn crc_intensity(c: f64, x: f64, y: f64) -> f64 {
    c * (std::f64::consts::FRAC_1_SQRT_2 - ((x - 0.5).powi(2) + (y - 0.5).powi(2)).sqrt())
}

/// Capture probability of list `list` (1..=4) at `(x, y)`; lists 2 and 3
/// depend on whether the point is on list 1.
pub fn capture_probability(list: usize, x: f64, y: f64, on_list1: bool) -> f64 {
    let boost = |cond: bool| if on_list1 && cond { 0.5 } else { 0.0 };
    match list {
        1 => (x + y).powi(3) / 8.0,
        2 => 3.0 / 16.0 * y.powi(3) + 1.0 / 16.0 + boost(x < 0.4),
        3 => 3.0 / 16.0 * x * x + 1.0 / 16.0 + boost(x > 0.4),
        4 => 3.0 / 16.0 * x * x + 1.0 / 16.0,
        _ => f64::NAN,
    }
}

/// Number of lists in the capture-recapture study.
pub const CRC_LISTS: usize = 4;

/// Simulates the point process by thinning, the four dependent lists, and
/// the gridded intersection table (unseen points withheld).
pub fn simulate_crc(seed: u64, c: f64, grid_side: usize) -> Result<(CaptureTable, AdjacencyGraph, CrcSimTruth)> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(SsipError::InvalidConfig(format!("intensity scale must be positive, got {c}")));
    }
    let graph = AdjacencyGraph::grid(grid_side, grid_side)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bound = c * std::f64::consts::FRAC_1_SQRT_2;
    let n_candidates = Poisson::new(bound)
        .map_err(|e| SsipError::InvalidConfig(format!("point count law: {e}")))?
        .sample(&mut rng) as usize;
    let mut truth = CrcSimTruth {
        locations: Vec::new(),
        capture_patterns: Vec::new(),
        cells: Vec::new(),
        unseen_true: vec![0; grid_side * grid_side],
        intensity_scale: c,
        grid_side,
    };
    let mut histories = Vec::new();
    for _ in 0..n_candidates {
        let (x, y): (f64, f64) = (rng.random(), rng.random());
        if rng.random::<f64>() * bound >= crc_intensity(c, x, y) {
            continue;
        }
        let mut pattern = 0u32;
        let mut on1 = false;
        for list in 1..=CRC_LISTS {
            let pr = capture_probability(list, x, y, on1);
            if !(0.0..=1.0).contains(&pr) {
                return Err(SsipError::numerical(format!("capture probability {pr} for list {list} at ({x}, {y})")));
            }
            let hit = rng.random::<f64>() < pr;
            if list == 1 {
                on1 = hit;
            }
            pattern = (pattern << 1) | u32::from(hit);
        }
        let col = ((x * grid_side as f64) as usize).min(grid_side - 1);
        let row = ((y * grid_side as f64) as usize).min(grid_side - 1);
        let cell = row * grid_side + col;
        truth.locations.push((x, y));
        truth.capture_patterns.push(pattern);
        truth.cells.push(cell);
        if pattern == 0 {
            truth.unseen_true[cell] += 1;
        } else {
            histories.push(CaptureHistory {
                region: cell,
                time: 0,
                pattern,
            });
        }
    }
    let table = build_intersection_table(CRC_LISTS, grid_side * grid_side, 1, &histories)?;
    Ok((table, graph, truth))
}

/// The same Gaussian engine with `ρ = 0` and no `ρ` update: independent
/// spike-and-slab selection per region.
pub fn baseline_independent(
    regions: &[RegionData],
    graph: &AdjacencyGraph,
    opts: &GaussianOptions,
    run: &RunSettings,
) -> Result<PosteriorChain> {
    let opts = GaussianOptions {
        ssip: SsipConfig {
            rho: 0.0,
            rho_update: RhoUpdate::Off,
        },
        ..*opts
    };
    fit_gaussian_ssip(regions, graph, &opts, run)
}

/// Count-model analogue of [`baseline_independent`].
pub fn baseline_independent_nb(
    regions: &[NbRegionData],
    graph: &AdjacencyGraph,
    opts: &NbOptions,
    run: &RunSettings,
) -> Result<PosteriorChain> {
    let opts = NbOptions {
        ssip: SsipConfig {
            rho: 0.0,
            rho_update: RhoUpdate::Off,
        },
        ..*opts
    };
    fit_nb_ssip(regions, graph, &opts, run)
}

/// Outcome of exhaustive AIC selection for one region.
#[derive(Debug, Clone, PartialEq)]
pub struct AicSelection {
    pub gamma: Vec<bool>,
    /// Refit coefficients of the selected model, zero for excluded columns.
    pub beta: Vec<f64>,
    pub aic: f64,
    /// Candidate models skipped because the fit failed.
    pub failed_fits: usize,
    /// No candidate could be fit; the forced-only model is returned.
    pub all_failed: bool,
}

/// Largest number of unforced columns enumerated exhaustively.
pub const AIC_MAX_FREE: usize = 20;

/// Subsets of `free` ordered by size, then lexicographically.
fn candidate_subsets(free: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for size in 1..=free.len() {
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            out.push(idx.iter().map(|&k| free[k]).collect());
            let Some(pos) = (0..size).rev().find(|&k| idx[k] != k + free.len() - size) else {
                break;
            };
            idx[pos] += 1;
            for k in pos + 1..size {
                idx[k] = idx[k - 1] + 1;
            }
        }
    }
    out
}

fn select_by_aic(
    p: usize,
    forced: &[bool],
    mut fit: impl FnMut(&[usize]) -> Option<(Vec<f64>, f64)>,
) -> Result<AicSelection> {
    if forced.len() != p {
        return Err(SsipError::DimensionMismatch("forced mask length differs from p".into()));
    }
    let base: Vec<usize> = (0..p).filter(|&j| forced[j]).collect();
    let free: Vec<usize> = (0..p).filter(|&j| !forced[j]).collect();
    if free.len() > AIC_MAX_FREE {
        return Err(SsipError::InvalidConfig(format!(
            "{} unforced columns exceed the exhaustive limit of {AIC_MAX_FREE}",
            free.len()
        )));
    }
    let mut best: Option<(Vec<usize>, Vec<f64>, f64)> = None;
    let mut failed = 0;
    for subset in candidate_subsets(&free) {
        let mut cols: Vec<usize> = base.iter().chain(&subset).copied().collect();
        cols.sort_unstable();
        match fit(&cols) {
            Some((coef, aic)) if aic.is_finite() => {
                if best.as_ref().is_none_or(|b| aic < b.2) {
                    best = Some((cols, coef, aic));
                }
            }
            _ => failed += 1,
        }
    }
    let all_failed = best.is_none();
    let (cols, coef, aic) = best.unwrap_or((base, Vec::new(), f64::INFINITY));
    let mut gamma = vec![false; p];
    let mut beta = vec![0.0; p];
    for (k, &j) in cols.iter().enumerate() {
        gamma[j] = true;
        beta[j] = coef.get(k).copied().unwrap_or(0.0);
    }
    Ok(AicSelection {
        gamma,
        beta,
        aic,
        failed_fits: failed,
        all_failed,
    })
}

fn sub_design(x: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), cols.len(), |r, k| x[(r, cols[k])])
}

/// Least-squares fit on `cols`; `None` when rank-deficient or saturated.
pub fn ols_fit(x: &DMatrix<f64>, y: &[f64], cols: &[usize]) -> Option<(Vec<f64>, f64)> {
    let m = y.len();
    if cols.len() >= m {
        return None;
    }
    let yv = DVector::from_column_slice(y);
    if cols.is_empty() {
        return Some((Vec::new(), yv.norm_squared()));
    }
    let xs = sub_design(x, cols);
    let gram = xs.transpose() * &xs;
    let scale = gram.diagonal().max();
    let chol = gram.clone().cholesky()?;
    let diag_min = chol.l_dirty().diagonal().iter().fold(f64::INFINITY, |a, &b| a.min(b * b));
    if !(scale > 0.0) || diag_min < 1e-10 * scale {
        return None;
    }
    let coef = chol.solve(&(xs.transpose() * &yv));
    let rss = (yv - xs * &coef).norm_squared();
    Some((coef.as_slice().to_vec(), rss))
}

/// Gaussian AIC `m (ln(2π RSS/m) + 1) + 2(k + 1)`.
pub fn gaussian_aic(m: usize, k: usize, rss: f64) -> f64 {
    let m = m as f64;
    m * ((2.0 * std::f64::consts::PI * rss / m).ln() + 1.0) + 2.0 * (k as f64 + 1.0)
}

/// Exhaustive least-squares AIC selection over the unforced columns. Ties
/// go to fewer columns, then the lexicographically first subset.
pub fn baseline_aic(region: &RegionData, forced: &[bool]) -> Result<AicSelection> {
    let m = region.m();
    select_by_aic(region.p(), forced, |cols| {
        let (coef, rss) = ols_fit(region.x(), region.y(), cols)?;
        (rss > 0.0).then(|| (coef, gaussian_aic(m, cols.len(), rss)))
    })
}

/// Negative-binomial log-likelihood with mean `h e^ψ`.
pub fn nb_log_likelihood(y: &[u64], psi: &[f64], h: f64) -> f64 {
    y.iter()
        .zip(psi)
        .map(|(&y, &s)| {
            let yf = y as f64;
            let log1p_exp = if s > 0.0 { s + (-s).exp().ln_1p() } else { s.exp().ln_1p() };
            ln_gamma(yf + h) - ln_gamma(h) - ln_gamma(yf + 1.0) + yf * s - (yf + h) * log1p_exp
        })
        .sum()
}

/// Maximum-likelihood NB regression on `cols` by damped Newton with fixed
/// `h`. Returns `None` when the iteration fails to converge or diverges.
pub fn nb_ml_fit(x: &DMatrix<f64>, y: &[u64], cols: &[usize], h: f64) -> Option<(Vec<f64>, f64)> {
    let xs = sub_design(x, cols);
    let k = cols.len();
    let mut beta = DVector::zeros(k);
    let predictor = |b: &DVector<f64>| -> Vec<f64> { (&xs * b).as_slice().to_vec() };
    let mut ll = nb_log_likelihood(y, &predictor(&beta), h);
    if k == 0 {
        return Some((Vec::new(), ll));
    }
    for _ in 0..200 {
        let psi = predictor(&beta);
        let mut grad = DVector::zeros(k);
        let mut info = DMatrix::zeros(k, k);
        for (r, (&yr, &s)) in y.iter().zip(&psi).enumerate() {
            let q = 1.0 / (1.0 + (-s).exp());
            let w = (yr as f64 + h) * q * (1.0 - q);
            let g = yr as f64 - (yr as f64 + h) * q;
            for a in 0..k {
                grad[a] += g * xs[(r, a)];
                for b in 0..k {
                    info[(a, b)] += w * xs[(r, a)] * xs[(r, b)];
                }
            }
        }
        let step = info.cholesky()?.solve(&grad);
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let cand = &beta + &step * t;
            let cand_ll = nb_log_likelihood(y, &predictor(&cand), h);
            if cand_ll >= ll - 1e-12 {
                let delta = (&cand - &beta).amax();
                beta = cand;
                ll = cand_ll;
                improved = true;
                if delta < 1e-9 {
                    let psi_ok = predictor(&beta).iter().all(|s| s.abs() <= 30.0);
                    return psi_ok.then(|| (beta.as_slice().to_vec(), ll));
                }
                break;
            }
            t *= 0.5;
        }
        if !improved || beta.amax() > 50.0 {
            return None;
        }
    }
    None
}

/// Exhaustive NB maximum-likelihood AIC selection, `−2 ln L + 2k`.
pub fn baseline_aic_nb(region: &NbRegionData, forced: &[bool], h: f64) -> Result<AicSelection> {
    select_by_aic(region.p(), forced, |cols| {
        let (coef, ll) = nb_ml_fit(region.x(), region.y(), cols, h)?;
        Some((coef, -2.0 * ll + 2.0 * cols.len() as f64))
    })
}

/// Mean over all entries of `(estimate − truth)²`.
pub fn evaluate_beta_mse(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    if estimate.len() != truth.len() || truth.is_empty() {
        return Err(SsipError::DimensionMismatch(format!(
            "{} estimates for {} true coefficients",
            estimate.len(),
            truth.len()
        )));
    }
    Ok(estimate.iter().zip(truth).map(|(e, t)| (e - t).powi(2)).sum::<f64>() / truth.len() as f64)
}

/// Mean binary entropy (nats) of the unforced inclusion probabilities.
pub fn inclusion_entropy(chain: &PosteriorChain, forced: &[bool]) -> f64 {
    let mut total = 0.0;
    let mut count = 0;
    for i in 0..chain.n_regions {
        for j in 0..chain.p {
            if forced[i * chain.p + j] {
                continue;
            }
            let q = chain.inclusion_prob(i, j);
            if q > 0.0 && q < 1.0 {
                total -= q * q.ln() + (1.0 - q) * (1.0 - q).ln();
            }
            count += 1;
        }
    }
    total / count.max(1) as f64
}

/// Coefficient MSE of the three comparators on one simulated data set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianReplication {
    pub seed: u64,
    pub mse_ssip: f64,
    pub mse_independent: f64,
    pub mse_aic: f64,
    pub entropy_ssip: f64,
    pub entropy_independent: f64,
}

/// Simulates the grid regression study at `seed` and scores the spatial
/// engine, the `ρ = 0` engine and exhaustive AIC.
pub fn replicate_gaussian(
    sim: &GaussianSimConfig,
    seed: u64,
    opts: &GaussianOptions,
    run: &RunSettings,
) -> Result<GaussianReplication> {
    let (regions, graph, truth) = simulate_gaussian_with(sim, seed)?;
    let run = RunSettings { seed, ..*run };
    let ssip = fit_gaussian_ssip(&regions, &graph, opts, &run)?;
    let indep = baseline_independent(&regions, &graph, opts, &run)?;
    let p = sim.n_covariates() + 1;
    let forced: Vec<bool> = (0..p).map(|j| j == 0 && opts.force_intercept).collect();
    let mut aic_beta = Vec::with_capacity(regions.len() * p);
    for r in &regions {
        aic_beta.extend(baseline_aic(r, &forced)?.beta);
    }
    let mask: Vec<bool> = (0..regions.len()).flat_map(|_| forced.iter().copied()).collect();
    Ok(GaussianReplication {
        seed,
        mse_ssip: evaluate_beta_mse(&ssip.beta_means(), &truth.beta_true)?,
        mse_independent: evaluate_beta_mse(&indep.beta_means(), &truth.beta_true)?,
        mse_aic: evaluate_beta_mse(&aic_beta, &truth.beta_true)?,
        entropy_ssip: inclusion_entropy(&ssip, &mask),
        entropy_independent: inclusion_entropy(&indep, &mask),
    })
}

/// Settings of the capture-recapture study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrcSimConfig {
    pub intensity_scale: f64,
    pub grid_side: usize,
    /// Highest interaction order in the fitted design.
    pub max_order: usize,
}

impl Default for CrcSimConfig {
    fn default() -> Self {
        Self {
            intensity_scale: 2000.0,
            grid_side: 5,
            max_order: CRC_LISTS - 1,
        }
    }
}

/// Per-cell estimates and scores of one capture-recapture replication.
#[derive(Debug, Clone, PartialEq)]
pub struct CrcReplication {
    pub seed: u64,
    pub truth: Vec<f64>,
    pub ssip: Vec<UnseenEstimate>,
    pub independent: Vec<UnseenEstimate>,
    /// Plug-in AIC estimates; the interval is `[0, ∞)` where the selected
    /// fit failed or none converged.
    pub aic: Vec<UnseenEstimate>,
    pub ssip_eval: CrcEvaluation,
    pub independent_eval: CrcEvaluation,
    pub aic_eval: CrcEvaluation,
    pub observed_total: u64,
}

/// Simulates the capture-recapture study and scores the spatial count
/// engine, its `ρ = 0` counterpart and per-cell NB AIC selection.
pub fn replicate_crc(sim: &CrcSimConfig, seed: u64, opts: &NbOptions, run: &RunSettings) -> Result<CrcReplication> {
    let (table, graph, truth) = simulate_crc(seed, sim.intensity_scale, sim.grid_side)?;
    let design = build_design(CRC_LISTS, sim.max_order)?;
    let regions = table.to_regions(&design)?;
    let opts = NbOptions {
        nb: crate::nb::NbConfig {
            forced_leading: design.n_forced(),
            temporal: false,
            ..opts.nb
        },
        ..*opts
    };
    let run = RunSettings { seed, ..*run };
    let ssip_chain = fit_nb_ssip(&regions, &graph, &opts, &run)?;
    let indep_chain = baseline_independent_nb(&regions, &graph, &opts, &run)?;
    let cells = graph.n_regions();
    let ssip: Vec<_> = (0..cells).map(|i| estimate_unseen(&ssip_chain, i, 0)).collect::<Result<_>>()?;
    let independent: Vec<_> = (0..cells).map(|i| estimate_unseen(&indep_chain, i, 0)).collect::<Result<_>>()?;
    let h = opts.nb.h;
    let forced = design.forced_mask();
    let aic = regions
        .iter()
        .map(|r| {
            let sel = baseline_aic_nb(r, &forced, h)?;
            Ok(if sel.all_failed {
                UnseenEstimate {
                    mean: f64::NAN,
                    median: f64::NAN,
                    lo95: 0.0,
                    hi95: f64::INFINITY,
                    plug_in: f64::NAN,
                }
            } else {
                let point = h * sel.beta[0].exp();
                UnseenEstimate {
                    mean: point,
                    median: point,
                    lo95: 0.0,
                    hi95: f64::INFINITY,
                    plug_in: point,
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let truth_f: Vec<f64> = truth.unseen_true.iter().map(|&v| v as f64).collect();
    Ok(CrcReplication {
        seed,
        ssip_eval: evaluate_crc(&ssip, &truth_f)?,
        independent_eval: evaluate_crc(&independent, &truth_f)?,
        aic_eval: evaluate_crc(&aic, &truth_f)?,
        truth: truth_f,
        ssip,
        independent,
        aic,
        observed_total: table.total(),
    })
}
