//! Joint-distribution checks: a Gibbs chain that regenerates its data after
//! every sweep must visit the prior, so its moments are compared with those
//! of independent prior draws.

use super::{compare_series, draw_prior, gaussian_response, MomentCheck, PriorDraw, PriorSpec, Series};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use ssip_core::collapsed::SlabPrior;
use ssip_core::ssip::LatentField;
use ssip_core::{
    sample_pg, AdjacencyGraph, GaussianHyper, GaussianOptions, GaussianSampler, NbConfig, NbOptions, NbRegionData,
    NbSampler, PgParams, RegionData, RhoUpdate, SsipConfig,
};

pub const REGIONS_SIDE: usize = 2;
pub const P: usize = 2;
pub const OBS: usize = 3;
pub const BATCHES: usize = 50;

pub fn spec() -> PriorSpec {
    PriorSpec {
        mu0: 0.0,
        s0: 1.0,
        a_t: 6.0,
        b_t: 5.0,
        a: 6.0,
        b: 5.0,
        rho: 0.9,
    }
}

fn designs(rng: &mut ChaCha8Rng, n: usize) -> Vec<DMatrix<f64>> {
    (0..n)
        .map(|_| DMatrix::from_fn(OBS, P, |_, _| rng.random::<f64>() * 2.0 - 1.0))
        .collect()
}

/// Series recorded for every draw, with names shared by both simulators.
struct Recorder {
    series: Vec<Series>,
}

impl Recorder {
    fn new(n: usize, extra: &[&str]) -> Self {
        let mut names = Vec::new();
        for i in 0..n {
            for j in 0..P {
                for what in ["beta", "beta^2", "z", "z^2", "gamma"] {
                    names.push(format!("{what}[{i},{j}]"));
                }
            }
        }
        for j in 0..P {
            for what in ["mu", "mu^2", "tau2", "tau2^2"] {
                names.push(format!("{what}[{j}]"));
            }
        }
        for i in 0..n {
            for what in extra {
                names.push(format!("{what}[{i}]"));
            }
        }
        Self {
            series: names.into_iter().map(Series::new).collect(),
        }
    }

    fn push(&mut self, beta: &[f64], z: &[f64], gamma: &[bool], mu: &[f64], tau2: &[f64], extra: &[Vec<f64>]) {
        let mut values = Vec::with_capacity(self.series.len());
        for k in 0..beta.len() {
            values.extend([beta[k], beta[k] * beta[k], z[k], z[k] * z[k], f64::from(u8::from(gamma[k]))]);
        }
        for j in 0..P {
            values.extend([mu[j], mu[j] * mu[j], tau2[j], tau2[j] * tau2[j]]);
        }
        let n = beta.len() / P;
        for i in 0..n {
            for e in extra {
                values.push(e[i]);
            }
        }
        for (s, v) in self.series.iter_mut().zip(values) {
            s.values.push(v);
        }
    }

    fn push_prior(&mut self, d: &PriorDraw, extra: &[Vec<f64>]) {
        self.push(&d.beta, &d.z, &d.gamma, &d.mu, &d.tau2, extra);
    }
}

fn row(beta: &[f64], i: usize) -> &[f64] {
    &beta[i * P..(i + 1) * P]
}

pub fn gaussian_options() -> GaussianOptions {
    let s = spec();
    GaussianOptions {
        hyper: GaussianHyper {
            mu0: s.mu0,
            s0: s.s0,
            a_t: s.a_t,
            b_t: s.b_t,
            a: s.a,
            b: s.b,
        },
        ssip: SsipConfig {
            rho: s.rho,
            rho_update: RhoUpdate::Off,
        },
        force_intercept: false,
        pooled_sigma: false,
        prior_only: false,
    }
}

/// Gaussian engine: moments of β, Z, γ, μ, τ² and σ² (with squares).
pub fn gaussian_joint_test(sweeps: usize, seed: u64) -> Vec<MomentCheck> {
    let graph = AdjacencyGraph::grid(REGIONS_SIDE, REGIONS_SIDE).unwrap();
    let n = graph.n_regions();
    let s = spec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs = designs(&mut rng, n);
    let extra = ["sigma2", "sigma2^2"];

    let mut marginal = Recorder::new(n, &extra);
    for _ in 0..sweeps {
        let d = draw_prior(&graph, P, &s, &mut rng);
        let sq: Vec<f64> = d.sigma2.iter().map(|v| v * v).collect();
        marginal.push_prior(&d, &[d.sigma2.clone(), sq]);
    }

    let start = draw_prior(&graph, P, &s, &mut rng);
    let regions: Vec<RegionData> = (0..n)
        .map(|i| {
            let y = gaussian_response(&xs[i], row(&start.beta, i), start.sigma2[i], &mut rng);
            RegionData::new(xs[i].clone(), y).unwrap()
        })
        .collect();
    let mut sampler = GaussianSampler::new(&graph, regions, gaussian_options()).unwrap();
    let mut state = sampler.initial_state().unwrap();
    state.beta = start.beta.clone();
    state.sigma2 = start.sigma2.clone();
    state.mu = start.mu.clone();
    state.tau2 = start.tau2.clone();
    state.field = LatentField::from_z(n, P, start.z.clone(), vec![false; n * P]).unwrap();

    let mut successive = Recorder::new(n, &extra);
    for _ in 0..sweeps {
        sampler.sweep(&mut state, &mut rng).unwrap();
        let sq: Vec<f64> = state.sigma2.iter().map(|v| v * v).collect();
        successive.push(
            &state.beta,
            state.field.z_values(),
            state.field.gamma_values(),
            &state.mu,
            &state.tau2,
            &[state.sigma2.clone(), sq],
        );
        for i in 0..n {
            let y = gaussian_response(&xs[i], row(&state.beta, i), state.sigma2[i], &mut rng);
            sampler.set_response(i, y).unwrap();
        }
    }
    compare_series(&successive.series, &marginal.series, BATCHES)
}

pub const DISPERSION: f64 = 1.0;

pub fn nb_options() -> NbOptions {
    let s = spec();
    NbOptions {
        hyper: SlabPrior {
            mu0: s.mu0,
            s0: s.s0,
            a_t: s.a_t,
            b_t: s.b_t,
        },
        ssip: SsipConfig {
            rho: s.rho,
            rho_update: RhoUpdate::Off,
        },
        nb: NbConfig {
            h: DISPERSION,
            car_intercept: false,
            temporal: false,
            forced_leading: 0,
            ..NbConfig::default()
        },
    }
}

/// Gamma-Poisson draw with mean `h e^ψ`.
fn nb_count(psi: f64, rng: &mut ChaCha8Rng) -> u64 {
    let lambda: f64 = Gamma::new(DISPERSION, psi.exp()).unwrap().sample(rng);
    if lambda <= 0.0 {
        0
    } else {
        Poisson::new(lambda).unwrap().sample(rng) as u64
    }
}

fn predictor(x: &DMatrix<f64>, beta: &[f64]) -> Vec<f64> {
    (0..x.nrows())
        .map(|r| (0..P).map(|j| x[(r, j)] * beta[j]).sum())
        .collect()
}

/// Count engine: moments of β, Z, γ, μ, τ² and the per-region mean of ω.
pub fn nb_joint_test(sweeps: usize, seed: u64) -> Vec<MomentCheck> {
    let graph = AdjacencyGraph::grid(REGIONS_SIDE, REGIONS_SIDE).unwrap();
    let n = graph.n_regions();
    let s = spec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs = designs(&mut rng, n);
    let extra = ["omega_mean"];

    let mut marginal = Recorder::new(n, &extra);
    for _ in 0..sweeps {
        let d = draw_prior(&graph, P, &s, &mut rng);
        let omega_mean: Vec<f64> = (0..n)
            .map(|i| {
                let psi = predictor(&xs[i], row(&d.beta, i));
                psi.iter()
                    .map(|&c| {
                        let y = nb_count(c, &mut rng);
                        sample_pg(PgParams::new(y as f64 + DISPERSION, c).unwrap(), &mut rng)
                    })
                    .sum::<f64>()
                    / OBS as f64
            })
            .collect();
        marginal.push_prior(&d, &[omega_mean]);
    }

    let start = draw_prior(&graph, P, &s, &mut rng);
    let regions: Vec<NbRegionData> = (0..n)
        .map(|i| {
            let y = predictor(&xs[i], row(&start.beta, i)).iter().map(|&c| nb_count(c, &mut rng)).collect();
            NbRegionData::new(xs[i].clone(), y, None).unwrap()
        })
        .collect();
    let mut sampler = NbSampler::new(&graph, regions, nb_options()).unwrap();
    let mut state = sampler.initial_state().unwrap();
    state.beta = start.beta.clone();
    state.mu = start.mu.clone();
    state.tau2 = start.tau2.clone();
    state.field = LatentField::from_z(n, P, start.z.clone(), vec![false; n * P]).unwrap();

    let mut successive = Recorder::new(n, &extra);
    for _ in 0..sweeps {
        sampler.sweep(&mut state, &mut rng).unwrap();
        let omega_mean = state.omega.iter().map(|w| w.iter().sum::<f64>() / w.len() as f64).collect();
        successive.push(
            &state.beta,
            state.field.z_values(),
            state.field.gamma_values(),
            &state.mu,
            &state.tau2,
            &[omega_mean],
        );
        for i in 0..n {
            let y = predictor(&xs[i], row(&state.beta, i)).iter().map(|&c| nb_count(c, &mut rng)).collect();
            sampler.set_counts(i, y).unwrap();
        }
    }
    compare_series(&successive.series, &marginal.series, BATCHES)
}
