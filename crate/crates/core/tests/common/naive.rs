//! Non-collapsed reference sampler for the Gaussian model.
//!
//! Every entry carries a slab coefficient `b_ij ~ N(μ_j, τ²_j)` whether or not
//! it is included, and the regression uses `β = γ ∘ b`. Integrating out the
//! excluded `b_ij` recovers the spike-and-slab model, so inclusion
//! frequencies must agree with the collapsed sampler. Indicators are updated
//! one at a time with `b` held fixed, latent values by rejection.

use super::PriorSpec;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal, StandardNormal};
use ssip_core::graph::AdjacencyGraph;

pub struct NaiveSampler<'a> {
    pub graph: &'a AdjacencyGraph,
    pub xs: Vec<DMatrix<f64>>,
    pub ys: Vec<Vec<f64>>,
    pub spec: PriorSpec,
    pub p: usize,
    pub z: Vec<f64>,
    pub b: Vec<f64>,
    pub mu: Vec<f64>,
    pub tau2: Vec<f64>,
    pub sigma2: Vec<f64>,
}

fn std_normal<R: Rng>(rng: &mut R) -> f64 {
    Distribution::<f64>::sample(&StandardNormal, rng)
}

fn inv_gamma<R: Rng>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    1.0 / Gamma::new(shape, 1.0 / rate).unwrap().sample(rng)
}

impl<'a> NaiveSampler<'a> {
    pub fn new(graph: &'a AdjacencyGraph, xs: Vec<DMatrix<f64>>, ys: Vec<Vec<f64>>, spec: PriorSpec) -> Self {
        let n = graph.n_regions();
        let p = xs[0].ncols();
        Self {
            graph,
            xs,
            ys,
            spec,
            p,
            z: vec![0.5; n * p],
            b: vec![0.0; n * p],
            mu: vec![spec.mu0; p],
            tau2: vec![1.0; p],
            sigma2: vec![1.0; n],
        }
    }

    pub fn gamma(&self) -> Vec<bool> {
        self.z.iter().map(|&v| v > 0.0).collect()
    }

    fn rss(&self, i: usize, gamma: &[bool]) -> f64 {
        let x = &self.xs[i];
        (0..x.nrows())
            .map(|r| {
                let fit: f64 = (0..self.p)
                    .filter(|&j| gamma[i * self.p + j])
                    .map(|j| x[(r, j)] * self.b[i * self.p + j])
                    .sum();
                (self.ys[i][r] - fit).powi(2)
            })
            .sum()
    }

    fn neighbor_sum(&self, i: usize, j: usize) -> f64 {
        self.graph.neighbors(i).iter().map(|&k| self.z[k * self.p + j]).sum()
    }

    pub fn sweep<R: Rng>(&mut self, rng: &mut R) {
        let n = self.graph.n_regions();
        let p = self.p;
        let rho = self.spec.rho;

        for i in 0..n {
            for j in 0..p {
                let k = i * p + j;
                let n_i = self.graph.degree(i) as f64;
                let mean = rho * self.neighbor_sum(i, j) / n_i;
                let sd = n_i.recip().sqrt();
                let w = super::phi(mean / sd);
                let mut gamma = self.gamma();
                gamma[k] = true;
                let l1 = -0.5 * self.rss(i, &gamma) / self.sigma2[i];
                gamma[k] = false;
                let l0 = -0.5 * self.rss(i, &gamma) / self.sigma2[i];
                let top = l1.max(l0);
                let a = w * (l1 - top).exp();
                let c = (1.0 - w) * (l0 - top).exp();
                let include = rng.random::<f64>() * (a + c) < a;
                self.z[k] = loop {
                    let v = mean + sd * std_normal(rng);
                    if (v > 0.0) == include {
                        break v;
                    }
                };
            }
        }

        let gamma = self.gamma();
        for i in 0..n {
            let x = &self.xs[i];
            let active: Vec<usize> = (0..p).filter(|&j| gamma[i * p + j]).collect();
            for j in 0..p {
                if !gamma[i * p + j] {
                    self.b[i * p + j] = self.mu[j] + self.tau2[j].sqrt() * std_normal(rng);
                }
            }
            if !active.is_empty() {
                let q = active.len();
                let xa = DMatrix::from_fn(x.nrows(), q, |r, a| x[(r, active[a])]);
                let y = DVector::from_column_slice(&self.ys[i]);
                let mut prec = xa.transpose() * &xa / self.sigma2[i];
                let mut rhs = xa.transpose() * y / self.sigma2[i];
                for (a, &j) in active.iter().enumerate() {
                    prec[(a, a)] += 1.0 / self.tau2[j];
                    rhs[a] += self.mu[j] / self.tau2[j];
                }
                let chol = prec.cholesky().unwrap();
                let mean = chol.solve(&rhs);
                let e = DVector::from_fn(q, |_, _| std_normal(rng));
                let draw = mean + chol.l().transpose().solve_upper_triangular(&e).unwrap();
                for (a, &j) in active.iter().enumerate() {
                    self.b[i * p + j] = draw[a];
                }
            }
        }

        for i in 0..n {
            let rss = self.rss(i, &gamma);
            let m = self.xs[i].nrows() as f64;
            self.sigma2[i] = inv_gamma(self.spec.a + 0.5 * m, self.spec.b + 0.5 * rss, rng);
        }

        let nf = n as f64;
        for j in 0..p {
            let col: Vec<f64> = (0..n).map(|i| self.b[i * p + j]).collect();
            let prec = 1.0 / self.spec.s0 + nf / self.tau2[j];
            let mean = (self.spec.mu0 / self.spec.s0 + col.iter().sum::<f64>() / self.tau2[j]) / prec;
            self.mu[j] = Normal::new(mean, prec.recip().sqrt()).unwrap().sample(rng);
            let ss: f64 = col.iter().map(|v| (v - self.mu[j]).powi(2)).sum();
            self.tau2[j] = inv_gamma(self.spec.a_t + 0.5 * nf, self.spec.b_t + 0.5 * ss, rng);
        }
    }
}
