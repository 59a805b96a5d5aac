//! Spatially smoothed inclusion-probability variable selection for areal
//! regression models.
//!
//! The crate provides an adjacency-graph layer, the latent CAR-probit
//! inclusion prior, collapsed Gibbs samplers for Gaussian and
//! negative-binomial responses (the latter through Pólya-Gamma
//! augmentation), a capture-recapture estimation layer, simulation
//! generators with baseline comparators, and CSV ingestion/emission.

pub mod chain;
pub mod collapsed;
pub mod crc;
pub mod diagnostics;
pub mod error;
pub mod gaussian;
pub mod graph;
pub mod io;
pub mod nb;
pub mod polya_gamma;
pub mod sim;
pub mod special;
pub mod ssip;
pub mod truncnorm;

pub use chain::{Draw, Engine, PosteriorChain, RunSettings, Summary};
pub use crc::{build_design, build_intersection_table, estimate_unseen, evaluate_crc, CaptureHistory, CaptureTable, CrcDesign, CrcEvaluation, UnseenEstimate};
pub use error::{Result, SsipError};
pub use collapsed::SlabPrior;
pub use gaussian::{fit_gaussian_ssip, GaussianHyper, GaussianOptions, GaussianSampler, GaussianState, RegionData};
pub use graph::AdjacencyGraph;
pub use nb::{fit_nb_ssip, NbConfig, NbOptions, NbRegionData, NbSampler, NbState};
pub use polya_gamma::{pg_mean, pg_var, sample_pg, PgConfig, PgParams};
pub use ssip::{LatentField, RhoUpdate, SsipConfig};
