//! Flat `key = value` run configuration shared by every command.
//!
//! A configuration file and command-line flags both produce a [`Settings`];
//! flags win. Each command then fills in its defaults so the resolved
//! settings describe the run completely, and that resolved form is what gets
//! hashed and written to the manifest. A manifest is itself a valid
//! configuration file.

use crate::error::{config, CliError, Result};
use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use ssip_core::{AdjacencyGraph, RhoUpdate, RunSettings, SlabPrior, SsipConfig};
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    Gaussian,
    Nb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum RhoMode {
    Fixed,
    Metropolis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Study {
    Gaussian,
    Crc,
}

macro_rules! settings {
    ($($(#[$doc:meta])* $name:ident: $ty:ty,)*) => {
        #[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
        #[serde(deny_unknown_fields)]
        pub struct Settings {
            $($(#[$doc])* pub $name: Option<$ty>,)*
            /// Run record appended to manifests; ignored on input.
            #[serde(skip_serializing)]
            pub manifest: Option<toml::Table>,
        }

        impl Settings {
            /// Combines two layers; values set in `self` win.
            pub fn over(self, fallback: Settings) -> Settings {
                Settings {
                    $($name: self.$name.or(fallback.$name),)*
                    manifest: None,
                }
            }

            fn paths_mut(&mut self) -> [&mut Option<PathBuf>; 5] {
                [&mut self.data, &mut self.capture, &mut self.groups, &mut self.edges, &mut self.out]
            }
        }
    };
}

settings! {
    engine: EngineKind,
    /// Regression data, `region_id,[time,]y,x1..`.
    data: PathBuf,
    /// Capture histories, `region_id,[time,]pattern`.
    capture: PathBuf,
    /// Region groups for aggregated estimates, `region_id,group`.
    groups: PathBuf,
    /// Rook grid as `ROWSxCOLS`.
    grid: String,
    edges: PathBuf,
    regions: usize,
    out: PathBuf,
    iterations: usize,
    burn_in: usize,
    thin: usize,
    seed: u64,
    chains: usize,
    rho: f64,
    rho_update: RhoMode,
    rho_step: f64,
    intercept: bool,
    pooled_sigma: bool,
    mu0: f64,
    s0: f64,
    a_t: f64,
    b_t: f64,
    a: f64,
    b: f64,
    h: f64,
    car_intercept: bool,
    temporal: bool,
    ar_coef: f64,
    lists: usize,
    max_order: usize,
    chain_dump: bool,
    study: Study,
    seeds: Vec<u64>,
    obs_per_region: usize,
    noise_var: f64,
    intensity_scale: f64,
    grid_side: usize,
}

impl Settings {
    /// Reads a configuration file; relative paths inside it are taken
    /// relative to the file's directory.
    pub fn load(path: &Path) -> Result<Settings> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::ConfigFile {
            path: path.to_owned(),
            message: e.to_string(),
        })?;
        let mut settings: Settings = toml::from_str(&text).map_err(|e| CliError::ConfigFile {
            path: path.to_owned(),
            message: e.message().to_owned(),
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in settings.paths_mut().into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(settings)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("settings serialize to TOML")
    }

    /// SHA-256 of the resolved settings, excluding where outputs go and
    /// whether the chain is dumped.
    pub fn config_hash(&self) -> String {
        let hashed = Settings {
            out: None,
            chain_dump: None,
            ..self.clone()
        };
        format!("{:x}", Sha256::digest(hashed.to_toml().as_bytes()))
    }

    /// Fixes the output directory as an absolute path (default `ssip-out`).
    pub fn resolve_out(&mut self) -> Result<PathBuf> {
        let out = self.out.get_or_insert_with(|| PathBuf::from("ssip-out"));
        *out = std::path::absolute(&*out).map_err(|source| CliError::Output {
            path: out.clone(),
            source,
        })?;
        Ok(out.clone())
    }

    /// Makes an input path absolute, failing if it does not exist.
    pub fn require_input(path: &mut Option<PathBuf>, what: &str) -> Result<PathBuf> {
        let p = path.as_ref().ok_or_else(|| config(format!("missing required input `{what}`")))?;
        let canonical = std::fs::canonicalize(p).map_err(|_| CliError::MissingInput { path: p.clone() })?;
        *path = Some(canonical.clone());
        Ok(canonical)
    }

    pub fn canonicalize_optional(path: &mut Option<PathBuf>) -> Result<()> {
        if path.is_some() {
            Self::require_input(path, "path")?;
        }
        Ok(())
    }

    /// Resolves the graph source. Exactly one of `grid` and `edges` is set.
    pub fn resolve_graph(&mut self) -> Result<AdjacencyGraph> {
        match (&self.grid, &self.edges) {
            (Some(_), Some(_)) => Err(config("give either `grid` or `edges`, not both")),
            (None, None) => Err(config("a graph is required: set `grid` (e.g. 3x3) or `edges`")),
            (Some(spec), None) => {
                let (rows, cols) = parse_grid(spec)?;
                if self.regions.is_some_and(|n| n != rows * cols) {
                    return Err(config(format!("`regions` disagrees with grid {spec}")));
                }
                self.regions = Some(rows * cols);
                AdjacencyGraph::grid(rows, cols).map_err(|e| config(e.to_string()))
            }
            (None, Some(_)) => {
                let path = Self::require_input(&mut self.edges, "edges")?;
                let graph = AdjacencyGraph::read_edge_list(&path, self.regions)
                    .map_err(|source| CliError::Input { path, source })?;
                self.regions = Some(graph.n_regions());
                Ok(graph)
            }
        }
    }

    /// Fills run defaults and validates them.
    pub fn resolve_run(&mut self, default_iterations: usize) -> Result<RunSettings> {
        let iterations = *self.iterations.get_or_insert(default_iterations);
        let run = RunSettings {
            iterations,
            burn_in: *self.burn_in.get_or_insert(iterations / 10),
            thin: *self.thin.get_or_insert(1),
            seed: *self.seed.get_or_insert(0),
            chains: *self.chains.get_or_insert(1),
        };
        run.validate().map_err(|e| config(e.to_string()))?;
        Ok(run)
    }

    /// Fills the spatial-dependence defaults.
    pub fn resolve_ssip(&mut self) -> Result<SsipConfig> {
        let rho = *self.rho.get_or_insert(SsipConfig::default().rho);
        let rho_update = match *self.rho_update.get_or_insert(RhoMode::Fixed) {
            RhoMode::Fixed => {
                if self.rho_step.is_some() {
                    return Err(config("`rho_step` requires `rho_update = \"metropolis\"`"));
                }
                RhoUpdate::Off
            }
            RhoMode::Metropolis => RhoUpdate::Metropolis {
                step: *self.rho_step.get_or_insert(0.1),
            },
        };
        let ssip = SsipConfig { rho, rho_update };
        ssip.validate().map_err(|e| config(e.to_string()))?;
        Ok(ssip)
    }

    /// Fills the slab hyperparameter defaults, starting from `base`.
    pub fn resolve_slab(&mut self, base: SlabPrior) -> SlabPrior {
        SlabPrior {
            mu0: *self.mu0.get_or_insert(base.mu0),
            s0: *self.s0.get_or_insert(base.s0),
            a_t: *self.a_t.get_or_insert(base.a_t),
            b_t: *self.b_t.get_or_insert(base.b_t),
        }
    }

    /// Rejects keys that the command does not use, so that a typo'd or
    /// misplaced setting cannot silently change nothing.
    pub fn reject_unused(&self, command: &str, keys: &[(&str, bool)]) -> Result<()> {
        match keys.iter().find(|(_, set)| *set) {
            Some((key, _)) => Err(config(format!("`{key}` is not used by `{command}`"))),
            None => Ok(()),
        }
    }
}

pub fn parse_grid(spec: &str) -> Result<(usize, usize)> {
    let bad = || config(format!("grid must look like ROWSxCOLS, got {spec:?}"));
    let (r, c) = spec.split_once(['x', 'X']).ok_or_else(bad)?;
    let rows = r.trim().parse().map_err(|_| bad())?;
    let cols = c.trim().parse().map_err(|_| bad())?;
    Ok((rows, cols))
}

/// Seed list given as `START..END` (end exclusive) or `a,b,c`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedList(pub Vec<u64>);

impl FromStr for SeedList {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        if let Some((a, b)) = s.split_once("..") {
            let parse = |t: &str| t.trim().parse::<u64>().map_err(|e| format!("bad seed bound {t:?}: {e}"));
            let (start, end) = (parse(a)?, parse(b)?);
            return Ok(SeedList((start..end).collect()));
        }
        s.split(',')
            .filter(|t| !t.trim().is_empty())
            .map(|t| t.trim().parse().map_err(|e| format!("bad seed {t:?}: {e}")))
            .collect::<std::result::Result<_, _>>()
            .map(SeedList)
    }
}

/// Git-style content digest: SHA-256 of `blob <len>\0` followed by the bytes.
pub fn content_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Input {
        path: path.to_owned(),
        source: e.into(),
    })?;
    let mut hasher = Sha256::new();
    hasher.update(format!("blob {}\0", bytes.len()).as_bytes());
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}
