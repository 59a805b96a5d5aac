use crate::config::{content_digest, EngineKind, Settings};
use crate::error::{config, CliError, Result};
use crate::output::{Artifacts, Report};
use ssip_core::io::{
    read_count_csv, read_gaussian_csv, write_chain_csv, write_effects_csv, write_inclusion_csv, write_summary_csv,
};
use ssip_core::{fit_gaussian_ssip, fit_nb_ssip, GaussianHyper, GaussianOptions, NbConfig, NbOptions, PosteriorChain, SlabPrior};
use std::fs::File;
use std::path::Path;

pub const DEFAULT_ITERATIONS: usize = 10_000;

/// Metadata lines shared by every artifact of a run.
pub fn run_metadata(command: &str, hash: &str, s: &Settings) -> Vec<(String, String)> {
    let mut meta = vec![
        ("config_hash".to_owned(), hash.to_owned()),
        ("command".to_owned(), command.to_owned()),
    ];
    let mut push = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            meta.push((k.to_owned(), v));
        }
    };
    push("engine", s.engine.map(|e| format!("{e:?}").to_lowercase()));
    push("iterations", s.iterations.map(|v| v.to_string()));
    push("burn_in", s.burn_in.map(|v| v.to_string()));
    push("thin", s.thin.map(|v| v.to_string()));
    push("seed", s.seed.map(|v| v.to_string()));
    push("chains", s.chains.map(|v| v.to_string()));
    meta
}

/// Common part of every manifest record.
pub fn manifest_record(command: &str, hash: &str, inputs: &[&Path]) -> Result<toml::Table> {
    let mut record = toml::Table::new();
    record.insert("command".into(), command.into());
    record.insert("config_hash".into(), hash.into());
    record.insert("version".into(), env!("CARGO_PKG_VERSION").into());
    let mut digests = toml::Table::new();
    for path in inputs {
        digests.insert(path.display().to_string(), content_digest(path)?.into());
    }
    record.insert("inputs".into(), toml::Value::Table(digests));
    Ok(record)
}

/// Per-chain timing and acceptance, which vary between reruns and so live
/// only in the manifest.
pub fn chain_record(record: &mut toml::Table, chain: &PosteriorChain) {
    let sweeps = chain.meta.settings.iterations.max(1) as f64;
    let seconds = chain
        .chains
        .iter()
        .map(|c| toml::Value::Float(c.sweep_time.as_secs_f64() / sweeps))
        .collect();
    record.insert("sweep_seconds".into(), toml::Value::Array(seconds));
    let accept: Vec<toml::Value> = chain
        .chains
        .iter()
        .filter_map(|c| c.rho_acceptance.map(toml::Value::Float))
        .collect();
    if !accept.is_empty() {
        record.insert("rho_acceptance".into(), toml::Value::Array(accept));
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| CliError::Input {
        path: path.to_owned(),
        source: e.into(),
    })
}

pub fn run(mut s: Settings) -> Result<Report> {
    s.reject_unused(
        "fit",
        &[
            ("capture", s.capture.is_some()),
            ("groups", s.groups.is_some()),
            ("lists", s.lists.is_some()),
            ("max_order", s.max_order.is_some()),
            ("study", s.study.is_some()),
            ("seeds", s.seeds.is_some()),
            ("obs_per_region", s.obs_per_region.is_some()),
            ("noise_var", s.noise_var.is_some()),
            ("intensity_scale", s.intensity_scale.is_some()),
            ("grid_side", s.grid_side.is_some()),
        ],
    )?;
    let engine = *s.engine.get_or_insert(EngineKind::Gaussian);
    let data_path = Settings::require_input(&mut s.data, "data")?;
    let graph = s.resolve_graph()?;
    let run = s.resolve_run(DEFAULT_ITERATIONS)?;
    let ssip = s.resolve_ssip()?;
    let intercept = *s.intercept.get_or_insert(true);
    s.chain_dump.get_or_insert(false);
    let dir = s.resolve_out()?;
    let n = graph.n_regions();

    let (chain, covariates, time_labels) = match engine {
        EngineKind::Gaussian => {
            s.reject_unused(
                "fit --engine gaussian",
                &[
                    ("h", s.h.is_some()),
                    ("car_intercept", s.car_intercept.is_some()),
                    ("temporal", s.temporal.is_some()),
                    ("ar_coef", s.ar_coef.is_some()),
                ],
            )?;
            let base = GaussianHyper::default();
            let slab = s.resolve_slab(base.slab());
            let hyper = GaussianHyper {
                mu0: slab.mu0,
                s0: slab.s0,
                a_t: slab.a_t,
                b_t: slab.b_t,
                a: *s.a.get_or_insert(base.a),
                b: *s.b.get_or_insert(base.b),
            };
            let opts = GaussianOptions {
                hyper,
                ssip,
                force_intercept: intercept,
                pooled_sigma: *s.pooled_sigma.get_or_insert(false),
                prior_only: false,
            };
            opts.validate().map_err(|e| config(e.to_string()))?;
            let data = read_gaussian_csv(open(&data_path)?, n, intercept).map_err(|source| CliError::Input {
                path: data_path.clone(),
                source,
            })?;
            log::info!("fitting gaussian engine on {n} regions, {} covariates", data.covariates.len());
            let chain = fit_gaussian_ssip(&data.regions, &graph, &opts, &run)?;
            (chain, data.covariates, None)
        }
        EngineKind::Nb => {
            s.reject_unused(
                "fit --engine nb",
                &[("a", s.a.is_some()), ("b", s.b.is_some()), ("pooled_sigma", s.pooled_sigma.is_some())],
            )?;
            let hyper = s.resolve_slab(SlabPrior::default());
            let base = NbConfig::default();
            let opts = NbOptions {
                hyper,
                ssip,
                nb: NbConfig {
                    h: *s.h.get_or_insert(base.h),
                    car_intercept: *s.car_intercept.get_or_insert(base.car_intercept),
                    temporal: *s.temporal.get_or_insert(base.temporal),
                    ar_coef: *s.ar_coef.get_or_insert(base.ar_coef),
                    forced_leading: usize::from(intercept),
                    ..base
                },
            };
            opts.validate().map_err(|e| config(e.to_string()))?;
            let data = read_count_csv(open(&data_path)?, n, intercept).map_err(|source| CliError::Input {
                path: data_path.clone(),
                source,
            })?;
            if opts.nb.temporal && data.time_labels.is_none() {
                return Err(config("`temporal` needs a `time` column in the data"));
            }
            log::info!("fitting count engine on {n} regions, {} covariates", data.covariates.len());
            let chain = fit_nb_ssip(&data.regions, &graph, &opts, &run)?;
            (chain, data.covariates, data.time_labels)
        }
    };

    let hash = s.config_hash();
    let mut inputs = vec![data_path.as_path()];
    if let Some(edges) = &s.edges {
        inputs.push(edges);
    }
    let mut record = manifest_record("fit", &hash, &inputs)?;
    chain_record(&mut record, &chain);

    let mut out = Artifacts::create(&dir, run_metadata("fit", &hash, &s))?;
    out.write("summary.csv", |w, m| write_summary_csv(w, &chain, &covariates, m))?;
    out.write("inclusion.csv", |w, m| write_inclusion_csv(w, &chain, &covariates, m))?;
    out.write("effects.csv", |w, m| write_effects_csv(w, &chain, time_labels.as_deref(), m))?;
    if s.chain_dump == Some(true) {
        out.write("chain.csv", |w, m| write_chain_csv(w, &chain, m))?;
    }
    let notes = vec![format!("{} regions x {} covariates", chain.n_regions, chain.p)];
    Ok(Report {
        out: Some(dir),
        artifacts: out.write_manifest(&s, record)?,
        notes,
    })
}
