use crate::config::{Settings, Study};
use crate::error::{config, Result};
use crate::fit::{manifest_record, run_metadata, DEFAULT_ITERATIONS};
use crate::output::{fmt, Artifacts, Report};
use rayon::prelude::*;
use ssip_core::io::write_long_csv;
use ssip_core::sim::{
    replicate_crc, replicate_gaussian, CrcReplication, CrcSimConfig, GaussianReplication, GaussianSimConfig,
};
use ssip_core::{CrcEvaluation, GaussianOptions, NbConfig, NbOptions, RunSettings};

const METHODS: [&str; 3] = ["ssip", "independent", "aic"];

type Long = Vec<(String, String, f64)>;

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    ssip_core::chain::quantile_sorted(&v, 0.5)
}

/// Runs `one` for every seed in parallel; results come back in seed order.
fn across_seeds<T: Send>(seeds: &[u64], one: impl Fn(u64) -> ssip_core::Result<T> + Sync) -> Vec<(u64, std::result::Result<T, String>)> {
    seeds
        .par_iter()
        .map(|&seed| {
            let out = one(seed).map_err(|e| e.to_string());
            if let Err(e) = &out {
                log::warn!("seed {seed} failed: {e}");
            }
            (seed, out)
        })
        .collect()
}

struct Tables {
    rows: Vec<Vec<String>>,
    long: Long,
    failures: Vec<Vec<String>>,
}

fn cell(values: &[f64]) -> String {
    if values.is_empty() {
        "NA".into()
    } else {
        fmt(mean(values))
    }
}

fn gaussian_tables(results: Vec<(u64, std::result::Result<GaussianReplication, String>)>) -> Tables {
    let ok: Vec<&GaussianReplication> = results.iter().filter_map(|(_, r)| r.as_ref().ok()).collect();
    let complete = (ok.len() == results.len()).to_string();
    let n_ok = ok.len().to_string();
    let col = |f: fn(&GaussianReplication) -> f64| ok.iter().map(|r| f(r)).collect::<Vec<f64>>();
    let mse = [col(|r| r.mse_ssip), col(|r| r.mse_independent), col(|r| r.mse_aic)];
    let entropy = [col(|r| r.entropy_ssip), col(|r| r.entropy_independent)];
    let median_cell = |v: &[f64]| if v.is_empty() { "NA".into() } else { fmt(median(v)) };
    let rows = vec![
        ["mse_mean".to_owned(), cell(&mse[0]), cell(&mse[1]), cell(&mse[2]), n_ok.clone(), complete.clone()].to_vec(),
        [
            "mse_median".to_owned(),
            median_cell(&mse[0]),
            median_cell(&mse[1]),
            median_cell(&mse[2]),
            n_ok.clone(),
            complete.clone(),
        ]
        .to_vec(),
        ["entropy_mean".to_owned(), cell(&entropy[0]), cell(&entropy[1]), "NA".into(), n_ok, complete].to_vec(),
    ];
    let mut long = Long::new();
    for r in &ok {
        let stratum = format!("seed={}", r.seed);
        for (q, v) in [
            ("mse_ssip", r.mse_ssip),
            ("mse_independent", r.mse_independent),
            ("mse_aic", r.mse_aic),
            ("entropy_ssip", r.entropy_ssip),
            ("entropy_independent", r.entropy_independent),
        ] {
            long.push((stratum.clone(), q.to_owned(), v));
        }
    }
    Tables {
        rows,
        long,
        failures: failures(&results),
    }
}

fn crc_tables(results: Vec<(u64, std::result::Result<CrcReplication, String>)>) -> Tables {
    let ok: Vec<&CrcReplication> = results.iter().filter_map(|(_, r)| r.as_ref().ok()).collect();
    let complete = (ok.len() == results.len()).to_string();
    let evals = |r: &CrcReplication| [r.ssip_eval, r.independent_eval, r.aic_eval];
    let metrics: [(&str, fn(&CrcEvaluation) -> f64); 4] = [
        ("coverage", |e| e.coverage),
        ("rmse", |e| e.rmse),
        ("mean_median_abs_diff", |e| e.mean_median_abs_diff),
        ("correlation", |e| e.correlation),
    ];
    let rows = metrics
        .iter()
        .map(|(name, get)| {
            let mut row = vec![(*name).to_owned()];
            for m in 0..METHODS.len() {
                // Undefined values (a constant truth, say) leave the cell incomplete.
                let values: Vec<f64> = ok.iter().map(|r| get(&evals(r)[m])).filter(|v| v.is_finite()).collect();
                row.push(if values.len() == ok.len() { cell(&values) } else { "NA".into() });
            }
            row.push(ok.len().to_string());
            row.push(complete.clone());
            row
        })
        .collect();
    let mut long = Long::new();
    for r in &ok {
        let stratum = format!("seed={}", r.seed);
        for (m, e) in METHODS.iter().zip(evals(r)) {
            for (name, get) in &metrics {
                long.push((stratum.clone(), format!("{m}_{name}"), get(&e)));
            }
        }
        long.push((stratum.clone(), "observed_total".into(), r.observed_total as f64));
        for (i, truth) in r.truth.iter().enumerate() {
            let stratum = format!("seed={}/cell={i}", r.seed);
            long.push((stratum.clone(), "truth".into(), *truth));
            for (m, est) in METHODS.iter().zip([&r.ssip[i], &r.independent[i], &r.aic[i]]) {
                long.push((stratum.clone(), format!("{m}_median"), est.median));
                long.push((stratum.clone(), format!("{m}_lo95"), est.lo95));
                long.push((stratum.clone(), format!("{m}_hi95"), est.hi95));
            }
        }
    }
    Tables {
        rows,
        long,
        failures: failures(&results),
    }
}

fn failures<T>(results: &[(u64, std::result::Result<T, String>)]) -> Vec<Vec<String>> {
    results
        .iter()
        .filter_map(|(seed, r)| r.as_ref().err().map(|e| vec![seed.to_string(), e.clone()]))
        .collect()
}

pub fn run(mut s: Settings) -> Result<Report> {
    s.reject_unused(
        "replicate",
        &[
            ("engine", s.engine.is_some()),
            ("data", s.data.is_some()),
            ("capture", s.capture.is_some()),
            ("groups", s.groups.is_some()),
            ("grid", s.grid.is_some()),
            ("edges", s.edges.is_some()),
            ("regions", s.regions.is_some()),
            ("chain_dump", s.chain_dump.is_some()),
            ("lists", s.lists.is_some()),
            ("seed", s.seed.is_some()),
        ],
    )?;
    let study = s.study.ok_or_else(|| config("`study` is required (gaussian or crc)"))?;
    let seeds = s.seeds.clone().ok_or_else(|| config("`seeds` is required"))?;
    if seeds.is_empty() {
        return Err(config("`seeds` is empty"));
    }
    // Each replication seeds its chains from its own data seed.
    let run = s.resolve_run(DEFAULT_ITERATIONS)?;
    s.seed = None;
    let ssip = s.resolve_ssip()?;
    let dir = s.resolve_out()?;

    let tables = match study {
        Study::Gaussian => {
            s.reject_unused(
                "replicate --study gaussian",
                &[
                    ("h", s.h.is_some()),
                    ("car_intercept", s.car_intercept.is_some()),
                    ("temporal", s.temporal.is_some()),
                    ("ar_coef", s.ar_coef.is_some()),
                    ("max_order", s.max_order.is_some()),
                    ("intensity_scale", s.intensity_scale.is_some()),
                    ("grid_side", s.grid_side.is_some()),
                ],
            )?;
            let base = GaussianSimConfig::default();
            let sim = GaussianSimConfig {
                obs_per_region: *s.obs_per_region.get_or_insert(base.obs_per_region),
                noise_var: *s.noise_var.get_or_insert(base.noise_var),
                ..base
            };
            let defaults = GaussianOptions::default();
            let slab = s.resolve_slab(defaults.hyper.slab());
            let opts = GaussianOptions {
                hyper: ssip_core::GaussianHyper {
                    mu0: slab.mu0,
                    s0: slab.s0,
                    a_t: slab.a_t,
                    b_t: slab.b_t,
                    a: *s.a.get_or_insert(defaults.hyper.a),
                    b: *s.b.get_or_insert(defaults.hyper.b),
                },
                ssip,
                force_intercept: *s.intercept.get_or_insert(true),
                pooled_sigma: *s.pooled_sigma.get_or_insert(false),
                prior_only: false,
            };
            opts.validate().map_err(|e| config(e.to_string()))?;
            gaussian_tables(across_seeds(&seeds, |seed| replicate_gaussian(&sim, seed, &opts, &RunSettings { seed, ..run })))
        }
        Study::Crc => {
            s.reject_unused(
                "replicate --study crc",
                &[
                    ("a", s.a.is_some()),
                    ("b", s.b.is_some()),
                    ("pooled_sigma", s.pooled_sigma.is_some()),
                    ("intercept", s.intercept.is_some()),
                    ("temporal", s.temporal.is_some()),
                    ("ar_coef", s.ar_coef.is_some()),
                    ("obs_per_region", s.obs_per_region.is_some()),
                    ("noise_var", s.noise_var.is_some()),
                ],
            )?;
            let base = CrcSimConfig::default();
            let sim = CrcSimConfig {
                intensity_scale: *s.intensity_scale.get_or_insert(base.intensity_scale),
                grid_side: *s.grid_side.get_or_insert(base.grid_side),
                max_order: *s.max_order.get_or_insert(base.max_order),
            };
            let preset = NbOptions::capture_recapture();
            let opts = NbOptions {
                hyper: s.resolve_slab(preset.hyper),
                ssip,
                nb: NbConfig {
                    h: *s.h.get_or_insert(preset.nb.h),
                    car_intercept: *s.car_intercept.get_or_insert(preset.nb.car_intercept),
                    ..preset.nb
                },
            };
            opts.validate().map_err(|e| config(e.to_string()))?;
            crc_tables(across_seeds(&seeds, |seed| replicate_crc(&sim, seed, &opts, &RunSettings { seed, ..run })))
        }
    };

    let hash = s.config_hash();
    let mut record = manifest_record("replicate", &hash, &[])?;
    record.insert("failed_seeds".into(), (tables.failures.len() as i64).into());
    let mut out = Artifacts::create(&dir, run_metadata("replicate", &hash, &s))?;
    let header = ["quantity", "ssip", "independent", "aic", "seeds_ok", "complete"];
    out.write_table("table.csv", &header, &tables.rows)?;
    out.write("long.csv", |w, m| write_long_csv(w, &tables.long, m))?;
    out.write_table("failures.csv", &["seed", "error"], &tables.failures)?;
    let mut notes: Vec<String> = tables.rows.iter().map(|r| r.join(" ")).collect();
    notes.insert(0, header.join(" "));
    if !tables.failures.is_empty() {
        notes.push(format!("{} of {} seeds failed; see failures.csv", tables.failures.len(), seeds.len()));
    }
    Ok(Report {
        out: Some(dir),
        artifacts: out.write_manifest(&s, record)?,
        notes,
    })
}
