use crate::config::Settings;
use crate::error::{config, CliError, Result};
use crate::fit::{chain_record, manifest_record, run_metadata, DEFAULT_ITERATIONS};
use crate::output::{Artifacts, Report};
use ssip_core::io::{
    read_capture_csv, read_groups_csv, write_chain_csv, write_effects_csv, write_estimates_csv, write_inclusion_csv,
    write_summary_csv, EstimateRow,
};
use ssip_core::crc::estimate_unseen_group;
use ssip_core::{build_design, build_intersection_table, estimate_unseen, fit_nb_ssip, NbConfig, NbOptions};
use std::fs::File;
use std::path::Path;

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| CliError::Input {
        path: path.to_owned(),
        source: e.into(),
    })
}

pub fn run(mut s: Settings) -> Result<Report> {
    s.reject_unused(
        "crc",
        &[
            ("engine", s.engine.is_some()),
            ("data", s.data.is_some()),
            ("a", s.a.is_some()),
            ("b", s.b.is_some()),
            ("pooled_sigma", s.pooled_sigma.is_some()),
            ("intercept", s.intercept.is_some()),
            ("study", s.study.is_some()),
            ("seeds", s.seeds.is_some()),
            ("obs_per_region", s.obs_per_region.is_some()),
            ("noise_var", s.noise_var.is_some()),
            ("intensity_scale", s.intensity_scale.is_some()),
            ("grid_side", s.grid_side.is_some()),
        ],
    )?;
    let capture_path = Settings::require_input(&mut s.capture, "capture")?;
    Settings::canonicalize_optional(&mut s.groups)?;
    let graph = s.resolve_graph()?;
    let n = graph.n_regions();
    let run = s.resolve_run(DEFAULT_ITERATIONS)?;
    let ssip = s.resolve_ssip()?;
    s.chain_dump.get_or_insert(false);
    let dir = s.resolve_out()?;

    let data = read_capture_csv(open(&capture_path)?, n).map_err(|source| CliError::Input {
        path: capture_path.clone(),
        source,
    })?;
    let k = data.k;
    if s.lists.is_some_and(|l| l != k) {
        return Err(config(format!("`lists` is {} but the capture patterns have {k} lists", s.lists.unwrap())));
    }
    s.lists = Some(k);
    let max_order = *s.max_order.get_or_insert(k.saturating_sub(1).max(1));
    let design = build_design(k, max_order).map_err(|e| config(e.to_string()))?;
    let groups = match &s.groups {
        Some(path) => read_groups_csv(open(path)?, n).map_err(|source| CliError::Input {
            path: path.clone(),
            source,
        })?,
        None => Vec::new(),
    };

    let preset = NbOptions::capture_recapture();
    let hyper = s.resolve_slab(preset.hyper);
    let opts = NbOptions {
        hyper,
        ssip,
        nb: NbConfig {
            h: *s.h.get_or_insert(preset.nb.h),
            car_intercept: *s.car_intercept.get_or_insert(preset.nb.car_intercept),
            temporal: *s.temporal.get_or_insert(preset.nb.temporal),
            ar_coef: *s.ar_coef.get_or_insert(preset.nb.ar_coef),
            forced_leading: design.n_forced(),
            ..preset.nb
        },
    };
    opts.validate().map_err(|e| config(e.to_string()))?;
    let n_times = data.time_labels.len();
    if opts.nb.temporal && n_times < 2 {
        return Err(config("`temporal` needs capture records from at least two times"));
    }

    let table = build_intersection_table(k, n, n_times, &data.histories)?;
    let regions = table.to_regions(&design)?;
    log::info!(
        "fitting capture-recapture model: {k} lists, {} design columns, {n} regions, {n_times} times",
        design.n_columns()
    );
    let chain = fit_nb_ssip(&regions, &graph, &opts, &run)?;

    let mut rows = Vec::with_capacity(n * n_times);
    for i in 0..n {
        for (t, &label) in data.time_labels.iter().enumerate() {
            rows.push(EstimateRow {
                region: i.to_string(),
                time: label,
                estimate: estimate_unseen(&chain, i, t)?,
                sparse: table.is_sparse(i, t),
            });
        }
    }
    let mut group_rows = Vec::with_capacity(groups.len() * n_times);
    for g in &groups {
        for (t, &label) in data.time_labels.iter().enumerate() {
            group_rows.push(EstimateRow {
                region: g.name.clone(),
                time: label,
                estimate: estimate_unseen_group(&chain, &g.regions, t, run.seed)?,
                sparse: g.regions.iter().all(|&i| table.is_sparse(i, t)),
            });
        }
    }

    let hash = s.config_hash();
    let mut inputs = vec![capture_path.as_path()];
    inputs.extend(s.groups.as_deref());
    inputs.extend(s.edges.as_deref());
    let mut record = manifest_record("crc", &hash, &inputs)?;
    chain_record(&mut record, &chain);
    record.insert("design_columns".into(), (design.n_columns() as i64).into());
    record.insert("design_forced".into(), (design.n_forced() as i64).into());

    let names = design.column_names();
    let mut out = Artifacts::create(&dir, run_metadata("crc", &hash, &s))?;
    let forced = design.forced_mask();
    let design_rows: Vec<Vec<String>> = names
        .iter()
        .enumerate()
        .map(|(j, name)| vec![j.to_string(), name.clone(), u8::from(forced[j]).to_string()])
        .collect();
    out.write_table("design.csv", &["column", "term", "forced"], &design_rows)?;
    out.write("estimates.csv", |w, m| write_estimates_csv(w, &rows, m))?;
    if !groups.is_empty() {
        out.write("group_estimates.csv", |w, m| write_estimates_csv(w, &group_rows, m))?;
    }
    out.write("summary.csv", |w, m| write_summary_csv(w, &chain, &names, m))?;
    out.write("inclusion.csv", |w, m| write_inclusion_csv(w, &chain, &names, m))?;
    out.write("effects.csv", |w, m| write_effects_csv(w, &chain, Some(&data.time_labels), m))?;
    if s.chain_dump == Some(true) {
        out.write("chain.csv", |w, m| write_chain_csv(w, &chain, m))?;
    }
    let notes = vec![
        format!(
            "design: {} columns ({} forced, {} unforced)",
            design.n_columns(),
            design.n_forced(),
            design.n_unforced()
        ),
        format!("{} sparse strata of {}", rows.iter().filter(|r| r.sparse).count(), rows.len()),
    ];
    Ok(Report {
        out: Some(dir),
        artifacts: out.write_manifest(&s, record)?,
        notes,
    })
}
