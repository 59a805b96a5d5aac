//! CSV ingestion and emission.
//!
//! Every file is UTF-8, comma separated, uses `.` as the decimal mark and has
//! a mandatory header row. Writers may prepend metadata lines of the form
//! `# key=value`; readers skip any line starting with `#`. Region ids are
//! 0-based indices into the adjacency graph. Time labels are arbitrary
//! integers, mapped to consecutive indices in increasing order.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a value
//! read back parses to the same `f64`.

use crate::chain::{PosteriorChain, Summary};
use crate::crc::{format_pattern, parse_pattern, CaptureHistory, UnseenEstimate};
use crate::error::{Result, SsipError};
use crate::gaussian::RegionData;
use crate::nb::NbRegionData;
use csv::{ReaderBuilder, StringRecord, Terminator, Trim, WriterBuilder};
use nalgebra::DMatrix;
use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

/// Column name given to the automatically added intercept.
pub const INTERCEPT_NAME: &str = "intercept";

/// `key=value` pairs written as leading comment lines.
pub type Metadata = [(String, String)];

fn csv_error(err: csv::Error) -> SsipError {
    let line = err.position().map_or(0, |p| p.line() as usize);
    match err.into_kind() {
        csv::ErrorKind::Io(io) => SsipError::Io(io),
        kind => SsipError::Parse {
            line,
            message: format!("{kind:?}"),
        },
    }
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(Trim::All)
        .from_reader(input)
}

fn writer<W: Write>(mut out: W, meta: &Metadata) -> Result<csv::Writer<W>> {
    for (key, value) in meta {
        writeln!(out, "# {key}={value}")?;
    }
    Ok(WriterBuilder::new().terminator(Terminator::Any(b'\n')).from_writer(out))
}

fn write_row<W: Write, I, T>(w: &mut csv::Writer<W>, row: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: AsRef<[u8]>,
{
    w.write_record(row).map_err(csv_error)
}

fn finish<W: Write>(mut w: csv::Writer<W>) -> Result<()> {
    w.flush()?;
    Ok(())
}

fn line_of(record: &StringRecord) -> usize {
    record.position().map_or(0, |p| p.line() as usize)
}

fn field<'r>(record: &'r StringRecord, idx: usize, name: &str) -> Result<&'r str> {
    record.get(idx).ok_or_else(|| SsipError::Parse {
        line: line_of(record),
        message: format!("missing column {name}"),
    })
}

fn parse_field<T: std::str::FromStr>(record: &StringRecord, idx: usize, name: &str) -> Result<T> {
    let raw = field(record, idx, name)?;
    raw.parse().map_err(|_| SsipError::Parse {
        line: line_of(record),
        message: format!("cannot parse {name} value {raw:?}"),
    })
}

fn parse_region(record: &StringRecord, n_regions: usize) -> Result<usize> {
    let region: usize = parse_field(record, 0, "region_id")?;
    if region >= n_regions {
        return Err(SsipError::Parse {
            line: line_of(record),
            message: format!("region_id {region} outside the graph's {n_regions} regions"),
        });
    }
    Ok(region)
}

fn expect_header(header: &StringRecord, expected: &[&str]) -> Result<()> {
    for (idx, name) in expected.iter().enumerate() {
        if header.get(idx) != Some(name) {
            return Err(SsipError::Parse {
                line: 1,
                message: format!("expected column {} to be {name:?}, found {:?}", idx + 1, header.get(idx)),
            });
        }
    }
    Ok(())
}

fn fmt(v: f64) -> String {
    v.to_string()
}

/// Maps sorted distinct time labels to `0..T`.
fn index_times(labels: &[i64]) -> (Vec<i64>, BTreeMap<i64, usize>) {
    let sorted: Vec<i64> = labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let index = sorted.iter().enumerate().map(|(t, &l)| (l, t)).collect();
    (sorted, index)
}

/// Per-region Gaussian data with covariate names in column order.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDataset {
    pub regions: Vec<RegionData>,
    pub covariates: Vec<String>,
}

struct RawRows<Y> {
    covariates: Vec<String>,
    rows: Vec<Vec<(Y, Vec<f64>, Option<i64>)>>,
}

fn split_by_region<R: Read, Y: std::str::FromStr>(
    input: R,
    n_regions: usize,
    intercept: bool,
    time_column: bool,
) -> Result<RawRows<Y>> {
    let mut rdr = reader(input);
    let header = rdr.headers().map_err(csv_error)?.clone();
    let leading: &[&str] = if time_column { &["region_id", "time", "y"] } else { &["region_id", "y"] };
    expect_header(&header, leading)?;
    let mut covariates: Vec<String> = header.iter().skip(leading.len()).map(str::to_owned).collect();
    if intercept {
        covariates.insert(0, INTERCEPT_NAME.to_owned());
    }
    if covariates.is_empty() {
        return Err(SsipError::InvalidData("no covariate columns and no intercept".into()));
    }
    let y_col = leading.len() - 1;
    let mut rows: Vec<Vec<_>> = (0..n_regions).map(|_| Vec::new()).collect();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let region = parse_region(&record, n_regions)?;
        let y: Y = parse_field(&record, y_col, "y")?;
        let time = if time_column { Some(parse_field(&record, 1, "time")?) } else { None };
        let mut x = Vec::with_capacity(covariates.len());
        if intercept {
            x.push(1.0);
        }
        for (idx, name) in header.iter().enumerate().skip(leading.len()) {
            x.push(parse_field(&record, idx, name)?);
        }
        rows[region].push((y, x, time));
    }
    if let Some(empty) = rows.iter().position(Vec::is_empty) {
        return Err(SsipError::InvalidData(format!("region {empty} has no observations")));
    }
    Ok(RawRows { covariates, rows })
}

fn design<Y>(rows: &[(Y, Vec<f64>, Option<i64>)], p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), p, |r, j| rows[r].1[j])
}

/// Reads `region_id,y,x1..xp`. With `intercept`, a leading column of ones
/// named [`INTERCEPT_NAME`] is added to every design.
pub fn read_gaussian_csv<R: Read>(input: R, n_regions: usize, intercept: bool) -> Result<GaussianDataset> {
    let raw = split_by_region::<R, f64>(input, n_regions, intercept, false)?;
    let p = raw.covariates.len();
    let regions = raw
        .rows
        .iter()
        .map(|rows| RegionData::new(design(rows, p), rows.iter().map(|r| r.0).collect()))
        .collect::<Result<_>>()?;
    Ok(GaussianDataset {
        regions,
        covariates: raw.covariates,
    })
}

/// Writes `region_id,y,x1..xp`; `names` labels the written design columns.
/// With `drop_leading`, the first design column (an intercept) is omitted.
pub fn write_gaussian_csv<W: Write>(out: W, regions: &[RegionData], names: &[String], drop_leading: bool) -> Result<()> {
    let skip = usize::from(drop_leading);
    check_names(regions.iter().map(RegionData::p), names, skip)?;
    let mut w = writer(out, &[])?;
    write_row(&mut w, ["region_id", "y"].into_iter().map(String::from).chain(names.iter().cloned()))?;
    for (i, region) in regions.iter().enumerate() {
        for (r, y) in region.y().iter().enumerate() {
            let xs = (skip..region.p()).map(|j| fmt(region.x()[(r, j)]));
            write_row(&mut w, [i.to_string(), fmt(*y)].into_iter().chain(xs))?;
        }
    }
    finish(w)
}

fn check_names(mut widths: impl Iterator<Item = usize>, names: &[String], skip: usize) -> Result<()> {
    if widths.any(|p| p != names.len() + skip) {
        return Err(SsipError::DimensionMismatch(format!("{} column names for the written design", names.len())));
    }
    Ok(())
}

/// Per-region count data. `time_labels` holds the original labels of the
/// time indices when the input had a time column.
#[derive(Debug, Clone, PartialEq)]
pub struct CountDataset {
    pub regions: Vec<NbRegionData>,
    pub covariates: Vec<String>,
    pub time_labels: Option<Vec<i64>>,
}

/// Reads `region_id,time,y,x1..xp`; the `time` column may be absent.
pub fn read_count_csv<R: Read>(mut input: R, n_regions: usize, intercept: bool) -> Result<CountDataset> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let has_time = reader(text.as_bytes()).headers().map_err(csv_error)?.get(1) == Some("time");
    let raw = split_by_region::<_, u64>(text.as_bytes(), n_regions, intercept, has_time)?;
    let p = raw.covariates.len();
    let all_times: Vec<i64> = raw.rows.iter().flatten().filter_map(|r| r.2).collect();
    let (labels, index) = index_times(&all_times);
    let regions = raw
        .rows
        .iter()
        .map(|rows| {
            let time = has_time.then(|| rows.iter().map(|r| index[&r.2.expect("time column present")]).collect());
            NbRegionData::new(design(rows, p), rows.iter().map(|r| r.0).collect(), time)
        })
        .collect::<Result<_>>()?;
    Ok(CountDataset {
        regions,
        covariates: raw.covariates,
        time_labels: has_time.then_some(labels),
    })
}

/// Writes `region_id,time,y,x1..xp`, or `region_id,y,x1..xp` when no region
/// carries time indices. `time_labels` translates indices back to labels.
pub fn write_count_csv<W: Write>(
    out: W,
    regions: &[NbRegionData],
    names: &[String],
    drop_leading: bool,
    time_labels: Option<&[i64]>,
) -> Result<()> {
    let skip = usize::from(drop_leading);
    check_names(regions.iter().map(NbRegionData::p), names, skip)?;
    let has_time = regions.iter().all(|r| r.time().is_some());
    let leading: &[&str] = if has_time { &["region_id", "time", "y"] } else { &["region_id", "y"] };
    let mut w = writer(out, &[])?;
    write_row(&mut w, leading.iter().map(|s| s.to_string()).chain(names.iter().cloned()))?;
    for (i, region) in regions.iter().enumerate() {
        for (r, y) in region.y().iter().enumerate() {
            let mut row = vec![i.to_string()];
            if let Some(times) = region.time() {
                let t = times[r];
                row.push(time_labels.map_or(t as i64, |l| l[t]).to_string());
            }
            row.push(y.to_string());
            row.extend((skip..region.p()).map(|j| fmt(region.x()[(r, j)])));
            write_row(&mut w, row)?;
        }
    }
    finish(w)
}

/// Individual capture histories with their list count and time labels.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptureDataset {
    pub k: usize,
    pub histories: Vec<CaptureHistory>,
    /// Original label of each time index; `[0]` when the input had no time
    /// column.
    pub time_labels: Vec<i64>,
}

/// Reads `region_id,time,pattern`, one row per captured individual. The
/// `time` column may be absent, in which case every record is time 0.
pub fn read_capture_csv<R: Read>(input: R, n_regions: usize) -> Result<CaptureDataset> {
    let mut rdr = reader(input);
    let header = rdr.headers().map_err(csv_error)?.clone();
    let has_time = header.get(1) == Some("time");
    if has_time {
        expect_header(&header, &["region_id", "time", "pattern"])?;
    } else {
        expect_header(&header, &["region_id", "pattern"])?;
    }
    let pattern_col = if has_time { 2 } else { 1 };
    let mut k = None;
    let mut raw = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let region = parse_region(&record, n_regions)?;
        let time: i64 = if has_time { parse_field(&record, 1, "time")? } else { 0 };
        let text = field(&record, pattern_col, "pattern")?;
        let (width, pattern) = parse_pattern(text).map_err(|e| SsipError::Parse {
            line: line_of(&record),
            message: e.to_string(),
        })?;
        if *k.get_or_insert(width) != width {
            return Err(SsipError::Parse {
                line: line_of(&record),
                message: format!("pattern {text:?} differs in width from earlier patterns"),
            });
        }
        raw.push((region, time, pattern));
    }
    let k = k.ok_or_else(|| SsipError::InvalidData("capture file has no records".into()))?;
    let times: Vec<i64> = raw.iter().map(|r| r.1).collect();
    let (time_labels, index) = index_times(&times);
    let histories = raw
        .into_iter()
        .map(|(region, time, pattern)| CaptureHistory {
            region,
            time: index[&time],
            pattern,
        })
        .collect();
    Ok(CaptureDataset {
        k,
        histories,
        time_labels,
    })
}

pub fn write_capture_csv<W: Write>(out: W, k: usize, histories: &[CaptureHistory], time_labels: &[i64]) -> Result<()> {
    let mut w = writer(out, &[])?;
    write_row(&mut w, ["region_id", "time", "pattern"])?;
    for h in histories {
        let label = time_labels.get(h.time).copied().unwrap_or(h.time as i64);
        write_row(&mut w, [h.region.to_string(), label.to_string(), format_pattern(h.pattern, k)])?;
    }
    finish(w)
}

/// One row of the unseen-population estimate file.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRow {
    /// Region index or aggregation-group name.
    pub region: String,
    pub time: i64,
    pub estimate: UnseenEstimate,
    pub sparse: bool,
}

/// Writes `region_id,time,mean,median,lo95,hi95,flag_sparse`.
pub fn write_estimates_csv<W: Write>(out: W, rows: &[EstimateRow], meta: &Metadata) -> Result<()> {
    let mut w = writer(out, meta)?;
    write_row(&mut w, ["region_id", "time", "mean", "median", "lo95", "hi95", "flag_sparse"])?;
    for row in rows {
        let e = &row.estimate;
        write_row(
            &mut w,
            [
                row.region.clone(),
                row.time.to_string(),
                fmt(e.mean),
                fmt(e.median),
                fmt(e.lo95),
                fmt(e.hi95),
                u8::from(row.sparse).to_string(),
            ],
        )?;
    }
    finish(w)
}

/// Reads an estimate file. The plug-in value is not stored and comes back
/// as NaN.
pub fn read_estimates_csv<R: Read>(input: R) -> Result<Vec<EstimateRow>> {
    let mut rdr = reader(input);
    let header = rdr.headers().map_err(csv_error)?.clone();
    expect_header(&header, &["region_id", "time", "mean", "median", "lo95", "hi95", "flag_sparse"])?;
    rdr.records()
        .map(|record| {
            let record = record.map_err(csv_error)?;
            let flag: u8 = parse_field(&record, 6, "flag_sparse")?;
            Ok(EstimateRow {
                region: field(&record, 0, "region_id")?.to_owned(),
                time: parse_field(&record, 1, "time")?,
                estimate: UnseenEstimate {
                    mean: parse_field(&record, 2, "mean")?,
                    median: parse_field(&record, 3, "median")?,
                    lo95: parse_field(&record, 4, "lo95")?,
                    hi95: parse_field(&record, 5, "hi95")?,
                    plug_in: f64::NAN,
                },
                sparse: flag != 0,
            })
        })
        .collect()
}

fn check_covariates(chain: &PosteriorChain, covariates: &[String]) -> Result<()> {
    if covariates.len() != chain.p {
        return Err(SsipError::DimensionMismatch(format!(
            "{} covariate names for a chain with p={}",
            covariates.len(),
            chain.p
        )));
    }
    Ok(())
}

/// Writes `region_id,covariate,inclusion_prob,beta_mean,beta_q025,beta_q975`,
/// one row per region and covariate.
pub fn write_summary_csv<W: Write>(out: W, chain: &PosteriorChain, covariates: &[String], meta: &Metadata) -> Result<()> {
    check_covariates(chain, covariates)?;
    let mut w = writer(out, meta)?;
    write_row(&mut w, ["region_id", "covariate", "inclusion_prob", "beta_mean", "beta_q025", "beta_q975"])?;
    for i in 0..chain.n_regions {
        for (j, name) in covariates.iter().enumerate() {
            let s = chain.beta_summary(i, j);
            write_row(
                &mut w,
                [i.to_string(), name.clone(), fmt(chain.inclusion_prob(i, j)), fmt(s.mean), fmt(s.q025), fmt(s.q975)],
            )?;
        }
    }
    finish(w)
}

/// Writes the region × covariate inclusion-probability matrix with header
/// `region_id,<covariate names>`.
pub fn write_inclusion_csv<W: Write>(out: W, chain: &PosteriorChain, covariates: &[String], meta: &Metadata) -> Result<()> {
    check_covariates(chain, covariates)?;
    let mut w = writer(out, meta)?;
    write_row(&mut w, std::iter::once("region_id".to_owned()).chain(covariates.iter().cloned()))?;
    for i in 0..chain.n_regions {
        let probs = (0..chain.p).map(|j| fmt(chain.inclusion_prob(i, j)));
        write_row(&mut w, std::iter::once(i.to_string()).chain(probs))?;
    }
    finish(w)
}

/// Writes `effect,index,mean,q025,q975` for the CAR intercepts (`alpha`,
/// indexed by region), temporal shifts (`zeta`, indexed by time label) and
/// the spatial dependence `rho`. Effects absent from the model are skipped.
pub fn write_effects_csv<W: Write>(out: W, chain: &PosteriorChain, time_labels: Option<&[i64]>, meta: &Metadata) -> Result<()> {
    let mut w = writer(out, meta)?;
    write_row(&mut w, ["effect", "index", "mean", "q025", "q975"])?;
    let mut emit = |effect: &str, index: String, s: Summary| {
        write_row(&mut w, [effect.to_owned(), index, fmt(s.mean), fmt(s.q025), fmt(s.q975)])
    };
    for i in 0..chain.n_regions {
        if let Some(s) = chain.alpha_summary(i) {
            emit("alpha", i.to_string(), s)?;
        }
    }
    for t in 0..chain.n_times {
        if let Some(s) = chain.zeta_summary(t) {
            let label = time_labels.and_then(|l| l.get(t).copied()).unwrap_or(t as i64);
            emit("zeta", label.to_string(), s)?;
        }
    }
    emit("rho", "0".to_owned(), chain.rho_summary())?;
    finish(w)
}

/// Column names of the chain dump for this chain, in write order.
pub fn chain_columns(chain: &PosteriorChain) -> Vec<String> {
    let (n, p) = (chain.n_regions, chain.p);
    let first = chain.draws().next();
    let mut cols = vec!["chain".to_owned(), "draw".to_owned(), "rho".to_owned()];
    for prefix in ["beta", "gamma", "z"] {
        for i in 0..n {
            cols.extend((0..p).map(|j| format!("{prefix}.{i}.{j}")));
        }
    }
    let Some(d) = first else { return cols };
    let per_region = |name: &'static str, len: usize| (0..len).map(move |i| format!("{name}.{i}"));
    cols.extend(per_region("sigma2", d.sigma2.len()));
    cols.extend(per_region("omega_mean", d.omega_mean.len()));
    cols.extend(per_region("mu", d.mu.len()));
    cols.extend(per_region("tau2", d.tau2.len()));
    cols.extend(per_region("alpha", d.alpha.len()));
    if d.tau_alpha.is_some() {
        cols.push("tau_alpha".into());
    }
    cols.push("level".into());
    cols.extend(per_region("zeta", d.zeta.len()));
    if d.ar_innov_var.is_some() {
        cols.push("ar_innov_var".into());
    }
    cols
}

/// Writes every kept draw, one row per draw. The column order is given by
/// [`chain_columns`].
pub fn write_chain_csv<W: Write>(out: W, chain: &PosteriorChain, meta: &Metadata) -> Result<()> {
    let mut w = writer(out, meta)?;
    write_row(&mut w, chain_columns(chain))?;
    for (c, trace) in chain.chains.iter().enumerate() {
        for (k, d) in trace.draws.iter().enumerate() {
            let mut row = vec![c.to_string(), k.to_string(), fmt(d.rho)];
            row.extend(d.beta.iter().map(|&v| fmt(v)));
            row.extend(d.gamma.iter().map(|&g| u8::from(g).to_string()));
            row.extend(d.z.iter().map(|&v| fmt(v)));
            for group in [&d.sigma2, &d.omega_mean, &d.mu, &d.tau2, &d.alpha] {
                row.extend(group.iter().map(|&v| fmt(v)));
            }
            row.extend(d.tau_alpha.map(fmt));
            row.push(fmt(d.level));
            row.extend(d.zeta.iter().map(|&v| fmt(v)));
            row.extend(d.ar_innov_var.map(fmt));
            write_row(&mut w, row)?;
        }
    }
    finish(w)
}

/// Plot-ready long format `stratum,quantity,value`.
pub fn write_long_csv<W: Write>(out: W, rows: &[(String, String, f64)], meta: &Metadata) -> Result<()> {
    let mut w = writer(out, meta)?;
    write_row(&mut w, ["stratum", "quantity", "value"])?;
    for (stratum, quantity, value) in rows {
        write_row(&mut w, [stratum.clone(), quantity.clone(), fmt(*value)])?;
    }
    finish(w)
}

/// Writes `region_id,covariate,included,beta` for a simulated truth stored
/// region-major with `p` coefficients per region.
pub fn write_coefficient_truth_csv<W: Write>(out: W, beta: &[f64], included: &[bool], p: usize) -> Result<()> {
    if beta.len() != included.len() || p == 0 || beta.len() % p != 0 {
        return Err(SsipError::DimensionMismatch("truth vectors do not form a region × covariate table".into()));
    }
    let mut w = writer(out, &[])?;
    write_row(&mut w, ["region_id", "covariate", "included", "beta"])?;
    for (idx, (b, g)) in beta.iter().zip(included).enumerate() {
        write_row(&mut w, [(idx / p).to_string(), (idx % p).to_string(), u8::from(*g).to_string(), fmt(*b)])?;
    }
    finish(w)
}

/// Writes `region_id,time,unseen` for a simulated capture-recapture truth.
pub fn write_unseen_truth_csv<W: Write>(out: W, unseen: &[u64], time: i64) -> Result<()> {
    let mut w = writer(out, &[])?;
    write_row(&mut w, ["region_id", "time", "unseen"])?;
    for (i, u) in unseen.iter().enumerate() {
        write_row(&mut w, [i.to_string(), time.to_string(), u.to_string()])?;
    }
    finish(w)
}

/// Named region groups in order of first appearance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionGroup {
    pub name: String,
    pub regions: Vec<usize>,
}

/// Reads `region_id,group`. A region may appear in at most one group.
pub fn read_groups_csv<R: Read>(input: R, n_regions: usize) -> Result<Vec<RegionGroup>> {
    let mut rdr = reader(input);
    let header = rdr.headers().map_err(csv_error)?.clone();
    expect_header(&header, &["region_id", "group"])?;
    let mut groups: Vec<RegionGroup> = Vec::new();
    let mut seen = vec![false; n_regions];
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let region = parse_region(&record, n_regions)?;
        if std::mem::replace(&mut seen[region], true) {
            return Err(SsipError::Parse {
                line: line_of(&record),
                message: format!("region {region} assigned to more than one group"),
            });
        }
        let name = field(&record, 1, "group")?;
        match groups.iter_mut().find(|g| g.name == name) {
            Some(g) => g.regions.push(region),
            None => groups.push(RegionGroup {
                name: name.to_owned(),
                regions: vec![region],
            }),
        }
    }
    Ok(groups)
}
