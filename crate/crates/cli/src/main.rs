//! `ssip`: batch front end for spatial spike-and-slab fits, capture-recapture
//! estimation and simulation replication.

mod config;
mod crc;
mod error;
mod fit;
mod graph_check;
mod output;
mod replicate;

use clap::{Args, Parser, Subcommand};
use config::{EngineKind, RhoMode, SeedList, Settings, Study};
use error::Result;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "ssip", version, about = "Spatially shared inclusion priors for areal regression and capture-recapture")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the Gaussian or negative-binomial engine to regional data.
    Fit(FitArgs),
    /// Estimate unseen population counts from capture histories.
    Crc(CrcArgs),
    /// Replicate a simulation study across seeds and compare methods.
    Replicate(ReplicateArgs),
    /// Validate a graph specification.
    GraphCheck(GraphArgs),
}

#[derive(Args)]
struct Common {
    /// TOML configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default `ssip-out`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GraphArgs {
    /// Rook-adjacency grid, e.g. `3x3`.
    #[arg(long)]
    grid: Option<String>,
    /// Edge-list file, one `i k` pair per line.
    #[arg(long)]
    edges: Option<PathBuf>,
    /// Number of regions when the edge list does not mention them all.
    #[arg(long)]
    regions: Option<usize>,
    #[arg(long, hide = true)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    chains: Option<usize>,
}

#[derive(Args)]
struct PriorArgs {
    /// Spatial dependence of the inclusion field.
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long, value_enum)]
    rho_update: Option<RhoMode>,
    /// Proposal scale of the Metropolis update of rho.
    #[arg(long)]
    rho_step: Option<f64>,
    #[arg(long)]
    mu0: Option<f64>,
    #[arg(long)]
    s0: Option<f64>,
    #[arg(long)]
    a_t: Option<f64>,
    #[arg(long)]
    b_t: Option<f64>,
}

#[derive(Args)]
struct CountArgs {
    /// Negative-binomial dispersion.
    #[arg(long)]
    h: Option<f64>,
    /// CAR random intercepts per region.
    #[arg(long, num_args = 0..=1, default_missing_value = "true", require_equals = true)]
    car_intercept: Option<bool>,
    /// AR(1) time effects (needs a `time` column).
    #[arg(long, num_args = 0..=1, default_missing_value = "true", require_equals = true)]
    temporal: Option<bool>,
    #[arg(long)]
    ar_coef: Option<f64>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    engine: Option<EngineKind>,
    /// Regression data CSV.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    edges: Option<PathBuf>,
    #[arg(long)]
    regions: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    prior: PriorArgs,
    #[command(flatten)]
    count: CountArgs,
    /// Do not add an intercept column.
    #[arg(long)]
    no_intercept: bool,
    /// One noise variance shared by all regions (Gaussian engine).
    #[arg(long, num_args = 0..=1, default_missing_value = "true", require_equals = true)]
    pooled_sigma: Option<bool>,
    /// Noise-variance prior shape (Gaussian engine).
    #[arg(long)]
    a: Option<f64>,
    /// Noise-variance prior rate (Gaussian engine).
    #[arg(long)]
    b: Option<f64>,
    /// Also write every kept draw to chain.csv.
    #[arg(long, num_args = 0..=1, default_missing_value = "true", require_equals = true)]
    chain_dump: Option<bool>,
}

#[derive(Args)]
struct CrcArgs {
    #[command(flatten)]
    common: Common,
    /// Capture-history CSV, one row per captured individual.
    #[arg(long)]
    capture: Option<PathBuf>,
    /// Region-to-group CSV for aggregated estimates.
    #[arg(long)]
    groups: Option<PathBuf>,
    /// Expected number of lists; checked against the pattern width.
    #[arg(long)]
    lists: Option<usize>,
    /// Highest interaction order in the log-linear design (default K-1).
    #[arg(long)]
    max_order: Option<usize>,
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    edges: Option<PathBuf>,
    #[arg(long)]
    regions: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    prior: PriorArgs,
    #[command(flatten)]
    count: CountArgs,
    #[arg(long, num_args = 0..=1, default_missing_value = "true", require_equals = true)]
    chain_dump: Option<bool>,
}

#[derive(Args)]
struct ReplicateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    study: Option<Study>,
    /// Seeds as `START..END` (end exclusive) or a comma list.
    #[arg(long)]
    seeds: Option<SeedList>,
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    prior: PriorArgs,
    /// Observations per region (Gaussian study).
    #[arg(long)]
    obs_per_region: Option<usize>,
    /// Noise variance (Gaussian study).
    #[arg(long)]
    noise_var: Option<f64>,
    /// Point-process intensity scale (capture-recapture study).
    #[arg(long)]
    intensity_scale: Option<f64>,
    /// Cells per side of the study grid (capture-recapture study).
    #[arg(long)]
    grid_side: Option<usize>,
    #[arg(long)]
    max_order: Option<usize>,
    /// Negative-binomial dispersion (capture-recapture study).
    #[arg(long)]
    h: Option<f64>,
}

impl RunArgs {
    fn apply(&self, s: Settings) -> Settings {
        Settings {
            iterations: self.iterations,
            burn_in: self.burn_in,
            thin: self.thin,
            chains: self.chains,
            ..s
        }
    }
}

impl PriorArgs {
    fn apply(&self, s: Settings) -> Settings {
        Settings {
            rho: self.rho,
            rho_update: self.rho_update,
            rho_step: self.rho_step,
            mu0: self.mu0,
            s0: self.s0,
            a_t: self.a_t,
            b_t: self.b_t,
            ..s
        }
    }
}

impl CountArgs {
    fn apply(&self, s: Settings) -> Settings {
        Settings {
            h: self.h,
            car_intercept: self.car_intercept,
            temporal: self.temporal,
            ar_coef: self.ar_coef,
            ..s
        }
    }
}

/// Flags layered over the optional configuration file.
fn layered(config: &Option<PathBuf>, flags: Settings) -> Result<Settings> {
    let file = match config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    Ok(flags.over(file))
}

fn settings(command: &Command) -> Result<Settings> {
    match command {
        Command::Fit(a) => {
            let flags = Settings {
                out: a.common.out.clone(),
                engine: a.engine,
                data: a.data.clone(),
                grid: a.grid.clone(),
                edges: a.edges.clone(),
                regions: a.regions,
                seed: a.seed,
                intercept: a.no_intercept.then_some(false),
                pooled_sigma: a.pooled_sigma,
                a: a.a,
                b: a.b,
                chain_dump: a.chain_dump,
                ..Settings::default()
            };
            let flags = a.count.apply(a.prior.apply(a.run.apply(flags)));
            layered(&a.common.config, flags)
        }
        Command::Crc(a) => {
            let flags = Settings {
                out: a.common.out.clone(),
                capture: a.capture.clone(),
                groups: a.groups.clone(),
                lists: a.lists,
                max_order: a.max_order,
                grid: a.grid.clone(),
                edges: a.edges.clone(),
                regions: a.regions,
                seed: a.seed,
                chain_dump: a.chain_dump,
                ..Settings::default()
            };
            let flags = a.count.apply(a.prior.apply(a.run.apply(flags)));
            layered(&a.common.config, flags)
        }
        Command::Replicate(a) => {
            let flags = Settings {
                out: a.common.out.clone(),
                study: a.study,
                seeds: a.seeds.clone().map(|s| s.0),
                obs_per_region: a.obs_per_region,
                noise_var: a.noise_var,
                intensity_scale: a.intensity_scale,
                grid_side: a.grid_side,
                max_order: a.max_order,
                h: a.h,
                ..Settings::default()
            };
            let flags = a.prior.apply(a.run.apply(flags));
            layered(&a.common.config, flags)
        }
        Command::GraphCheck(a) => {
            let flags = Settings {
                grid: a.grid.clone(),
                edges: a.edges.clone(),
                regions: a.regions,
                ..Settings::default()
            };
            layered(&a.config, flags)
        }
    }
}

fn execute(command: &Command) -> Result<output::Report> {
    let s = settings(command)?;
    match command {
        Command::Fit(_) => fit::run(s),
        Command::Crc(_) => crc::run(s),
        Command::Replicate(_) => replicate::run(s),
        Command::GraphCheck(_) => graph_check::run(s),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(report) => {
            for note in &report.notes {
                eprintln!("{note}");
            }
            let record = serde_json::json!({ "status": "ok", "report": report });
            println!("{record}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("{}", err.record());
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
