//! `openbox`: command-line driver for the counterfactual estimation pipeline.
//!
//! Each subcommand wraps one pipeline stage with explicit input and output
//! paths; `run` executes a whole job from a TOML config. Exit codes: 0 on
//! success, 1 when a stage fails, 2 for usage or configuration errors.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use openbox_core::auction::simulate_dataset;
use openbox_core::baseline::{compare_estimators, format_comparison, format_end_to_end, ScenarioConfig};
use openbox_core::click::{
    train_click_model, training_impressions, ClickModel, ClickModelSpec, GbtParams,
};
use openbox_core::cube::{format_report, kpi_report, parse_dimensions};
use openbox_core::explore::{DimRange, ModelSpec, RegressionKind};
use openbox_core::job::{
    explore_report, load_cube, load_records, run_job, save_cube, ExploreConfig, JobConfig,
};
use openbox_core::marketplace::{
    generate_logs, generate_marketplace, save_dataset, validate_and_convert, write_records,
    DriftSpec, GeneratorConfig,
};
use openbox_core::policy::{format_grid, parse_grid, with_baseline, PolicyConfig, BASELINE_GRID_ID};

/// Marks an error as a usage or configuration problem (exit code 2).
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn require(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(usage(format!("{what} {} does not exist", path.display())))
    }
}

/// Lift a core error raised while reading configuration into a usage error.
fn config<T>(r: openbox_core::Result<T>) -> Result<T> {
    r.map_err(|e| usage(e.to_string()))
}

#[derive(Parser)]
#[command(name = "openbox", version, about = "Open-box counterfactual estimation for sponsored search")]
struct Cli {
    /// Thread cap for all parallel work (0 = all cores).
    #[arg(long, global = true, env = "GENIE_WORKERS", default_value_t = 0)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic marketplace and logged requests.
    Generate(GenerateArgs),
    /// Validate raw logs and write the convertible records.
    Ingest(IngestArgs),
    /// Train a click model on logged impressions.
    TrainClick(TrainArgs),
    /// Replay logs against a grid and write the KPI cube.
    Simulate(SimulateArgs),
    /// Turn a KPI cube into a delta report.
    Report(ReportArgs),
    /// Recommend new grid points from a report.
    Explore(ExploreArgs),
    /// Compare replay against importance sampling on synthetic intervals.
    Compare(CompareArgs),
    /// Run a whole job from a TOML config.
    Run(RunArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    requests: usize,
    /// Marketplace generator config (TOML); defaults when omitted.
    #[arg(long)]
    market: Option<PathBuf>,
    /// Logging policy knob, `name=value`; repeatable.
    #[arg(long = "policy", value_name = "KNOB=VALUE")]
    policy: Vec<String>,
    /// Record index where the drifted policy takes over.
    #[arg(long, requires = "drift")]
    drift_index: Option<usize>,
    /// Drifted policy knob, `name=value`; repeatable.
    #[arg(long = "drift", value_name = "KNOB=VALUE", requires = "drift_index")]
    drift: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Where to write conversion statistics (JSON).
    #[arg(long)]
    stats: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelKind {
    Probit,
    Gbt,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    logs: PathBuf,
    #[arg(long, value_enum, default_value = "probit")]
    model: ModelKind,
    /// Full model spec (TOML); overrides `--model`.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    logs: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    grid: PathBuf,
    /// Cube dimensions, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "grid_point_id,query_class")]
    dims: Vec<String>,
    #[arg(long)]
    out: PathBuf,
    /// Grid as actually simulated (baseline included); defaults next to `--out`.
    #[arg(long)]
    grid_out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    cube: PathBuf,
    #[arg(long)]
    grid: PathBuf,
    #[arg(long, default_value_t = BASELINE_GRID_ID)]
    baseline: u32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Linear,
    Ridge,
}

#[derive(Args)]
struct ExploreArgs {
    #[arg(long)]
    from_report: PathBuf,
    /// `max:<metric>` or `min:<metric>`.
    #[arg(long)]
    objective: String,
    /// e.g. `cy>=-0.01` or `|mliy|<=0.02`; repeatable.
    #[arg(long = "constraint")]
    constraints: Vec<String>,
    /// `knob=min:max`; repeatable, one per explored dimension.
    #[arg(long = "range", required = true)]
    ranges: Vec<String>,
    #[arg(long, default_value_t = 20)]
    batches: usize,
    #[arg(long, default_value_t = 5000)]
    population: usize,
    #[arg(long, default_value_t = 5)]
    topk: usize,
    #[arg(long, default_value_t = 2)]
    degree: u32,
    #[arg(long, value_enum, default_value = "ridge")]
    kind: Kind,
    #[arg(long, default_value_t = 1e-3)]
    lambda: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// Scenario config (TOML); defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    seeds: Vec<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Single-tuning summary table.
    #[arg(long)]
    end_to_end: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
    /// Overrides the config's root seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

fn seed_or_draw(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand::random::<u64>();
        eprintln!("seed: {s}");
        s
    })
}

fn parse_knobs(items: &[String]) -> Result<PolicyConfig> {
    let mut p = PolicyConfig::default();
    for kv in items {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| usage(format!("expected KNOB=VALUE, got `{kv}`")))?;
        let v: f64 = v.parse().map_err(|_| usage(format!("bad value in `{kv}`")))?;
        config(p.set(k, v))?;
    }
    Ok(p)
}

fn parse_range(s: &str) -> Result<DimRange> {
    let bad = || usage(format!("expected knob=min:max, got `{s}`"));
    let (knob, r) = s.split_once('=').ok_or_else(bad)?;
    let (a, b) = r.split_once(':').ok_or_else(bad)?;
    Ok(DimRange {
        knob: knob.to_string(),
        min: a.parse().map_err(|_| bad())?,
        max: b.parse().map_err(|_| bad())?,
    })
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    require(path, "config")?;
    let text = fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn generate(a: GenerateArgs) -> Result<()> {
    let market_cfg: GeneratorConfig = match &a.market {
        Some(p) => read_toml(p)?,
        None => GeneratorConfig::default(),
    };
    let policy = parse_knobs(&a.policy)?;
    let drift = match a.drift_index {
        Some(i) => Some(DriftSpec {
            drift_index: i,
            drifted_policy: parse_knobs(&a.drift)?,
        }),
        None => None,
    };
    let seed = seed_or_draw(a.seed);
    let market = config(generate_marketplace(&market_cfg, seed))?;
    let ds = config(generate_logs(&market, &policy, a.requests, drift.as_ref(), seed))?;
    save_dataset(&ds, &a.out)?;
    eprintln!("wrote {} records to {}", ds.records.len(), a.out.display());
    Ok(())
}

fn ingest(a: IngestArgs) -> Result<()> {
    require(&a.input, "input log")?;
    let (records, stats) = validate_and_convert(BufReader::new(fs::File::open(&a.input)?))?;
    write_records(&records, std::io::BufWriter::new(fs::File::create(&a.out)?))?;
    if let Some(p) = &a.stats {
        fs::write(p, serde_json::to_string_pretty(&stats)?)?;
    }
    eprintln!(
        "converted {}/{} lines (conversion success {:.4})",
        stats.converted, stats.total, stats.conversion_success
    );
    for r in stats.rejected.iter().take(10) {
        eprintln!("  line {}: {}", r.line, r.reason);
    }
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    require(&a.logs, "log file")?;
    let spec: ClickModelSpec = match (&a.spec, a.model) {
        (Some(p), _) => read_toml(p)?,
        (None, ModelKind::Probit) => ClickModelSpec::default(),
        (None, ModelKind::Gbt) => ClickModelSpec::Gbt {
            params: GbtParams::default(),
        },
    };
    let records = load_records(&a.logs)?;
    let model = train_click_model(&training_impressions(&records), &spec)?;
    model.save(&a.out)?;
    Ok(())
}

fn simulate(a: SimulateArgs, workers: usize) -> Result<()> {
    require(&a.logs, "log file")?;
    require(&a.model, "model file")?;
    require(&a.grid, "grid file")?;
    let dims = config(parse_dimensions(&a.dims))?;
    let grid = config(parse_grid(&fs::read_to_string(&a.grid)?).and_then(|g| with_baseline(&g)))?;
    let model = ClickModel::load(&a.model)?;
    let mut records = load_records(&a.logs)?;
    let out = simulate_dataset(&mut records, &grid, &model, &dims, workers)?;
    for e in out.errors.iter().take(10) {
        eprintln!("request {} grid {}: {}", e.request_id, e.grid_id, e.message);
    }
    save_cube(&out.cube, &a.out)?;
    let grid_out = a.grid_out.unwrap_or_else(|| a.out.with_extension("grid.txt"));
    fs::write(grid_out, format_grid(&grid))?;
    if !out.errors.is_empty() {
        bail!("{} grid point evaluations failed", out.errors.len());
    }
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    require(&a.cube, "cube file")?;
    require(&a.grid, "grid file")?;
    let cube = load_cube(&a.cube)?;
    let grid = config(parse_grid(&fs::read_to_string(&a.grid)?))?;
    let report = kpi_report(&cube, a.baseline)?;
    fs::write(&a.out, format_report(&report, &grid))?;
    Ok(())
}

fn explore(a: ExploreArgs) -> Result<()> {
    require(&a.from_report, "report")?;
    let cfg = ExploreConfig {
        objective: a.objective,
        constraints: a.constraints,
        ranges: a.ranges.iter().map(|r| parse_range(r)).collect::<Result<_>>()?,
        batches: a.batches,
        population: a.population,
        topk: a.topk,
        model: ModelSpec {
            kind: match a.kind {
                Kind::Linear => RegressionKind::Linear,
                Kind::Ridge => RegressionKind::Ridge,
            },
            degree: a.degree,
            lambda: a.lambda,
        },
    };
    config(cfg.params(0).and_then(|p| p.validate()))?;
    let seed = seed_or_draw(a.seed);
    let (grid, output) = explore_report(&fs::read_to_string(&a.from_report)?, &cfg, seed)?;
    fs::write(&a.out, format_grid(&grid))?;
    for c in &output.result.top {
        eprintln!("{:?} -> {:?}", c.setting, c.values);
    }
    Ok(())
}

fn compare(a: CompareArgs) -> Result<()> {
    let cfg: ScenarioConfig = match &a.config {
        Some(p) => read_toml(p)?,
        None => ScenarioConfig::default(),
    };
    config(cfg.validate())?;
    let table = compare_estimators(&cfg, &a.seeds)?;
    let text = format_comparison(&table);
    fs::write(&a.out, &text)?;
    if let Some(p) = &a.end_to_end {
        fs::write(p, format_end_to_end(&table))?;
    }
    print!("{text}");
    Ok(())
}

fn run(a: RunArgs, workers: usize) -> Result<bool> {
    require(&a.config, "job config")?;
    let mut cfg = config(JobConfig::load(&a.config))?;
    if a.seed.is_some() {
        cfg.seed = a.seed;
    }
    if cfg.seed.is_none() {
        cfg.seed = Some(seed_or_draw(None));
    }
    if let Some(d) = a.output_dir {
        cfg.output_dir = d;
    }
    if workers > 0 {
        cfg.workers = workers;
    }
    let summary = config(run_job(&cfg))?;
    for s in &summary.stages {
        eprintln!("{:<12} {:>8.2}s {}", s.stage.name(), s.seconds, if s.ok { "ok" } else { "FAILED" });
    }
    if let Some(e) = &summary.error {
        eprintln!("error: {e}");
    }
    Ok(summary.succeeded())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.workers > 0 {
        // a second initialization cannot happen here; ignore the impossible error
        let _ = rayon_global(cli.workers);
    }
    let result = match cli.command {
        Command::Generate(a) => generate(a).map(|_| true),
        Command::Ingest(a) => ingest(a).map(|_| true),
        Command::TrainClick(a) => train(a).map(|_| true),
        Command::Simulate(a) => simulate(a, cli.workers).map(|_| true),
        Command::Report(a) => report(a).map(|_| true),
        Command::Explore(a) => explore(a).map(|_| true),
        Command::Compare(a) => compare(a).map(|_| true),
        Command::Run(a) => run(a, cli.workers),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn rayon_global(workers: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .context("configuring the thread pool")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn knob_arguments() {
        let p = parse_knobs(&["reserve_score=0.1".into(), "bid_multiplier=2".into()]).unwrap();
        assert_eq!(p.get("reserve_score"), 0.1);
        assert_eq!(p.get("bid_multiplier"), 2.0);
        for bad in ["reserve_score", "reserve_score=x", "warp=1", "reserve_score=-1"] {
            let e = parse_knobs(&[bad.into()]).unwrap_err();
            assert!(e.downcast_ref::<UsageError>().is_some(), "{bad}");
        }
    }

    #[test]
    fn range_arguments() {
        let r = parse_range("reserve_score=0:0.25").unwrap();
        assert_eq!((r.knob.as_str(), r.min, r.max), ("reserve_score", 0.0, 0.25));
        assert!(parse_range("reserve_score=0").is_err());
        assert!(parse_range("0:1").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
