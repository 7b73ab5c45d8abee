//! Config-driven pipeline: generate → ingest → train-click → simulate →
//! report → explore → compare.
//!
//! Every stage reads its inputs from files written by earlier stages, so any
//! stage can be re-run alone. All randomness derives from the root seed via
//! named substreams. Artifacts are hashed into the summary; the summary
//! itself carries timings and is not an artifact.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::auction::{replay_check, simulate_dataset, AuctionData};
use crate::baseline::{compare_estimators, format_comparison, format_end_to_end, ScenarioConfig};
use crate::click::{train_click_model, training_impressions, ClickModel, ClickModelSpec};
use crate::cube::{format_report, kpi_report, parse_dimensions, parse_report, DataCube, Dimension};
use crate::error::{Error, Result};
use crate::explore::{
    optimize, recommendations_grid, rmse_cv, training_set, DimRange, ExploreParams, ModelSpec,
    Objective, DEFAULT_BATCHES, DEFAULT_FOLDS, DEFAULT_POPULATION,
};
use crate::marketplace::{
    generate_logs, generate_marketplace, save_dataset, validate_and_convert, write_records,
    DriftSpec, GeneratorConfig,
};
use crate::policy::{format_grid, parse_grid, with_baseline, GridPoint, PolicyConfig, BASELINE_GRID_ID};
use crate::rng::{derive_seed, rng_for};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Generate,
    Ingest,
    TrainClick,
    Simulate,
    Report,
    Explore,
    Compare,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Generate,
        Stage::Ingest,
        Stage::TrainClick,
        Stage::Simulate,
        Stage::Report,
        Stage::Explore,
        Stage::Compare,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Generate => "generate",
            Stage::Ingest => "ingest",
            Stage::TrainClick => "train-click",
            Stage::Simulate => "simulate",
            Stage::Report => "report",
            Stage::Explore => "explore",
            Stage::Compare => "compare",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub requests: usize,
    pub market: GeneratorConfig,
    pub policy: PolicyConfig,
    pub drift: Option<DriftSpec>,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            requests: 1000,
            market: GeneratorConfig::default(),
            policy: PolicyConfig::default(),
            drift: None,
        }
    }
}

/// Which requests enter training and simulation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficFilter {
    /// Keep only these query classes; empty keeps all.
    pub query_classes: Vec<u32>,
    /// Half-open range of record positions `[start, end)`.
    pub record_range: Option<(usize, usize)>,
}

impl TrafficFilter {
    pub fn apply(&self, records: Vec<AuctionData>) -> Vec<AuctionData> {
        records
            .into_iter()
            .enumerate()
            .filter(|(i, r)| {
                self.record_range.is_none_or(|(a, b)| *i >= a && *i < b)
                    && (self.query_classes.is_empty() || self.query_classes.contains(&r.query_class))
            })
            .map(|(_, r)| r)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExploreConfig {
    /// `max:<metric>` or `min:<metric>`.
    pub objective: String,
    #[serde(default)]
    pub constraints: Vec<String>,
    pub ranges: Vec<DimRange>,
    #[serde(default = "default_batches")]
    pub batches: usize,
    #[serde(default = "default_population")]
    pub population: usize,
    #[serde(default = "default_topk")]
    pub topk: usize,
    #[serde(default)]
    pub model: ModelSpec,
}

fn default_batches() -> usize {
    DEFAULT_BATCHES
}
fn default_population() -> usize {
    DEFAULT_POPULATION
}
fn default_topk() -> usize {
    5
}

impl ExploreConfig {
    pub fn params(&self, seed: u64) -> Result<ExploreParams> {
        Ok(ExploreParams {
            batches: self.batches,
            population: self.population,
            solution_size: self.topk,
            objective: Objective::parse(&self.objective, &self.constraints)?,
            ranges: self.ranges.clone(),
            seed,
        })
    }
}

/// Where the simulated grid comes from; exactly one source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum GridSource {
    /// Grid lines written in the config.
    Inline { points: Vec<String> },
    /// A grid file.
    File { path: PathBuf },
    /// Recommendations of the explorer run on an earlier report.
    Explorer {
        report: PathBuf,
        #[serde(flatten)]
        explore: ExploreConfig,
    },
    /// `count` points drawn uniformly within `ranges`.
    Sampled { count: usize, ranges: Vec<DimRange> },
}

impl Default for GridSource {
    fn default() -> Self {
        GridSource::Inline { points: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompareConfig {
    pub seeds: Vec<u64>,
    #[serde(flatten)]
    pub scenario: ScenarioConfig,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            seeds: vec![1, 2, 3],
            scenario: ScenarioConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JobConfig {
    /// Root seed; every stage derives its own stream from it. Unset means 0.
    pub seed: Option<u64>,
    /// Thread cap for every pool; 0 uses all cores.
    pub workers: usize,
    pub output_dir: PathBuf,
    /// Stages to run; always executed in pipeline order.
    pub stages: Vec<Stage>,
    /// Raw log file to ingest instead of the generated one.
    pub logs: Option<PathBuf>,
    pub generate: GenerateConfig,
    pub filter: TrafficFilter,
    pub click_model: ClickModelSpec,
    pub grid: GridSource,
    pub dimensions: Vec<String>,
    pub explore: Option<ExploreConfig>,
    pub compare: CompareConfig,
}

impl Default for JobConfig {
    fn default() -> Self {
        Self {
            seed: None,
            workers: 0,
            output_dir: PathBuf::from("out"),
            stages: vec![
                Stage::Generate,
                Stage::Ingest,
                Stage::TrainClick,
                Stage::Simulate,
                Stage::Report,
            ],
            logs: None,
            generate: GenerateConfig::default(),
            filter: TrafficFilter::default(),
            click_model: ClickModelSpec::default(),
            grid: GridSource::default(),
            dimensions: vec!["grid_point_id".into(), "query_class".into()],
            explore: None,
            compare: CompareConfig::default(),
        }
    }
}

/// Artifact file names inside the output directory.
pub mod artifact {
    pub const RAW_LOGS: &str = "logs.jsonl";
    pub const LOGS: &str = "ingested.jsonl";
    pub const CONVERSION: &str = "conversion.json";
    pub const MODEL: &str = "model.json";
    pub const GRID: &str = "grid.txt";
    pub const CUBE: &str = "cube.json";
    pub const SIM_ERRORS: &str = "simulation_errors.json";
    pub const REPORT: &str = "report.tsv";
    pub const RECOMMENDED: &str = "recommended_grid.txt";
    pub const EXPLORE: &str = "explore.json";
    pub const COMPARISON: &str = "comparison.tsv";
    pub const END_TO_END: &str = "end_to_end.tsv";
    pub const COMPARISON_DETAIL: &str = "comparison.json";
    pub const SUMMARY: &str = "summary.json";
}

impl JobConfig {
    /// Parse a TOML config; relative paths resolve against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: JobConfig = toml::from_str(text)?;
        cfg.resolve_paths(base_dir);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        if let Some(l) = &mut self.logs {
            fix(l);
        }
        match &mut self.grid {
            GridSource::File { path } => fix(path),
            GridSource::Explorer { report, .. } => fix(report),
            _ => {}
        }
    }

    pub fn root_seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }

    fn selected(&self, s: Stage) -> bool {
        self.stages.contains(&s)
    }

    /// Input file of `stage` that no earlier selected stage produces.
    fn check_input(&self, stage: Stage, producer: Stage, path: &Path) -> Result<()> {
        if self.selected(stage) && !self.selected(producer) && !path.exists() {
            return Err(Error::Config(format!(
                "stage `{stage}` needs {} (from stage `{producer}`), which does not exist",
                path.display()
            )));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::Config("no stages selected".into()));
        }
        if self.selected(Stage::Generate) {
            if self.logs.is_some() {
                return Err(Error::Config("`logs` and the generate stage are mutually exclusive".into()));
            }
            if self.generate.requests == 0 {
                return Err(Error::Config("generate.requests must be at least 1".into()));
            }
            self.generate.market.validate()?;
            self.generate.policy.validate()?;
        }
        if let Some(l) = &self.logs {
            if !l.exists() {
                return Err(Error::Config(format!("log file {} does not exist", l.display())));
            }
        } else {
            self.check_input(Stage::Ingest, Stage::Generate, &self.out(artifact::RAW_LOGS))?;
        }
        self.check_input(Stage::TrainClick, Stage::Ingest, &self.out(artifact::LOGS))?;
        self.check_input(Stage::Simulate, Stage::Ingest, &self.out(artifact::LOGS))?;
        self.check_input(Stage::Simulate, Stage::TrainClick, &self.out(artifact::MODEL))?;
        self.check_input(Stage::Report, Stage::Simulate, &self.out(artifact::CUBE))?;
        self.check_input(Stage::Report, Stage::Simulate, &self.out(artifact::GRID))?;
        self.check_input(Stage::Explore, Stage::Report, &self.out(artifact::REPORT))?;
        if self.selected(Stage::Simulate) {
            match &self.grid {
                GridSource::File { path } if !path.exists() => {
                    return Err(Error::Config(format!("grid file {} does not exist", path.display())))
                }
                GridSource::Explorer { report, .. } if !report.exists() => {
                    return Err(Error::Config(format!("report {} does not exist", report.display())))
                }
                _ => {}
            }
            let dims = parse_dimensions(&self.dimensions)?;
            if !dims.contains(&Dimension::GridPointId) {
                return Err(Error::Config("cube dimensions must include grid_point_id".into()));
            }
        }
        if self.selected(Stage::Explore) && self.explore.is_none() {
            return Err(Error::Config("explore stage selected without an [explore] section".into()));
        }
        if self.selected(Stage::Compare) {
            self.compare.scenario.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: Stage,
    pub seconds: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactInfo {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct JobSummary {
    pub seed: u64,
    pub conversion_success: Option<f64>,
    pub simulation_accuracy: Option<f64>,
    pub records: Option<usize>,
    pub grid_points: Option<usize>,
    pub simulation_errors: Option<usize>,
    pub stages: Vec<StageTiming>,
    pub artifacts: BTreeMap<String, ArtifactInfo>,
    pub failed_stage: Option<Stage>,
    pub error: Option<String>,
}

impl JobSummary {
    pub fn succeeded(&self) -> bool {
        self.failed_stage.is_none()
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

pub fn save_cube(cube: &DataCube, path: &Path) -> Result<()> {
    write_json(path, cube)
}

pub fn load_cube(path: &Path) -> Result<DataCube> {
    read_json(path)
}

pub fn load_records(path: &Path) -> Result<Vec<AuctionData>> {
    let (records, stats) = validate_and_convert(BufReader::new(fs::File::open(path)?))?;
    if !stats.rejected.is_empty() {
        return Err(Error::Schema(format!(
            "{} has {} invalid lines (first at line {}: {})",
            path.display(),
            stats.rejected.len(),
            stats.rejected[0].line,
            stats.rejected[0].reason
        )));
    }
    Ok(records)
}

/// `count` grid points uniform within `ranges`, ids from 1.
pub fn sampled_grid(count: usize, ranges: &[DimRange], seed: u64) -> Result<Vec<GridPoint>> {
    let mut rng = rng_for(seed, "sampled-grid");
    (1..=count as u32)
        .map(|id| {
            let setting: Vec<(String, f64)> = ranges
                .iter()
                .map(|r| {
                    let v = if r.min < r.max { rng.random_range(r.min..=r.max) } else { r.min };
                    (r.knob.clone(), v)
                })
                .collect();
            GridPoint::new(id, setting)
        })
        .collect()
}

/// Recommend settings from a report: fits surrogates on its total rows,
/// runs the optimizer and returns the recommended grid plus diagnostics.
pub fn explore_report(
    report_text: &str,
    cfg: &ExploreConfig,
    seed: u64,
) -> Result<(Vec<GridPoint>, ExploreOutput)> {
    let rows = parse_report(report_text)?;
    let dims: Vec<String> = cfg.ranges.iter().map(|r| r.knob.clone()).collect();
    let (x, dy) = training_set(&rows, &dims);
    if x.is_empty() {
        return Err(Error::Config("report has no rows setting every explored knob".into()));
    }
    let params = cfg.params(seed)?;
    let mut cv_rmse = BTreeMap::new();
    if x.len() >= DEFAULT_FOLDS * 2 {
        for m in params.objective.metrics() {
            if let Some(y) = dy.get(&m) {
                if let Ok(r) = rmse_cv(&x, y, DEFAULT_FOLDS, &cfg.model, seed) {
                    cv_rmse.insert(m, r);
                }
            }
        }
    }
    let result = optimize(&x, &dy, &params, &cfg.model)?;
    let first_id = rows.iter().map(|r| r.grid_id).max().unwrap_or(0) + 1;
    let grid = recommendations_grid(&result, first_id)?;
    Ok((
        grid,
        ExploreOutput {
            training_points: x.len(),
            cv_rmse,
            result,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExploreOutput {
    pub training_points: usize,
    pub cv_rmse: BTreeMap<String, f64>,
    pub result: crate::explore::OptimizeResult,
}

struct Runner<'a> {
    cfg: &'a JobConfig,
    summary: JobSummary,
}

impl Runner<'_> {
    fn record(&mut self, name: &str) -> Result<()> {
        let path = self.cfg.out(name);
        let sha256 = sha256_file(&path)?;
        self.summary
            .artifacts
            .insert(name.to_string(), ArtifactInfo { path, sha256 });
        Ok(())
    }

    fn seed(&self, stream: &str) -> u64 {
        derive_seed(self.cfg.root_seed(), stream)
    }

    fn run_stage(&mut self, stage: Stage) -> Result<()> {
        let cfg = self.cfg;
        match stage {
            Stage::Generate => {
                let market = generate_marketplace(&cfg.generate.market, self.seed("market"))?;
                let ds = generate_logs(
                    &market,
                    &cfg.generate.policy,
                    cfg.generate.requests,
                    cfg.generate.drift.as_ref(),
                    self.seed("logs"),
                )?;
                save_dataset(&ds, &cfg.out(artifact::RAW_LOGS))?;
                self.record(artifact::RAW_LOGS)?;
            }
            Stage::Ingest => {
                let src = cfg.logs.clone().unwrap_or_else(|| cfg.out(artifact::RAW_LOGS));
                let (records, stats) = validate_and_convert(BufReader::new(fs::File::open(&src)?))?;
                let records = cfg.filter.apply(records);
                self.summary.conversion_success = Some(stats.conversion_success);
                self.summary.records = Some(records.len());
                write_json(&cfg.out(artifact::CONVERSION), &stats)?;
                write_records(&records, std::io::BufWriter::new(fs::File::create(cfg.out(artifact::LOGS))?))?;
                self.record(artifact::CONVERSION)?;
                self.record(artifact::LOGS)?;
            }
            Stage::TrainClick => {
                let records = load_records(&cfg.out(artifact::LOGS))?;
                let model = train_click_model(&training_impressions(&records), &cfg.click_model)?;
                model.save(&cfg.out(artifact::MODEL))?;
                self.record(artifact::MODEL)?;
            }
            Stage::Simulate => {
                let mut records = load_records(&cfg.out(artifact::LOGS))?;
                self.summary.simulation_accuracy = Some(replay_check(&records).accuracy);
                self.summary.records = Some(records.len());
                let model = ClickModel::load(&cfg.out(artifact::MODEL))?;
                let grid = self.resolve_grid()?;
                let grid = with_baseline(&grid)?;
                self.summary.grid_points = Some(grid.len());
                let dims = parse_dimensions(&cfg.dimensions)?;
                let out = simulate_dataset(&mut records, &grid, &model, &dims, cfg.workers)?;
                self.summary.simulation_errors = Some(out.errors.len());
                fs::write(cfg.out(artifact::GRID), format_grid(&grid))?;
                save_cube(&out.cube, &cfg.out(artifact::CUBE))?;
                write_json(&cfg.out(artifact::SIM_ERRORS), &out.errors)?;
                for a in [artifact::GRID, artifact::CUBE, artifact::SIM_ERRORS] {
                    self.record(a)?;
                }
            }
            Stage::Report => {
                let cube = load_cube(&cfg.out(artifact::CUBE))?;
                let grid = parse_grid(&fs::read_to_string(cfg.out(artifact::GRID))?)?;
                let report = kpi_report(&cube, BASELINE_GRID_ID)?;
                fs::write(cfg.out(artifact::REPORT), format_report(&report, &grid))?;
                self.record(artifact::REPORT)?;
            }
            Stage::Explore => {
                let ecfg = cfg.explore.as_ref().expect("validated");
                let text = fs::read_to_string(cfg.out(artifact::REPORT))?;
                let (grid, output) = explore_report(&text, ecfg, self.seed("explore"))?;
                fs::write(cfg.out(artifact::RECOMMENDED), format_grid(&grid))?;
                write_json(&cfg.out(artifact::EXPLORE), &output)?;
                self.record(artifact::RECOMMENDED)?;
                self.record(artifact::EXPLORE)?;
            }
            Stage::Compare => {
                let seeds: Vec<u64> = cfg
                    .compare
                    .seeds
                    .iter()
                    .map(|s| derive_seed(self.seed("compare"), &s.to_string()))
                    .collect();
                let table = compare_estimators(&cfg.compare.scenario, &seeds)?;
                fs::write(cfg.out(artifact::COMPARISON), format_comparison(&table))?;
                fs::write(cfg.out(artifact::END_TO_END), format_end_to_end(&table))?;
                write_json(&cfg.out(artifact::COMPARISON_DETAIL), &table)?;
                for a in [artifact::COMPARISON, artifact::END_TO_END, artifact::COMPARISON_DETAIL] {
                    self.record(a)?;
                }
            }
        }
        Ok(())
    }

    fn resolve_grid(&self) -> Result<Vec<GridPoint>> {
        match &self.cfg.grid {
            GridSource::Inline { points } => parse_grid(&points.join("\n")),
            GridSource::File { path } => parse_grid(&fs::read_to_string(path)?),
            GridSource::Explorer { report, explore } => {
                let text = fs::read_to_string(report)?;
                Ok(explore_report(&text, explore, self.seed("grid-explore"))?.0)
            }
            GridSource::Sampled { count, ranges } => {
                sampled_grid(*count, ranges, self.seed("grid-sample"))
            }
        }
    }
}

/// Run the selected stages in pipeline order. A failing stage stops the job
/// and is recorded in the summary; earlier artifacts stay on disk. Only
/// configuration errors are returned as `Err`.
pub fn run_job(cfg: &JobConfig) -> Result<JobSummary> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.output_dir)?;
    let run = || {
        let mut runner = Runner {
            cfg,
            summary: JobSummary {
                seed: cfg.root_seed(),
                ..Default::default()
            },
        };
        for stage in Stage::ALL.into_iter().filter(|s| cfg.selected(*s)) {
            let t = Instant::now();
            let r = runner.run_stage(stage);
            runner.summary.stages.push(StageTiming {
                stage,
                seconds: t.elapsed().as_secs_f64(),
                ok: r.is_ok(),
            });
            if let Err(e) = r {
                runner.summary.failed_stage = Some(stage);
                runner.summary.error = Some(e.to_string());
                break;
            }
        }
        runner.summary
    };
    let summary = if cfg.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(run)
    } else {
        run()
    };
    write_json(&cfg.out(artifact::SUMMARY), &summary)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_names_round_trip() {
        for s in Stage::ALL {
            assert_eq!(s.name().parse::<Stage>().unwrap(), s);
        }
        assert!("bogus".parse::<Stage>().is_err());
    }

    #[test]
    fn config_parses_grid_sources() {
        let dir = Path::new("/tmp");
        let cfg = JobConfig::from_toml(
            r#"
            seed = 5
            stages = ["generate", "ingest"]
            [grid]
            source = "sampled"
            count = 3
            ranges = [{ knob = "reserve_score", min = 0.0, max = 0.1 }]
            "#,
            dir,
        )
        .unwrap();
        assert!(matches!(cfg.grid, GridSource::Sampled { count: 3, .. }));
        assert_eq!(cfg.output_dir, dir.join("out"));
        assert!(JobConfig::from_toml("bogus_field = 1", dir).is_err());
        assert!(JobConfig::from_toml("[grid]\nsource = \"inline\"\npoints = []\npath = \"x\"", dir).is_err());
    }

    #[test]
    fn missing_inputs_fail_validation() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = JobConfig {
            output_dir: dir.path().to_path_buf(),
            stages: vec![Stage::Simulate],
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn sampled_grid_within_ranges() {
        let r = vec![DimRange { knob: "reserve_score".into(), min: 0.0, max: 0.1 }];
        let g = sampled_grid(20, &r, 1).unwrap();
        assert_eq!(g.len(), 20);
        assert!(g.iter().all(|p| p.id > 0 && r[0].contains(p.setting["reserve_score"])));
        assert_eq!(g, sampled_grid(20, &r, 1).unwrap());
    }

    #[test]
    fn filter_keeps_range_and_classes() {
        use crate::marketplace::generate_marketplace;
        let m = generate_marketplace(&GeneratorConfig::default(), 1).unwrap();
        let recs = generate_logs(&m, &PolicyConfig::default(), 50, None, 2).unwrap().records;
        let f = TrafficFilter { query_classes: vec![1], record_range: Some((10, 40)) };
        let kept = f.apply(recs.clone());
        assert!(kept.iter().all(|r| r.query_class == 1 && (10..40).contains(&r.request_id)));
        assert_eq!(TrafficFilter::default().apply(recs.clone()), recs);
    }
}
