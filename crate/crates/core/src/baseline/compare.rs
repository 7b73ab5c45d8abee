use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::estimate::{is_delta, is_kpis};
use super::oracle::{ab_delta, OracleDelta};
use super::sampling::{
    generate_randomized_logs_from, ProposalDistribution, RandomizationSpec,
};
use crate::auction::{simulate_dataset, AuctionData};
use crate::click::{train_click_model, training_impressions, ClickModelSpec, GbtParams};
use crate::cube::{Dimension, KpiDelta, KpiMetrics};
use crate::error::{Error, Result};
use crate::marketplace::{
    generate_marketplace, ground_truth_records, DriftSpec, GeneratorConfig, MarketplaceModel,
};
use crate::policy::{GridPoint, PolicyConfig, MAINLINE_MIN_PCLICK, QUALITY_EXPONENT, RESERVE_SCORE};
use crate::rng::derive_seed;

/// Metrics compared, in table column order.
pub const COMPARED_METRICS: [&str; 4] = ["rpm", "mliy", "cy", "cpc"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Fixed market and system policy across intervals.
    Stationary,
    /// The system policy swaps mid-interval and the market moves between
    /// intervals.
    Drift,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub intervals: usize,
    /// Randomized logs per interval, used by both estimators.
    pub train_requests: usize,
    /// Requests per arm of the ground-truth comparison.
    pub oracle_requests: usize,
    pub generator: GeneratorConfig,
    pub base_policy: PolicyConfig,
    /// Knob being tuned; randomized in the logs.
    pub tuned_knob: String,
    pub theta0: f64,
    pub stddev: f64,
    /// Candidate settings as offsets from `theta0` in units of `stddev`.
    pub candidate_shifts: Vec<f64>,
    /// Proposal stddev as a fraction of the logging stddev.
    pub proposal_scale: f64,
    /// System knob that changes between intervals under drift.
    pub drift_knob: String,
    /// Value of `drift_knob` in interval k is `drift_values[k % len]`.
    pub drift_values: Vec<f64>,
    /// Log-scale spread of the per-interval bid level change.
    pub bid_drift: f64,
    /// Log-scale spread of the per-interval query mix change.
    pub mix_drift: f64,
    pub click_model: ClickModelSpec,
    pub self_normalized: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::Drift,
            intervals: 5,
            train_requests: 20_000,
            oracle_requests: 50_000,
            generator: GeneratorConfig::default(),
            base_policy: PolicyConfig::new([(MAINLINE_MIN_PCLICK, 0.05)]).expect("valid knob"),
            tuned_knob: RESERVE_SCORE.to_string(),
            theta0: 0.08,
            stddev: 0.02,
            candidate_shifts: vec![-1.0, -0.5, 0.5, 1.0],
            proposal_scale: 0.5,
            drift_knob: QUALITY_EXPONENT.to_string(),
            drift_values: vec![1.0, 1.3, 0.8, 1.2, 0.9, 1.4],
            bid_drift: 0.15,
            mix_drift: 0.3,
            // the true click function has a block × pclick interaction that the
            // additive probit cannot represent; trees pick it up
            click_model: ClickModelSpec::Gbt { params: GbtParams::default() },
            self_normalized: false,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.intervals == 0 || self.train_requests < 2 || self.oracle_requests < 2 {
            return Err(Error::Config("need ≥ 1 interval and ≥ 2 requests per stage".into()));
        }
        if self.candidate_shifts.is_empty() || self.drift_values.is_empty() {
            return Err(Error::Config("candidate shifts and drift values must be non-empty".into()));
        }
        if !(self.proposal_scale > 0.0) {
            return Err(Error::Config("proposal scale must be positive".into()));
        }
        if self.tuned_knob == self.drift_knob {
            return Err(Error::Config("tuned and drifting knobs must differ".into()));
        }
        let spec = self.randomization(&self.base_policy)?;
        for s in &self.candidate_shifts {
            let g = &spec.knobs[&self.tuned_knob];
            let t = self.theta0 + s * self.stddev;
            if t < g.lo || t > g.hi {
                return Err(Error::Config(format!("candidate {t} outside the logging support")));
            }
        }
        Ok(())
    }

    fn randomization(&self, base: &PolicyConfig) -> Result<RandomizationSpec> {
        RandomizationSpec::single(base.clone(), &self.tuned_knob, self.theta0, self.stddev)
    }

    fn drift_value(&self, interval: usize) -> f64 {
        match self.scenario {
            Scenario::Stationary => self.drift_values[0],
            Scenario::Drift => self.drift_values[interval % self.drift_values.len()],
        }
    }

    fn system_policy(&self, interval: usize) -> Result<PolicyConfig> {
        let mut p = self.base_policy.clone();
        p.set(&self.drift_knob, self.drift_value(interval))?;
        Ok(p)
    }

    fn market(&self, base: &MarketplaceModel, seed: u64, interval: usize) -> MarketplaceModel {
        match self.scenario {
            Scenario::Stationary => base.clone(),
            Scenario::Drift => base.perturbed(
                derive_seed(seed, &format!("market-{interval}")),
                self.bid_drift,
                self.mix_drift,
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Estimator {
    ImportanceSampling,
    Replay,
}

impl Estimator {
    pub fn label(self) -> &'static str {
        match self {
            Estimator::ImportanceSampling => "IS",
            Estimator::Replay => "Replay",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    /// Predict the next interval from the tuning interval's logs.
    Historical,
    /// Predict from control logs of the evaluation interval itself.
    Regression,
}

impl Mode {
    pub fn label(self) -> &'static str {
        match self {
            Mode::Historical => "Historical",
            Mode::Regression => "Regression",
        }
    }
}

/// Table rows in display order.
pub const ROWS: [(Estimator, Mode); 4] = [
    (Estimator::ImportanceSampling, Mode::Historical),
    (Estimator::Replay, Mode::Historical),
    (Estimator::ImportanceSampling, Mode::Regression),
    (Estimator::Replay, Mode::Regression),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub estimator: Estimator,
    pub mode: Mode,
    pub delta: KpiDelta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalResult {
    pub seed: u64,
    pub interval: usize,
    pub theta_star: f64,
    pub oracle: OracleDelta,
    pub predictions: Vec<Prediction>,
}

impl IntervalResult {
    pub fn prediction(&self, e: Estimator, m: Mode) -> Option<&Prediction> {
        self.predictions.iter().find(|p| p.estimator == e && p.mode == m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub estimator: Estimator,
    pub mode: Mode,
    /// Mean absolute delta error per metric, keyed by metric name.
    pub mae: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub scenario: Scenario,
    pub rows: Vec<ComparisonRow>,
    pub intervals: Vec<IntervalResult>,
}

impl ComparisonTable {
    pub fn mae(&self, e: Estimator, m: Mode, metric: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.estimator == e && r.mode == m)
            .and_then(|r| r.mae.get(metric).copied())
    }
}

fn replay_delta(
    logs: &[AuctionData],
    control: &GridPoint,
    treatment: &GridPoint,
    spec: &ClickModelSpec,
) -> Result<KpiDelta> {
    let model = train_click_model(&training_impressions(logs), spec)?;
    let mut logs = logs.to_vec();
    let out = simulate_dataset(
        &mut logs,
        &[control.clone(), treatment.clone()],
        &model,
        &[Dimension::GridPointId],
        0,
    )?;
    if let Some(e) = out.errors.first() {
        return Err(Error::Config(format!("replay failed: {}", e.message)));
    }
    let m = |g: &GridPoint| -> Result<KpiMetrics> {
        Ok(KpiMetrics::from_counters(
            &out.cube.slice_total(Dimension::GridPointId, u64::from(g.id))?,
        ))
    };
    Ok(KpiDelta::between(&m(treatment)?, &m(control)?))
}

fn run_interval(
    cfg: &ScenarioConfig,
    base: &MarketplaceModel,
    seed: u64,
    k: usize,
) -> Result<IntervalResult> {
    let n = cfg.train_requests;
    let market_k = cfg.market(base, seed, k);
    let market_next = cfg.market(base, seed, k + 1);
    let sys_k = cfg.system_policy(k)?;
    let sys_next = cfg.system_policy(k + 1)?;
    let spec_k = cfg.randomization(&sys_k)?;
    let spec_next = cfg.randomization(&sys_next)?;
    let drift = match cfg.scenario {
        Scenario::Stationary => None,
        Scenario::Drift => Some(DriftSpec {
            drift_index: n / 2,
            drifted_policy: sys_next.clone(),
        }),
    };
    let id_base = (k as u64) << 32;
    let hist = generate_randomized_logs_from(
        &market_k,
        &spec_k,
        n,
        drift.as_ref(),
        derive_seed(seed, &format!("tuning-{k}")),
        id_base,
    )?
    .records;
    let ctrl = generate_randomized_logs_from(
        &market_next,
        &spec_next,
        n,
        None,
        derive_seed(seed, &format!("control-{}", k + 1)),
        id_base,
    )?
    .records;

    let proposal = |spec: &RandomizationSpec, theta: f64| {
        ProposalDistribution::centered(
            spec,
            &BTreeMap::from([(cfg.tuned_knob.clone(), theta)]),
            cfg.proposal_scale,
        )
    };
    // the tuning step: pick the candidate with the best estimated RPM
    let mut theta_star = cfg.theta0;
    let mut best = f64::NEG_INFINITY;
    for s in &cfg.candidate_shifts {
        let t = cfg.theta0 + s * cfg.stddev;
        let rpm = is_kpis(&hist, &spec_k, &proposal(&spec_k, t)?, cfg.self_normalized)?
            .metrics
            .rpm
            .unwrap_or(f64::NEG_INFINITY);
        if rpm > best {
            best = rpm;
            theta_star = t;
        }
    }

    let control_gp = GridPoint::new(
        1,
        [(cfg.tuned_knob.as_str(), cfg.theta0), (cfg.drift_knob.as_str(), cfg.drift_value(k + 1))],
    )?;
    let treatment_gp = GridPoint::new(
        2,
        [(cfg.tuned_knob.as_str(), theta_star), (cfg.drift_knob.as_str(), cfg.drift_value(k + 1))],
    )?;

    let mut predictions = Vec::new();
    for (mode, logs, spec) in [(Mode::Historical, &hist, &spec_k), (Mode::Regression, &ctrl, &spec_next)] {
        predictions.push(Prediction {
            estimator: Estimator::ImportanceSampling,
            mode,
            delta: is_delta(
                logs,
                spec,
                &proposal(spec, theta_star)?,
                &proposal(spec, cfg.theta0)?,
                cfg.self_normalized,
            )?,
        });
        predictions.push(Prediction {
            estimator: Estimator::Replay,
            mode,
            delta: replay_delta(logs, &control_gp, &treatment_gp, &cfg.click_model)?,
        });
    }

    let oracle_seed = derive_seed(seed, &format!("oracle-{}", k + 1));
    let at = |theta: f64| -> Result<Vec<crate::cube::CellCounters>> {
        let mut p = sys_next.clone();
        p.set(&cfg.tuned_knob, theta)?;
        Ok(ground_truth_records(&market_next, &p, cfg.oracle_requests, oracle_seed, id_base, 0)?
            .into_iter()
            .map(|r| r.counters)
            .collect())
    };
    let oracle = ab_delta(&at(theta_star)?, &at(cfg.theta0)?)?;
    Ok(IntervalResult {
        seed,
        interval: k,
        theta_star,
        oracle,
        predictions,
    })
}

/// Run both estimators over `cfg.intervals` tuning intervals for each seed
/// and tabulate their mean absolute error against the true deltas.
pub fn compare_estimators(cfg: &ScenarioConfig, seeds: &[u64]) -> Result<ComparisonTable> {
    cfg.validate()?;
    if seeds.is_empty() {
        return Err(Error::Config("need at least one seed".into()));
    }
    let mut intervals = Vec::new();
    for &seed in seeds {
        let base = generate_marketplace(&cfg.generator, derive_seed(seed, "market"))?;
        for k in 0..cfg.intervals {
            intervals.push(run_interval(cfg, &base, seed, k)?);
        }
    }
    let mut rows = Vec::new();
    for (estimator, mode) in ROWS {
        let mut mae = BTreeMap::new();
        for m in COMPARED_METRICS {
            let mut total = 0.0;
            for r in &intervals {
                let pred = r
                    .prediction(estimator, mode)
                    .and_then(|p| p.delta.get(m))
                    .ok_or_else(|| Error::UndefinedMetric(format!("{} {m}", estimator.label())))?;
                let truth = r
                    .oracle
                    .delta
                    .get(m)
                    .ok_or_else(|| Error::UndefinedMetric(format!("oracle {m}")))?;
                total += (pred - truth).abs();
            }
            mae.insert(m.to_string(), total / intervals.len() as f64);
        }
        rows.push(ComparisonRow { estimator, mode, mae });
    }
    Ok(ComparisonTable {
        scenario: cfg.scenario,
        rows,
        intervals,
    })
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| format!("{:.2}%", 100.0 * v))
}

/// Mean absolute errors: rows estimator × mode, columns RPM, MLIY, CY, CPC.
pub fn format_comparison(t: &ComparisonTable) -> String {
    let mut out = String::from("Method\tRPM\tMLIY\tCY\tCPC\n");
    for r in &t.rows {
        let _ = write!(out, "{} ({})", r.estimator.label(), r.mode.label());
        for m in COMPARED_METRICS {
            let _ = write!(out, "\t{}", pct(r.mae.get(m).copied()));
        }
        out.push('\n');
    }
    out
}

/// Single-tuning view of the first interval: the true delta next to the
/// replay prediction from same-period logs and from the earlier period.
pub fn format_end_to_end(t: &ComparisonTable) -> String {
    let mut out = String::from("Job\tDeltaRPM\tDeltaCY\tDeltaMLIY\n");
    let Some(r) = t.intervals.first() else { return out };
    let row = |out: &mut String, label: &str, d: Option<&KpiDelta>| {
        let _ = writeln!(
            out,
            "{label}\t{}\t{}\t{}",
            pct(d.and_then(|d| d.rpm)),
            pct(d.and_then(|d| d.cy)),
            pct(d.and_then(|d| d.mliy))
        );
    };
    row(&mut out, "True delta", Some(&r.oracle.delta));
    row(&mut out, "Replay (same period)", r.prediction(Estimator::Replay, Mode::Regression).map(|p| &p.delta));
    row(&mut out, "Replay (prior period)", r.prediction(Estimator::Replay, Mode::Historical).map(|p| &p.delta));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ScenarioConfig {
        ScenarioConfig {
            intervals: 2,
            train_requests: 1500,
            oracle_requests: 1500,
            click_model: ClickModelSpec::default(),
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn table_has_every_row_and_metric() {
        let t = compare_estimators(&small(), &[7]).unwrap();
        assert_eq!(t.intervals.len(), 2);
        assert_eq!(t.rows.len(), 4);
        for (e, m) in ROWS {
            for metric in COMPARED_METRICS {
                assert!(t.mae(e, m, metric).unwrap() >= 0.0);
            }
        }
        let text = format_comparison(&t);
        assert_eq!(text.lines().count(), 5);
        assert!(format_end_to_end(&t).starts_with("Job\t"));
    }

    #[test]
    fn deterministic_per_seed() {
        let a = compare_estimators(&small(), &[3]).unwrap();
        let b = compare_estimators(&small(), &[3]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_configs() {
        let mut c = small();
        c.drift_knob = c.tuned_knob.clone();
        assert!(c.validate().is_err());
        let mut c = small();
        c.candidate_shifts = vec![5.0];
        assert!(c.validate().is_err());
        assert!(compare_estimators(&small(), &[]).is_err());
    }
}
