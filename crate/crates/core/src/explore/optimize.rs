use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::regression::{fit_regression, ModelSpec, RegressionModel};
use crate::error::{Error, Result};
use crate::rng::{rng_for, rng_indexed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintOp {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    /// `|value| <= bound`
    #[serde(rename = "|<=|")]
    AbsLe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub metric: String,
    pub op: ConstraintOp,
    pub bound: f64,
}

impl Constraint {
    pub fn holds(&self, v: f64) -> bool {
        match self.op {
            ConstraintOp::Le => v <= self.bound,
            ConstraintOp::Ge => v >= self.bound,
            ConstraintOp::AbsLe => v.abs() <= self.bound,
        }
    }
}

impl FromStr for Constraint {
    type Err = Error;

    /// `cy>=-0.01`, `cpc<=0.05` or `|mliy|<=0.02`.
    fn from_str(s: &str) -> Result<Self> {
        let s: String = s.split_whitespace().collect();
        let bad = || Error::Config(format!("bad constraint `{s}`"));
        let (lhs, op, rhs) = if let Some((l, r)) = s.split_once("<=") {
            (l, ConstraintOp::Le, r)
        } else if let Some((l, r)) = s.split_once(">=") {
            (l, ConstraintOp::Ge, r)
        } else {
            return Err(bad());
        };
        let (metric, op) = match lhs.strip_prefix('|').and_then(|l| l.strip_suffix('|')) {
            Some(m) if op == ConstraintOp::Le => (m, ConstraintOp::AbsLe),
            Some(_) => return Err(bad()),
            None => (lhs, op),
        };
        if metric.is_empty() {
            return Err(bad());
        }
        Ok(Constraint {
            metric: metric.to_string(),
            op,
            bound: rhs.parse().map_err(|_| bad())?,
        })
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.op {
            ConstraintOp::Le => write!(f, "{}<={}", self.metric, self.bound),
            ConstraintOp::Ge => write!(f, "{}>={}", self.metric, self.bound),
            ConstraintOp::AbsLe => write!(f, "|{}|<={}", self.metric, self.bound),
        }
    }
}

/// Optimize one predicted metric delta subject to bounds on others.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub metric: String,
    pub direction: Direction,
    #[serde(default)]
    pub constraints: Vec<Constraint>,
}

impl Objective {
    /// `max:rpm` or `min:cpc`.
    pub fn parse(s: &str, constraints: &[String]) -> Result<Self> {
        let (d, m) = s
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("objective `{s}` is not `max:<metric>` or `min:<metric>`")))?;
        let direction = match d {
            "max" => Direction::Maximize,
            "min" => Direction::Minimize,
            _ => return Err(Error::Config(format!("unknown direction `{d}`"))),
        };
        Ok(Objective {
            metric: m.to_string(),
            direction,
            constraints: constraints.iter().map(|c| c.parse()).collect::<Result<_>>()?,
        })
    }

    /// Every metric the objective reads.
    pub fn metrics(&self) -> Vec<String> {
        let mut v = vec![self.metric.clone()];
        for c in &self.constraints {
            if !v.contains(&c.metric) {
                v.push(c.metric.clone());
            }
        }
        v
    }

    /// Score where larger is better.
    pub fn score(&self, values: &BTreeMap<String, f64>) -> f64 {
        let v = values.get(&self.metric).copied().unwrap_or(f64::NAN);
        match self.direction {
            Direction::Maximize => v,
            Direction::Minimize => -v,
        }
    }

    pub fn feasible(&self, values: &BTreeMap<String, f64>) -> bool {
        self.constraints
            .iter()
            .all(|c| values.get(&c.metric).is_some_and(|v| c.holds(*v)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimRange {
    pub knob: String,
    pub min: f64,
    pub max: f64,
}

impl DimRange {
    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExploreParams {
    pub batches: usize,
    pub population: usize,
    pub solution_size: usize,
    pub objective: Objective,
    pub ranges: Vec<DimRange>,
    pub seed: u64,
}

pub const DEFAULT_BATCHES: usize = 20;
pub const DEFAULT_POPULATION: usize = 5000;

impl ExploreParams {
    pub fn validate(&self) -> Result<()> {
        if self.population == 0 || self.solution_size == 0 || self.solution_size > self.population {
            return Err(Error::Config(
                "need population ≥ 1 and 1 ≤ solution size ≤ population".into(),
            ));
        }
        if self.ranges.is_empty() {
            return Err(Error::Config("no dimensions to explore".into()));
        }
        for r in &self.ranges {
            if !(r.min <= r.max) {
                return Err(Error::Config(format!("range for `{}` has min > max", r.knob)));
            }
        }
        Ok(())
    }
}

/// `population` candidates, each a uniformly chosen parent with a random
/// non-empty subset of dimensions resampled uniformly within its range.
pub fn explore(current: &[Vec<f64>], population: usize, ranges: &[DimRange], seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng_for(seed, "explore");
    explore_with(current, population, ranges, &mut rng)
}

fn explore_with<R: Rng>(
    current: &[Vec<f64>],
    population: usize,
    ranges: &[DimRange],
    rng: &mut R,
) -> Vec<Vec<f64>> {
    assert!(!current.is_empty(), "explore needs a non-empty solution set");
    let k = ranges.len();
    (0..population)
        .map(|_| {
            let mut c = current[rng.random_range(0..current.len())].clone();
            let size = rng.random_range(1..=k);
            for d in sample(rng, k, size) {
                let r = &ranges[d];
                c[d] = if r.min == r.max { r.min } else { rng.random_range(r.min..=r.max) };
            }
            c
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub setting: Vec<f64>,
    pub values: BTreeMap<String, f64>,
    pub objective: f64,
    pub feasible: bool,
    /// Creation order, used to break ties.
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeResult {
    pub dims: Vec<String>,
    pub top: Vec<Candidate>,
    /// Best feasible objective score of the selected set after each batch,
    /// starting with the input set; larger is better.
    pub history: Vec<Option<f64>>,
    pub surrogates: Vec<RegressionModel>,
}

fn rank(c: &mut [Candidate]) {
    c.sort_by(|a, b| {
        b.feasible
            .cmp(&a.feasible)
            .then(b.objective.total_cmp(&a.objective))
            .then(a.index.cmp(&b.index))
    });
}

fn best_feasible(c: &[Candidate]) -> Option<f64> {
    c.iter().filter(|c| c.feasible).map(|c| c.objective).reduce(f64::max)
}

/// Regression-guided hill climbing over the policy space.
///
/// Input points are scored by their observed deltas `dy`; explored candidates
/// by surrogates fit per metric. Each batch explores from the current set and
/// keeps the best `population` of the union, so the best feasible score never
/// decreases. Points outside the declared ranges are infeasible.
pub fn optimize(
    x: &[Vec<f64>],
    dy: &BTreeMap<String, Vec<f64>>,
    params: &ExploreParams,
    spec: &ModelSpec,
) -> Result<OptimizeResult> {
    params.validate()?;
    if x.is_empty() {
        return Err(Error::Config("need at least one observed point".into()));
    }
    let k = params.ranges.len();
    if x.iter().any(|r| r.len() != k) {
        return Err(Error::Config("observed points do not match the range dimensions".into()));
    }
    let metrics = params.objective.metrics();
    let mut surrogates = Vec::new();
    for m in &metrics {
        let y = dy
            .get(m)
            .ok_or_else(|| Error::Config(format!("no observations for metric `{m}`")))?;
        if y.len() != x.len() {
            return Err(Error::Config(format!("metric `{m}` has {} values for {} points", y.len(), x.len())));
        }
        if params.batches > 0 {
            surrogates.push(fit_regression(x, y, spec, m)?);
        }
    }
    let obj = &params.objective;
    let in_range = |s: &[f64]| s.iter().zip(&params.ranges).all(|(v, r)| r.contains(*v));
    let make = |setting: Vec<f64>, values: BTreeMap<String, f64>, index| Candidate {
        feasible: in_range(&setting) && obj.feasible(&values) && !obj.score(&values).is_nan(),
        objective: obj.score(&values),
        setting,
        values,
        index,
    };
    let mut current: Vec<Candidate> = x
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let values = metrics.iter().map(|m| (m.clone(), dy[m][i])).collect();
            make(s.clone(), values, i)
        })
        .collect();
    rank(&mut current);
    current.truncate(params.population);
    let mut next_index = x.len();
    let mut history = vec![best_feasible(&current)];
    for b in 0..params.batches {
        let parents: Vec<Vec<f64>> = current.iter().map(|c| c.setting.clone()).collect();
        let mut rng = rng_indexed(params.seed, "explore", b as u64);
        let explored = explore_with(&parents, params.population, &params.ranges, &mut rng);
        let mut scored: Vec<Candidate> = explored
            .into_par_iter()
            .enumerate()
            .map(|(i, s)| {
                let values = surrogates
                    .iter()
                    .map(|m| (m.target_metric.clone(), m.predict(&s)))
                    .collect();
                make(s, values, next_index + i)
            })
            .collect();
        next_index += params.population;
        scored.append(&mut current);
        rank(&mut scored);
        scored.truncate(params.population);
        current = scored;
        history.push(best_feasible(&current));
    }
    let top: Vec<Candidate> = current
        .into_iter()
        .filter(|c| c.feasible)
        .take(params.solution_size)
        .collect();
    if top.is_empty() {
        return Err(Error::Infeasible);
    }
    Ok(OptimizeResult {
        dims: params.ranges.iter().map(|r| r.knob.clone()).collect(),
        top,
        history,
        surrogates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explore::RegressionKind;

    fn ranges(v: &[(f64, f64)]) -> Vec<DimRange> {
        v.iter()
            .enumerate()
            .map(|(i, (a, b))| DimRange { knob: format!("k{i}"), min: *a, max: *b })
            .collect()
    }

    #[test]
    fn explore_basics() {
        let r = ranges(&[(0.0, 0.0), (0.0, 0.0)]);
        let c = explore(&[vec![0.0, 0.0]], 50, &r, 1);
        assert!(c.iter().all(|p| p == &vec![0.0, 0.0]));
        let r = ranges(&[(0.0, 1.0), (-1.0, 1.0)]);
        let c = explore(&[vec![0.5, 0.5]], 5, &r, 1);
        assert_eq!(c.len(), 5);
        assert_eq!(c, explore(&[vec![0.5, 0.5]], 5, &r, 1));
        let c = explore(&[vec![0.5, 0.5]], 500, &r, 2);
        assert!(c.iter().all(|p| r[0].contains(p[0]) && r[1].contains(p[1])));
        // every candidate changes at least one coordinate
        assert!(c.iter().all(|p| p != &vec![0.5, 0.5]));
    }

    #[test]
    fn constraint_parsing() {
        let c: Constraint = "|mliy| <= 0.02".parse().unwrap();
        assert_eq!(c.op, ConstraintOp::AbsLe);
        assert!(c.holds(-0.01) && !c.holds(0.03));
        let c: Constraint = "cy>=-0.01".parse().unwrap();
        assert_eq!((c.metric.as_str(), c.op, c.bound), ("cy", ConstraintOp::Ge, -0.01));
        assert_eq!(c.to_string().parse::<Constraint>().unwrap(), c);
        assert!("cy=1".parse::<Constraint>().is_err());
        assert!("|cy|>=1".parse::<Constraint>().is_err());
    }

    fn objective(m: &str) -> Objective {
        Objective { metric: m.into(), direction: Direction::Maximize, constraints: vec![] }
    }

    fn params(batches: usize, k: usize, r: Vec<DimRange>) -> ExploreParams {
        ExploreParams { batches, population: 100, solution_size: k, objective: objective("rpm"), ranges: r, seed: 3 }
    }

    #[test]
    fn zero_batches_returns_best_inputs() {
        let x = vec![vec![0.1], vec![0.5], vec![0.9]];
        let dy = BTreeMap::from([("rpm".to_string(), vec![0.3, 0.7, 0.1])]);
        let r = optimize(&x, &dy, &params(0, 2, ranges(&[(0.0, 1.0)])), &ModelSpec::default()).unwrap();
        let s: Vec<f64> = r.top.iter().map(|c| c.setting[0]).collect();
        assert_eq!(s, [0.5, 0.1]);
        let one = optimize(&x[..1], &BTreeMap::from([("rpm".to_string(), vec![0.3])]),
            &params(0, 1, ranges(&[(0.0, 1.0)])), &ModelSpec::default()).unwrap();
        assert_eq!(one.top[0].setting, vec![0.1]);
    }

    #[test]
    fn infeasible_constraints() {
        let x = vec![vec![0.1], vec![0.5]];
        let dy = BTreeMap::from([
            ("rpm".to_string(), vec![0.3, 0.7]),
            ("cy".to_string(), vec![-0.3, -0.2]),
        ]);
        let mut p = params(0, 1, ranges(&[(0.0, 1.0)]));
        p.objective.constraints.push("cy>=0".parse().unwrap());
        assert!(matches!(optimize(&x, &dy, &p, &ModelSpec::default()), Err(Error::Infeasible)));
        p.objective.constraints[0] = "cy>=-0.25".parse().unwrap();
        let r = optimize(&x, &dy, &p, &ModelSpec::default()).unwrap();
        assert_eq!(r.top[0].setting, vec![0.5]);
    }

    #[test]
    fn finds_quadratic_optimum_and_is_monotone() {
        let x: Vec<Vec<f64>> = (0..=20).map(|i| vec![i as f64 * 0.5]).collect();
        let y: Vec<f64> = x.iter().map(|r| -(r[0] - 3.0).powi(2)).collect();
        let dy = BTreeMap::from([("rpm".to_string(), y)]);
        let p = ExploreParams {
            batches: 20,
            population: 5000,
            solution_size: 1,
            objective: objective("rpm"),
            ranges: ranges(&[(0.0, 10.0)]),
            seed: 11,
        };
        let spec = ModelSpec { kind: RegressionKind::Linear, degree: 2, lambda: 0.0 };
        let r = optimize(&x, &dy, &p, &spec).unwrap();
        assert!((r.top[0].setting[0] - 3.0).abs() < 0.05);
        let h: Vec<f64> = r.history.iter().map(|v| v.unwrap()).collect();
        assert!(h.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(r, optimize(&x, &dy, &p, &spec).unwrap());
    }
}
