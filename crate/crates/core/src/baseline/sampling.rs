use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::auction::{run_auction, AuctionData};
use crate::error::{Error, Result};
use crate::marketplace::{build_request, sample_clicks, DriftSpec, LogDataset, MarketplaceModel};
use crate::policy::{knob_spec, PolicyConfig};
use crate::rng::rng_indexed;
use crate::stats::{norm_cdf, LN_SQRT_2PI};

/// Gaussian restricted to `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncatedGaussian {
    pub mean: f64,
    pub stddev: f64,
    pub lo: f64,
    pub hi: f64,
}

pub const DEFAULT_TRUNCATION: f64 = 3.0;

impl TruncatedGaussian {
    pub fn new(mean: f64, stddev: f64, lo: f64, hi: f64) -> Result<Self> {
        let g = Self { mean, stddev, lo, hi };
        g.validate()?;
        Ok(g)
    }

    /// `mean ± width·stddev`, clipped to `[floor, ceil]`.
    pub fn symmetric(mean: f64, stddev: f64, width: f64, floor: f64, ceil: f64) -> Result<Self> {
        Self::new(
            mean,
            stddev,
            (mean - width * stddev).max(floor),
            (mean + width * stddev).min(ceil),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.stddev > 0.0 && self.stddev.is_finite()) {
            return Err(Error::Config("stddev must be positive".into()));
        }
        if !(self.lo <= self.mean && self.mean <= self.hi && self.lo < self.hi) {
            return Err(Error::Config(format!(
                "truncation bounds [{}, {}] must contain the mean {}",
                self.lo, self.hi, self.mean
            )));
        }
        Ok(())
    }

    fn ln_mass(&self) -> f64 {
        let a = norm_cdf((self.lo - self.mean) / self.stddev);
        let b = norm_cdf((self.hi - self.mean) / self.stddev);
        (b - a).ln()
    }

    /// Log density; `-inf` outside the support.
    pub fn ln_pdf(&self, x: f64) -> f64 {
        if x < self.lo || x > self.hi {
            return f64::NEG_INFINITY;
        }
        let z = (x - self.mean) / self.stddev;
        -0.5 * z * z - LN_SQRT_2PI - self.stddev.ln() - self.ln_mass()
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        loop {
            let z: f64 = rng.sample(StandardNormal);
            let x = self.mean + self.stddev * z;
            if x >= self.lo && x <= self.hi {
                return x;
            }
        }
    }
}

/// Logging-time randomization: a base policy with some knobs drawn
/// independently per request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomizationSpec {
    pub base_policy: PolicyConfig,
    pub knobs: BTreeMap<String, TruncatedGaussian>,
}

impl RandomizationSpec {
    /// One knob around `mean` with the default ±3σ truncation, clipped to the
    /// knob's declared range.
    pub fn single(base_policy: PolicyConfig, knob: &str, mean: f64, stddev: f64) -> Result<Self> {
        let k = knob_spec(knob)?;
        let g = TruncatedGaussian::symmetric(mean, stddev, DEFAULT_TRUNCATION, k.min, k.max)?;
        let s = Self {
            base_policy,
            knobs: BTreeMap::from([(knob.to_string(), g)]),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.base_policy.validate()?;
        if self.knobs.is_empty() {
            return Err(Error::Config("no randomized knobs".into()));
        }
        for (k, g) in &self.knobs {
            g.validate()?;
            let spec = knob_spec(k)?;
            if g.lo < spec.min || g.hi > spec.max {
                return Err(Error::Config(format!(
                    "truncation of `{k}` exceeds its range [{}, {}]",
                    spec.min, spec.max
                )));
            }
        }
        Ok(())
    }

    fn sample_policy(&self, base: &PolicyConfig, seed: u64, request_id: u64) -> Result<PolicyConfig> {
        let mut rng = rng_indexed(seed, "randomize", request_id);
        let mut p = base.clone();
        for (k, g) in &self.knobs {
            p.set(k, g.sample(&mut rng))?;
        }
        Ok(p)
    }
}

/// Counterfactual knob distribution `P*`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalDistribution {
    pub knobs: BTreeMap<String, TruncatedGaussian>,
}

impl ProposalDistribution {
    /// The logging distribution itself.
    pub fn logging(spec: &RandomizationSpec) -> Self {
        Self { knobs: spec.knobs.clone() }
    }

    /// Gaussians centred on `targets` with `scale` times the logging stddev,
    /// truncated to the logging support.
    pub fn centered(spec: &RandomizationSpec, targets: &BTreeMap<String, f64>, scale: f64) -> Result<Self> {
        let mut knobs = BTreeMap::new();
        for (k, g) in &spec.knobs {
            let mean = targets.get(k).copied().unwrap_or(g.mean);
            knobs.insert(k.clone(), TruncatedGaussian::new(mean, g.stddev * scale, g.lo, g.hi)?);
        }
        Ok(Self { knobs })
    }

    /// Knobs whose support is not contained in the logging support; weights
    /// there are unbounded.
    pub fn support_warnings(&self, spec: &RandomizationSpec) -> Vec<String> {
        self.knobs
            .iter()
            .filter_map(|(k, g)| match spec.knobs.get(k) {
                None => Some(format!("`{k}` is not randomized in the logs")),
                Some(l) if g.lo < l.lo || g.hi > l.hi => Some(format!(
                    "`{k}` support [{}, {}] exceeds logging support [{}, {}]",
                    g.lo, g.hi, l.lo, l.hi
                )),
                _ => None,
            })
            .collect()
    }
}

/// Logs whose randomized knobs are drawn per request and recorded in each
/// record's policy parameters.
pub fn generate_randomized_logs(
    model: &MarketplaceModel,
    spec: &RandomizationSpec,
    n: usize,
    seed: u64,
) -> Result<LogDataset> {
    generate_randomized_logs_from(model, spec, n, None, seed, 0)
}

/// As [`generate_randomized_logs`], with an optional mid-log change of the
/// base policy (randomized knobs are drawn on top of it) and ids starting at
/// `first_id`.
pub fn generate_randomized_logs_from(
    model: &MarketplaceModel,
    spec: &RandomizationSpec,
    n: usize,
    drift: Option<&DriftSpec>,
    seed: u64,
    first_id: u64,
) -> Result<LogDataset> {
    spec.validate()?;
    model.validate()?;
    if n == 0 {
        return Err(Error::Config("need at least one request".into()));
    }
    if let Some(d) = drift {
        d.drifted_policy.validate()?;
        if d.drift_index > n {
            return Err(Error::Config("drift index beyond log length".into()));
        }
    }
    let records = (0..n)
        .into_par_iter()
        .map(|i| {
            let id = first_id + i as u64;
            let base = match drift {
                Some(d) if i >= d.drift_index => &d.drifted_policy,
                _ => &spec.base_policy,
            };
            let policy = spec.sample_policy(base, seed, id)?;
            let mut data = build_request(model, &policy, seed, id);
            data.logged_allocation = run_auction(&data);
            data.logged_clicks = sample_clicks(model, data.query_class, &data.logged_allocation, seed, id);
            Ok(data)
        })
        .collect::<Result<Vec<AuctionData>>>()?;
    Ok(LogDataset {
        records,
        logging_policy: spec.base_policy.clone(),
        drift_spec: drift.cloned(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marketplace::{generate_marketplace, GeneratorConfig};
    use rand::SeedableRng;

    #[test]
    fn density_integrates_to_one() {
        let g = TruncatedGaussian::new(0.3, 0.2, 0.1, 0.9).unwrap();
        // midpoint rule, independent of the closed-form normalizer
        let n = 200_000;
        let h = (g.hi - g.lo) / n as f64;
        let mass: f64 = (0..n).map(|i| g.ln_pdf(g.lo + (i as f64 + 0.5) * h).exp() * h).sum();
        assert!((mass - 1.0).abs() < 1e-6, "{mass}");
        assert_eq!(g.ln_pdf(0.05), f64::NEG_INFINITY);
    }

    #[test]
    fn samples_stay_in_support() {
        let g = TruncatedGaussian::symmetric(0.08, 0.02, 3.0, 0.0, 10.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let xs: Vec<f64> = (0..20_000).map(|_| g.sample(&mut rng)).collect();
        assert!(xs.iter().all(|x| (0.02..=0.14).contains(x)));
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((mean - 0.08).abs() < 1e-3);
    }

    #[test]
    fn clipped_to_knob_range() {
        let s = RandomizationSpec::single(PolicyConfig::default(), "reserve_score", 0.01, 0.02).unwrap();
        assert_eq!(s.knobs["reserve_score"].lo, 0.0);
        assert!(RandomizationSpec::single(PolicyConfig::default(), "no_such_knob", 1.0, 0.1).is_err());
        assert!(TruncatedGaussian::new(1.0, 0.0, 0.0, 2.0).is_err());
        assert!(TruncatedGaussian::new(3.0, 1.0, 0.0, 2.0).is_err());
    }

    #[test]
    fn support_warnings_flag_wider_proposals() {
        let s = RandomizationSpec::single(PolicyConfig::default(), "reserve_score", 0.08, 0.02).unwrap();
        let p = ProposalDistribution::centered(&s, &BTreeMap::from([("reserve_score".into(), 0.1)]), 0.5).unwrap();
        assert!(p.support_warnings(&s).is_empty());
        let mut wide = p.clone();
        wide.knobs.get_mut("reserve_score").unwrap().hi = 1.0;
        assert_eq!(wide.support_warnings(&s).len(), 1);
    }

    #[test]
    fn logs_record_their_draws() {
        let m = generate_marketplace(&GeneratorConfig::default(), 3).unwrap();
        let s = RandomizationSpec::single(PolicyConfig::default(), "reserve_score", 0.08, 0.02).unwrap();
        let a = generate_randomized_logs(&m, &s, 300, 9).unwrap();
        let b = generate_randomized_logs(&m, &s, 300, 9).unwrap();
        assert_eq!(a.records, b.records);
        let g = s.knobs["reserve_score"];
        let draws: Vec<f64> = a.records.iter().map(|r| r.policy_params.knobs["reserve_score"]).collect();
        assert!(draws.iter().all(|x| *x >= g.lo && *x <= g.hi));
        assert!(draws.windows(2).any(|w| w[0] != w[1]));
    }
}
