use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::auction::{Block, PageTemplate, MAINLINE, SIDEBAR};
use crate::click::{ClickPredictor, FeatureMap, FeatureValue};
use crate::click::features::{F_BLOCK, F_PCLICK, F_POSITION, F_QUERY_CLASS};
use crate::error::{Error, Result};
use crate::rng::rng_for;
use crate::stats::{logit, sigmoid};

/// Smallest and largest relevance (and hence system pclick) an ad can have.
pub const RELEVANCE_RANGE: (f64, f64) = (0.002, 0.9);

/// Knobs of the synthetic marketplace generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub n_advertisers: usize,
    pub n_query_classes: usize,
    /// Range the per-advertiser mean bid is drawn from.
    pub bid_mean_range: (f64, f64),
    /// Per-advertiser bid standard deviation as a fraction of its mean.
    pub bid_cv: f64,
    pub base_quality_range: (f64, f64),
    /// Log-scale spread of per-request relevance around its expectation.
    pub relevance_noise: f64,
    /// Entry probability per unit of relevance multiplier.
    pub participation: f64,
    pub true_click_params: Option<Vec<f64>>,
    pub page_templates: Option<Vec<PageTemplate>>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_advertisers: 20,
            n_query_classes: 5,
            bid_mean_range: (0.5, 3.0),
            bid_cv: 0.3,
            base_quality_range: (0.03, 0.25),
            relevance_noise: 0.5,
            participation: 0.3,
            true_click_params: None,
            page_templates: None,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_advertisers == 0 || self.n_query_classes == 0 {
            return bad("advertiser and query class counts must be at least 1");
        }
        let (lo, hi) = self.bid_mean_range;
        if !(lo > 0.0 && hi >= lo) {
            return bad("bid mean range must be positive and ordered");
        }
        if !(self.bid_cv >= 0.0) || !(self.relevance_noise >= 0.0) {
            return bad("spreads must be non-negative");
        }
        let (qlo, qhi) = self.base_quality_range;
        if !(qlo > 0.0 && qhi >= qlo && qhi < 1.0) {
            return bad("base quality range must lie in (0, 1)");
        }
        if !(self.participation > 0.0) {
            return bad("participation must be positive");
        }
        if let Some(p) = &self.true_click_params {
            if p.len() != TrueClickParams::LEN {
                return bad("true click parameter vector has the wrong length");
            }
        }
        if let Some(t) = &self.page_templates {
            if t.is_empty() || t.iter().all(|t| t.total_capacity() == 0) {
                return bad("need at least one template with capacity");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvertiserSpec {
    pub id: u32,
    pub bid_mean: f64,
    pub bid_stddev: f64,
    pub base_quality: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryClass {
    pub id: u32,
    pub arrival_prob: f64,
    /// Relevance multiplier per advertiser, in [0, 2].
    pub relevance: Vec<f64>,
}

impl QueryClass {
    pub fn mean_relevance(&self) -> f64 {
        self.relevance.iter().sum::<f64>() / self.relevance.len() as f64
    }
}

/// Coefficients of the ground-truth logistic click function.
///
/// ```text
/// logit P(click) = intercept + relevance * logit(p) + slot * s + sidebar * [sb]
///                + sidebar_relevance * [sb] * logit(p) + class * ln(mean class multiplier)
/// ```
/// where `p` is the ad's relevance (its system pclick) and `s` the slot index
/// within its block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrueClickParams {
    pub intercept: f64,
    pub relevance: f64,
    pub slot: f64,
    pub sidebar: f64,
    pub sidebar_relevance: f64,
    pub class: f64,
}

impl TrueClickParams {
    pub const LEN: usize = 6;

    pub fn default_vec() -> Vec<f64> {
        vec![0.4, 1.0, -0.35, -0.8, -0.35, 0.8]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self {
            intercept: v[0],
            relevance: v[1],
            slot: v[2],
            sidebar: v[3],
            sidebar_relevance: v[4],
            class: v[5],
        }
    }
}

pub fn default_templates() -> Vec<PageTemplate> {
    let t = |id, ml, sb| PageTemplate {
        template_id: id,
        blocks: vec![Block::new(MAINLINE, ml), Block::new(SIDEBAR, sb)],
    };
    vec![t(0, 0, 3), t(1, 1, 3), t(2, 2, 3), t(3, 4, 2)]
}

/// Ground truth: advertisers, query mix and the true user click function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketplaceModel {
    pub advertisers: Vec<AdvertiserSpec>,
    pub query_classes: Vec<QueryClass>,
    pub true_click_params: Vec<f64>,
    pub page_templates: Vec<PageTemplate>,
    pub relevance_noise: f64,
    pub participation: f64,
    pub seed: u64,
}

pub fn generate_marketplace(config: &GeneratorConfig, seed: u64) -> Result<MarketplaceModel> {
    config.validate()?;
    let mut rng = rng_for(seed, "marketplace");
    let (blo, bhi) = config.bid_mean_range;
    let (qlo, qhi) = config.base_quality_range;
    let advertisers = (0..config.n_advertisers)
        .map(|i| {
            let bid_mean = rng.random_range(blo..=bhi);
            AdvertiserSpec {
                id: i as u32,
                bid_mean,
                bid_stddev: config.bid_cv * bid_mean,
                base_quality: rng.random_range(qlo..=qhi),
            }
        })
        .collect();
    let raw: Vec<f64> = (0..config.n_query_classes)
        .map(|_| rng.random_range(0.2..1.0))
        .collect();
    let total: f64 = raw.iter().sum();
    let mut query_classes: Vec<QueryClass> = raw
        .iter()
        .enumerate()
        .map(|(c, w)| QueryClass {
            id: c as u32,
            arrival_prob: w / total,
            relevance: (0..config.n_advertisers)
                .map(|_| rng.random_range(0.0..2.0))
                .collect(),
        })
        .collect();
    if query_classes.len() == 1 {
        query_classes[0].arrival_prob = 1.0;
    }
    Ok(MarketplaceModel {
        advertisers,
        query_classes,
        true_click_params: config
            .true_click_params
            .clone()
            .unwrap_or_else(TrueClickParams::default_vec),
        page_templates: config
            .page_templates
            .clone()
            .unwrap_or_else(default_templates),
        relevance_noise: config.relevance_noise,
        participation: config.participation,
        seed,
    })
}

impl MarketplaceModel {
    pub fn validate(&self) -> Result<()> {
        let s: f64 = self.query_classes.iter().map(|q| q.arrival_prob).sum();
        if self.query_classes.is_empty() || (s - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("arrival probabilities sum to {s}")));
        }
        if self.advertisers.is_empty()
            || self
                .advertisers
                .iter()
                .any(|a| !(a.bid_mean > 0.0) || !(a.base_quality > 0.0 && a.base_quality < 1.0))
        {
            return Err(Error::Config("invalid advertiser spec".into()));
        }
        if self.true_click_params.len() != TrueClickParams::LEN {
            return Err(Error::Config("true click parameter vector has the wrong length".into()));
        }
        Ok(())
    }

    pub fn click_params(&self) -> TrueClickParams {
        TrueClickParams::from_slice(&self.true_click_params)
    }

    /// True click probability of an ad with system pclick `pclick` shown in
    /// `slot` of a mainline or sidebar block for a query of `query_class`.
    pub fn true_click_prob(&self, query_class: u32, mainline: bool, slot: u32, pclick: f64) -> f64 {
        let t = self.click_params();
        let lp = logit(pclick.clamp(1e-9, 1.0 - 1e-9));
        let sb = if mainline { 0.0 } else { 1.0 };
        let class_mult = self
            .query_classes
            .get(query_class as usize)
            .map_or(1.0, QueryClass::mean_relevance)
            .max(1e-6);
        sigmoid(
            t.intercept
                + t.relevance * lp
                + t.slot * f64::from(slot)
                + t.sidebar * sb
                + t.sidebar_relevance * sb * lp
                + t.class * class_mult.ln(),
        )
    }

    /// A drifted copy: a common bid level shift, per-advertiser bid noise and
    /// a re-weighted query mix.
    pub fn perturbed(&self, seed: u64, bid_sd: f64, mix_sd: f64) -> MarketplaceModel {
        let mut rng = rng_for(seed, "perturb");
        let mut m = self.clone();
        let common: f64 = rng.sample::<f64, _>(StandardNormal) * bid_sd;
        for a in &mut m.advertisers {
            let own: f64 = rng.sample::<f64, _>(StandardNormal) * bid_sd * 0.5;
            let f = (common + own).exp();
            a.bid_mean *= f;
            a.bid_stddev *= f;
        }
        for q in &mut m.query_classes {
            let z: f64 = StandardNormal.sample(&mut rng);
            q.arrival_prob *= (z * mix_sd).exp();
        }
        let s: f64 = m.query_classes.iter().map(|q| q.arrival_prob).sum();
        for q in &mut m.query_classes {
            q.arrival_prob /= s;
        }
        m
    }
}

/// The true click function exposed through the click-model interface.
pub struct TrueClickModel<'a>(pub &'a MarketplaceModel);

impl ClickPredictor for TrueClickModel<'_> {
    fn predict(&self, f: &FeatureMap) -> Result<f64> {
        let num = |k: &str| match f.get(k) {
            Some(FeatureValue::Num(x)) => Ok(*x),
            _ => Err(Error::Schema(format!("true click model needs numeric `{k}`"))),
        };
        let cat = |k: &str| match f.get(k) {
            Some(FeatureValue::Cat(c)) => Ok(c.as_str()),
            _ => Err(Error::Schema(format!("true click model needs categorical `{k}`"))),
        };
        let qc: u32 = cat(F_QUERY_CLASS)?
            .trim_start_matches('q')
            .parse()
            .map_err(|_| Error::Schema("bad query class feature".into()))?;
        let mainline = cat(F_BLOCK)? == MAINLINE;
        Ok(self
            .0
            .true_click_prob(qc, mainline, num(F_POSITION)? as u32, num(F_PCLICK)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_class_has_unit_arrival() {
        let c = GeneratorConfig { n_advertisers: 1, n_query_classes: 1, ..Default::default() };
        let m = generate_marketplace(&c, 7).unwrap();
        assert_eq!(m.query_classes[0].arrival_prob, 1.0);
    }

    #[test]
    fn deterministic_per_seed() {
        let c = GeneratorConfig::default();
        assert_eq!(generate_marketplace(&c, 3).unwrap(), generate_marketplace(&c, 3).unwrap());
        assert_ne!(generate_marketplace(&c, 3).unwrap(), generate_marketplace(&c, 4).unwrap());
    }

    #[test]
    fn postconditions_over_many_seeds() {
        let c = GeneratorConfig { n_advertisers: 20, n_query_classes: 5, ..Default::default() };
        for seed in 0..100 {
            let m = generate_marketplace(&c, seed).unwrap();
            m.validate().unwrap();
            let s: f64 = m.query_classes.iter().map(|q| q.arrival_prob).sum();
            assert!((s - 1.0).abs() < 1e-9);
            assert!(m.advertisers.iter().all(|a| a.bid_mean > 0.0));
            assert!(m.advertisers.iter().all(|a| a.base_quality > 0.0 && a.base_quality < 1.0));
            assert!(m
                .query_classes
                .iter()
                .all(|q| q.relevance.iter().all(|r| (0.0..=2.0).contains(r))));
        }
    }

    #[test]
    fn invalid_configs() {
        for c in [
            GeneratorConfig { n_advertisers: 0, ..Default::default() },
            GeneratorConfig { n_query_classes: 0, ..Default::default() },
            GeneratorConfig { bid_cv: -0.1, ..Default::default() },
            GeneratorConfig { relevance_noise: -1.0, ..Default::default() },
        ] {
            assert!(matches!(generate_marketplace(&c, 1), Err(Error::Config(_))));
        }
    }

    #[test]
    fn perturbation_keeps_invariants() {
        let m = generate_marketplace(&GeneratorConfig::default(), 1).unwrap();
        let p = m.perturbed(9, 0.2, 0.3);
        p.validate().unwrap();
        assert_ne!(p.advertisers[0].bid_mean, m.advertisers[0].bid_mean);
    }
}
