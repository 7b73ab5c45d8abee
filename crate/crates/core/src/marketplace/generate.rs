//! Request and log generation from a [`MarketplaceModel`].
//!
//! Each request draws from its own RNG stream keyed by (seed, request id), so
//! the same request is reproduced under any policy: the policy only changes
//! how the drawn values are turned into bids and quality scores.

use rand::Rng;
use rayon::prelude::*;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::model::{MarketplaceModel, RELEVANCE_RANGE};
use crate::auction::{run_auction, AdRecord, AuctionData, PageAllocation};
use crate::error::{Error, Result};
use crate::policy::{PolicyConfig, BID_MULTIPLIER, QUALITY_EXPONENT};
use crate::rng::rng_indexed;

/// Switch from one logging policy to another part-way through a log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftSpec {
    /// Index of the first record generated under `drifted_policy`.
    pub drift_index: usize,
    pub drifted_policy: PolicyConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogDataset {
    pub records: Vec<AuctionData>,
    pub logging_policy: PolicyConfig,
    pub drift_spec: Option<DriftSpec>,
}

/// Build the (unallocated) auction input for request `request_id`.
pub fn build_request(
    model: &MarketplaceModel,
    policy: &PolicyConfig,
    seed: u64,
    request_id: u64,
) -> AuctionData {
    let mut rng = rng_indexed(seed, "request", request_id);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut class = model.query_classes.len() - 1;
    for (c, q) in model.query_classes.iter().enumerate() {
        acc += q.arrival_prob;
        if u < acc {
            class = c;
            break;
        }
    }
    let qc = &model.query_classes[class];
    let bid_mult = policy.get(BID_MULTIPLIER);
    let gamma = policy.get(QUALITY_EXPONENT);
    let noise = model.relevance_noise;

    let mut ads = Vec::new();
    let mut fallback: Option<(usize, AdRecord)> = None;
    for (a, adv) in model.advertisers.iter().enumerate() {
        // all draws happen unconditionally so streams stay aligned
        let enter: f64 = rng.random();
        let zb: f64 = rng.sample(StandardNormal);
        let zr: f64 = rng.sample(StandardNormal);
        let mult = qc.relevance[a];
        let s2 = (1.0 + (adv.bid_stddev / adv.bid_mean).powi(2)).ln();
        let raw_bid = (adv.bid_mean.ln() - s2 / 2.0 + s2.sqrt() * zb).exp();
        let relevance = (adv.base_quality * mult * (noise * zr - noise * noise / 2.0).exp())
            .clamp(RELEVANCE_RANGE.0, RELEVANCE_RANGE.1);
        let ad = AdRecord {
            ad_id: u64::from(adv.id),
            advertiser_id: adv.id,
            bid: raw_bid * bid_mult,
            pclick: relevance,
            quality: relevance.powf(gamma),
            metadata: Default::default(),
        };
        if enter < (model.participation * mult).min(1.0) {
            ads.push(ad);
        } else if fallback.as_ref().is_none_or(|(b, _)| qc.relevance[*b] < mult) {
            fallback = Some((a, ad));
        }
    }
    if ads.is_empty() {
        ads.extend(fallback.map(|(_, ad)| ad));
    }
    AuctionData {
        request_id,
        query_class: qc.id,
        ads,
        policy_params: policy.clone(),
        page_templates: model.page_templates.clone(),
        logged_allocation: PageAllocation::default(),
        logged_clicks: Vec::new(),
    }
}

/// Draw click outcomes for an allocation from the true click function.
pub fn sample_clicks(
    model: &MarketplaceModel,
    query_class: u32,
    alloc: &PageAllocation,
    seed: u64,
    request_id: u64,
) -> Vec<bool> {
    let mut rng = rng_indexed(seed, "clicks", request_id);
    alloc
        .placements
        .iter()
        .map(|p| {
            let pr = model.true_click_prob(query_class, p.is_mainline(), p.slot, p.pclick);
            rng.random::<f64>() < pr
        })
        .collect()
}

/// Generate one fully logged request: inputs, the logging policy's
/// allocation, and sampled clicks.
pub fn generate_request(
    model: &MarketplaceModel,
    policy: &PolicyConfig,
    seed: u64,
    request_id: u64,
) -> AuctionData {
    let mut data = build_request(model, policy, seed, request_id);
    data.logged_allocation = run_auction(&data);
    data.logged_clicks = sample_clicks(model, data.query_class, &data.logged_allocation, seed, request_id);
    data
}

/// Generate `n` logged requests with ids `0..n`.
///
/// Requests are generated in parallel; every request has its own stream, so
/// the output does not depend on the thread count.
pub fn generate_logs(
    model: &MarketplaceModel,
    policy: &PolicyConfig,
    n: usize,
    drift: Option<&DriftSpec>,
    seed: u64,
) -> Result<LogDataset> {
    generate_logs_from(model, policy, n, drift, seed, 0)
}

/// As [`generate_logs`], with ids `first_id..first_id + n`.
pub fn generate_logs_from(
    model: &MarketplaceModel,
    policy: &PolicyConfig,
    n: usize,
    drift: Option<&DriftSpec>,
    seed: u64,
    first_id: u64,
) -> Result<LogDataset> {
    model.validate()?;
    policy.validate()?;
    if n == 0 {
        return Err(Error::Config("need at least one request".into()));
    }
    if let Some(d) = drift {
        d.drifted_policy.validate()?;
        if d.drift_index > n {
            return Err(Error::Config(format!(
                "drift index {} beyond log length {n}",
                d.drift_index
            )));
        }
    }
    let records = (0..n)
        .into_par_iter()
        .map(|i| {
            let p = match drift {
                Some(d) if i >= d.drift_index => &d.drifted_policy,
                _ => policy,
            };
            generate_request(model, p, seed, first_id + i as u64)
        })
        .collect();
    Ok(LogDataset {
        records,
        logging_policy: policy.clone(),
        drift_spec: drift.cloned(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auction::replay_check;
    use crate::marketplace::{generate_marketplace, GeneratorConfig};
    use crate::policy::RESERVE_SCORE;

    fn market() -> MarketplaceModel {
        generate_marketplace(&GeneratorConfig::default(), 11).unwrap()
    }

    #[test]
    fn requests_are_policy_aligned() {
        let m = market();
        let p0 = PolicyConfig::default();
        let p1 = PolicyConfig::new([(BID_MULTIPLIER, 2.0), (QUALITY_EXPONENT, 1.5)]).unwrap();
        for id in 0..50 {
            let a = build_request(&m, &p0, 3, id);
            let b = build_request(&m, &p1, 3, id);
            assert_eq!(a.query_class, b.query_class);
            assert_eq!(a.ads.len(), b.ads.len());
            for (x, y) in a.ads.iter().zip(&b.ads) {
                assert_eq!(x.ad_id, y.ad_id);
                assert_eq!(x.pclick, y.pclick);
                assert!((y.bid - 2.0 * x.bid).abs() < 1e-12 * y.bid);
                assert!((y.quality - x.pclick.powf(1.5)).abs() < 1e-15);
            }
            assert!(!a.ads.is_empty());
        }
    }

    #[test]
    fn logs_replay_exactly() {
        let m = market();
        let logs = generate_logs(&m, &PolicyConfig::default(), 300, None, 5).unwrap().records;
        let acc = replay_check(&logs);
        assert_eq!(acc.accuracy, 1.0);
        for r in &logs {
            assert_eq!(r.logged_clicks.len(), r.logged_allocation.placements.len());
        }
    }

    #[test]
    fn drift_switches_policy() {
        let m = market();
        let d = DriftSpec {
            drift_index: 10,
            drifted_policy: PolicyConfig::new([(RESERVE_SCORE, 0.05)]).unwrap(),
        };
        let logs = generate_logs_from(&m, &PolicyConfig::default(), 20, Some(&d), 5, 100)
            .unwrap()
            .records;
        assert_eq!(logs[9].policy_params.get(RESERVE_SCORE), 0.0);
        assert_eq!(logs[10].policy_params.get(RESERVE_SCORE), 0.05);
        assert_eq!(logs[0].request_id, 100);
        assert_eq!(replay_check(&logs).accuracy, 1.0);
        let bad = DriftSpec { drift_index: 21, ..d };
        assert!(generate_logs(&m, &PolicyConfig::default(), 20, Some(&bad), 5).is_err());
        assert!(generate_logs(&m, &PolicyConfig::default(), 0, None, 5).is_err());
    }

    #[test]
    fn deterministic() {
        let m = market();
        let a = generate_logs(&m, &PolicyConfig::default(), 50, None, 8).unwrap();
        let b = generate_logs(&m, &PolicyConfig::default(), 50, None, 8).unwrap();
        assert_eq!(a, b);
    }
}
