//! Brute-force ground truth: KPIs computed with the true click function.

use rayon::prelude::*;

use super::generate::build_request;
use super::model::{MarketplaceModel, TrueClickModel};
use crate::auction::{recalibrate, run_auction};
use crate::cube::{default_dimensions, DataCube, KpiRecord};
use crate::error::{Error, Result};
use crate::policy::{PolicyConfig, BASELINE_GRID_ID};

/// Per-request true-KPI records for requests `first_id..first_id + n` served
/// under `policy`, tagged with `grid_id`.
pub fn ground_truth_records(
    model: &MarketplaceModel,
    policy: &PolicyConfig,
    n: usize,
    seed: u64,
    first_id: u64,
    grid_id: u32,
) -> Result<Vec<KpiRecord>> {
    model.validate()?;
    policy.validate()?;
    if n == 0 {
        return Err(Error::Config("need at least one request".into()));
    }
    let truth = TrueClickModel(model);
    (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let data = build_request(model, policy, seed, first_id + i);
            let mut alloc = run_auction(&data);
            recalibrate(&mut alloc, data.query_class, &truth)?;
            Ok(KpiRecord::new(grid_id, &data, &alloc))
        })
        .collect()
}

/// True-KPI cube over the default dimensions, with every request under grid
/// point 0.
pub fn ground_truth_kpi(
    model: &MarketplaceModel,
    policy: &PolicyConfig,
    n: usize,
    seed: u64,
) -> Result<DataCube> {
    let records = ground_truth_records(model, policy, n, seed, 0, BASELINE_GRID_ID)?;
    Ok(DataCube::from_records(default_dimensions(), &records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auction::simulate_dataset;
    use crate::marketplace::{generate_logs, generate_marketplace, GeneratorConfig};
    use crate::policy::{BID_MULTIPLIER, RESERVE_SCORE};

    fn market() -> MarketplaceModel {
        generate_marketplace(&GeneratorConfig::default(), 21).unwrap()
    }

    #[test]
    fn matches_logged_dataset_under_truth() {
        let m = market();
        let p = PolicyConfig::new([(RESERVE_SCORE, 0.02)]).unwrap();
        let mut logs = generate_logs(&m, &p, 400, None, 9).unwrap().records;
        let sim = simulate_dataset(&mut logs, &[], &TrueClickModel(&m), &default_dimensions(), 2)
            .unwrap();
        assert!(sim.errors.is_empty());
        assert_eq!(sim.cube, ground_truth_kpi(&m, &p, 400, 9).unwrap());
    }

    #[test]
    fn identity_bid_multiplier() {
        let m = market();
        let a = ground_truth_kpi(&m, &PolicyConfig::default(), 200, 3).unwrap();
        let b = ground_truth_kpi(&m, &PolicyConfig::new([(BID_MULTIPLIER, 1.0)]).unwrap(), 200, 3)
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn doubling_bids_doubles_revenue_without_reserve() {
        let m = market();
        let a = ground_truth_kpi(&m, &PolicyConfig::default(), 300, 4).unwrap().total();
        let b = ground_truth_kpi(&m, &PolicyConfig::new([(BID_MULTIPLIER, 2.0)]).unwrap(), 300, 4)
            .unwrap()
            .total();
        assert_eq!(a.impressions, b.impressions);
        assert_eq!(a.expected_clicks_micros, b.expected_clicks_micros);
        // per-placement micro rounding allows one unit of slack per impression
        let slack = b.impressions as f64 * 1e-6;
        assert!((b.revenue() - 2.0 * a.revenue()).abs() <= slack * 3.0);
    }
}
