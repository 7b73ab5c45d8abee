//! Property tests for the auction, modifiers, cube algebra, importance
//! weights and the regression explorer.

mod common;

use std::collections::BTreeMap;

use openbox_core::auction::{run_auction, simulate_request, Modifier};
use openbox_core::baseline::{importance_weights, weighted_estimate, ProposalDistribution, RandomizationSpec, TruncatedGaussian};
use openbox_core::click::{ClickPredictor, FeatureMap};
use openbox_core::cube::{default_dimensions, merge_cubes, CellCounters, DataCube};
use openbox_core::explore::{explore, fit_regression, poly_feature_names, poly_features, DimRange, ModelSpec, RegressionKind};
use openbox_core::policy::GridPoint;
use proptest::prelude::*;

use common::{arb_auction, arb_cube, arb_grid_point, arb_record, brute_force};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn gsp_matches_brute_force(d in arb_auction()) {
        let fast = run_auction(&d);
        let slow = brute_force(&d);
        prop_assert_eq!(&fast, &slow);
    }

    #[test]
    fn gsp_prices_bounded_by_bids(d in arb_auction()) {
        for p in &run_auction(&d).placements {
            let ad = d.ad(p.ad_id).unwrap();
            prop_assert!(p.cpc >= 0.0 && p.cpc <= ad.bid);
            prop_assert!(p.pricing_score <= p.rank_score);
        }
    }
}

fn bits(d: &openbox_core::auction::AuctionData) -> Vec<u64> {
    let mut v: Vec<u64> = d.ads.iter().flat_map(|a| [a.bid.to_bits(), a.quality.to_bits(), a.pclick.to_bits()]).collect();
    v.extend(d.policy_params.knobs.values().map(|x| x.to_bits()));
    v
}

struct Half;

impl ClickPredictor for Half {
    fn predict(&self, _: &FeatureMap) -> openbox_core::Result<f64> {
        Ok(0.5)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn apply_then_restore_is_bit_exact(mut d in arb_auction(), g in arb_grid_point()) {
        let before = d.clone();
        let before_bits = bits(&d);
        let r = Modifier::new(g).unwrap().apply(&mut d).unwrap();
        r.restore(&mut d);
        prop_assert_eq!(&d, &before);
        prop_assert_eq!(bits(&d), before_bits);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn simulate_request_follows_grid_order(mut d in arb_auction(), gs in prop::collection::vec(arb_grid_point(), 1..5)) {
        let grid: Vec<GridPoint> = gs.into_iter().enumerate().map(|(i, mut g)| { g.id = 10 - i as u32; g }).collect();
        let before = d.clone();
        let out = simulate_request(&mut d, &grid, &Half).unwrap();
        let ids: Vec<u32> = out.iter().map(|o| o.grid_point.id).collect();
        let mut want = vec![0];
        want.extend(grid.iter().map(|g| g.id));
        prop_assert_eq!(ids, want);
        prop_assert_eq!(d, before);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn cube_merge_is_a_commutative_monoid(a in arb_cube(), b in arb_cube(), c in arb_cube()) {
        let e = DataCube::empty(default_dimensions());
        prop_assert_eq!(merge_cubes(&a, &e).unwrap(), a.clone());
        prop_assert_eq!(merge_cubes(&e, &a).unwrap(), a.clone());
        prop_assert_eq!(merge_cubes(&a, &b).unwrap(), merge_cubes(&b, &a).unwrap());
        prop_assert_eq!(
            merge_cubes(&merge_cubes(&a, &b).unwrap(), &c).unwrap(),
            merge_cubes(&a, &merge_cubes(&b, &c).unwrap()).unwrap()
        );
    }

    #[test]
    fn aggregation_is_order_independent(rs in prop::collection::vec(arb_record(), 0..40), seed in any::<u64>(), split in 0usize..40) {
        let whole = DataCube::from_records(default_dimensions(), &rs);
        let mut shuffled = rs.clone();
        use rand::{seq::SliceRandom, SeedableRng};
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let k = split.min(shuffled.len());
        let left = DataCube::from_records(default_dimensions(), &shuffled[..k]);
        let right = DataCube::from_records(default_dimensions(), &shuffled[k..]);
        prop_assert_eq!(merge_cubes(&right, &left).unwrap(), whole.clone());
        // the grand total equals the plain sum of the records
        let mut t = CellCounters::default();
        for r in &rs { t.add(&r.counters); }
        prop_assert_eq!(whole.total(), t);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn weights_positive_and_ess_at_most_n(
        xs in prop::collection::vec(0.02f64..0.14, 1..200),
        target in 0.03f64..0.13,
        scale in 0.3f64..1.5,
        ys in prop::collection::vec(0.0f64..5.0, 200),
    ) {
        let g = TruncatedGaussian::new(0.08, 0.02, 0.02, 0.14).unwrap();
        let spec = RandomizationSpec { base_policy: Default::default(), knobs: BTreeMap::from([("reserve_score".to_string(), g)]) };
        let p = ProposalDistribution::centered(&spec, &BTreeMap::from([("reserve_score".to_string(), target)]), scale).unwrap();
        let logs: Vec<_> = xs.iter().enumerate().map(|(i, x)| {
            let mut d = openbox_core::auction::AuctionData {
                request_id: i as u64, query_class: 0, ads: vec![], policy_params: Default::default(),
                page_templates: vec![], logged_allocation: Default::default(), logged_clicks: vec![],
            };
            d.policy_params.set("reserve_score", *x).unwrap();
            d
        }).collect();
        let w = importance_weights(&logs, &spec, &p).unwrap();
        prop_assert!(w.iter().all(|w| *w > 0.0 && w.is_finite()));
        let e = weighted_estimate(&w, &ys[..w.len()], false).unwrap();
        prop_assert!(e.ess <= w.len() as f64 * (1.0 + 1e-12));
        prop_assert!(e.ess >= 1.0 - 1e-12);
    }

    #[test]
    fn ridge_at_zero_lambda_is_ols(pts in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0, -5.0f64..5.0), 12..40)) {
        let x: Vec<Vec<f64>> = pts.iter().map(|p| vec![p.0, p.1]).collect();
        let y: Vec<f64> = pts.iter().map(|p| p.2).collect();
        let ols = fit_regression(&x, &y, &ModelSpec { kind: RegressionKind::Linear, degree: 1, lambda: 0.0 }, "y");
        let ridge = fit_regression(&x, &y, &ModelSpec { kind: RegressionKind::Ridge, degree: 1, lambda: 0.0 }, "y");
        match (ols, ridge) {
            (Ok(a), Ok(b)) => {
                // independent oracle: normal equations on the raw design by Cramer's rule
                let n = x.len() as f64;
                let (mut sa, mut sb, mut saa, mut sab, mut sbb, mut sy, mut say, mut sby) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
                for (r, v) in x.iter().zip(&y) {
                    sa += r[0]; sb += r[1]; saa += r[0] * r[0]; sab += r[0] * r[1]; sbb += r[1] * r[1];
                    sy += v; say += r[0] * v; sby += r[1] * v;
                }
                let m = nalgebra::Matrix3::new(n, sa, sb, sa, saa, sab, sb, sab, sbb);
                let rhs = nalgebra::Vector3::new(sy, say, sby);
                if let Some(sol) = m.lu().solve(&rhs) {
                    for j in 0..3 {
                        prop_assert!((a.coefficients[j] - b.coefficients[j]).abs() < 1e-9);
                        prop_assert!((a.coefficients[j] - sol[j]).abs() < 1e-6 * (1.0 + sol[j].abs()));
                    }
                }
            }
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "ridge at lambda 0 and OLS disagree on solvability"),
        }
    }

    #[test]
    fn poly_feature_count_is_binomial(k in 1usize..5, d in 0u32..5, x in prop::collection::vec(-3.0f64..3.0, 5)) {
        let f = poly_features(&x[..k], d);
        // C(k + d, d)
        let mut c = 1u64;
        for i in 0..d as u64 { c = c * (k as u64 + i + 1) / (i + 1); }
        prop_assert_eq!(f.len() as u64, c);
        prop_assert_eq!(f[0], 1.0);
        let names: Vec<String> = (0..k).map(|i| format!("x{i}")).collect();
        prop_assert_eq!(poly_feature_names(&names, d).len() as u64, c);
    }

    #[test]
    fn explored_candidates_stay_in_range(
        bounds in prop::collection::vec((-5.0f64..5.0, 0.0f64..3.0), 1..4),
        pop in 1usize..200,
        seed in any::<u64>(),
    ) {
        let ranges: Vec<DimRange> = bounds.iter().enumerate()
            .map(|(i, (lo, w))| DimRange { knob: format!("k{i}"), min: *lo, max: lo + w })
            .collect();
        let start = vec![ranges.iter().map(|r| r.min).collect::<Vec<f64>>()];
        let out = explore(&start, pop, &ranges, seed);
        prop_assert_eq!(out.len(), pop);
        for c in &out {
            for (v, r) in c.iter().zip(&ranges) {
                prop_assert!(*v >= r.min && *v <= r.max);
            }
        }
        prop_assert_eq!(out, explore(&start, pop, &ranges, seed));
    }
}
