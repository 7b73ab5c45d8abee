//! Shared generators and independent oracles for the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use openbox_core::auction::{AdRecord, AuctionData, Block, PageAllocation, PageTemplate, Placement};
use openbox_core::cube::{default_dimensions, CellCounters, DataCube, KpiRecord};
use openbox_core::policy::{GridPoint, PolicyConfig};
use proptest::prelude::*;

/// Bids and qualities from small grids so rank-score ties are common.
fn arb_ad(id: u64) -> impl Strategy<Value = AdRecord> {
    (1u32..=8, 1u32..=6, prop::bool::ANY).prop_map(move |(b, q, fine)| {
        let bid = if fine { b as f64 * 0.37 } else { b as f64 * 0.5 };
        let pclick = q as f64 * 0.05;
        AdRecord {
            ad_id: id,
            advertiser_id: id as u32,
            bid,
            pclick,
            quality: pclick,
            metadata: BTreeMap::new(),
        }
    })
}

fn arb_block(mainline: bool) -> impl Strategy<Value = Block> {
    (0u32..=3, 0u32..=3).prop_map(move |(cap, m)| Block {
        name: if mainline { "mainline" } else { "sidebar" }.into(),
        capacity: cap,
        min_pclick: m as f64 * 0.05,
    })
}

fn arb_template(id: u32) -> impl Strategy<Value = PageTemplate> {
    (arb_block(true), arb_block(false), 0u8..3).prop_map(move |(ml, sb, shape)| PageTemplate {
        template_id: id,
        blocks: match shape {
            0 => vec![ml, sb],
            1 => vec![ml],
            _ => vec![sb],
        },
    })
}

pub fn arb_policy() -> impl Strategy<Value = PolicyConfig> {
    (0u32..=4, 0u32..=3, 0u32..=4, prop::option::of(0u32..=3)).prop_map(|(r, m, g, cap)| {
        let mut p = PolicyConfig::default();
        p.set("reserve_score", r as f64 * 0.05).unwrap();
        p.set("mainline_min_pclick", m as f64 * 0.05).unwrap();
        p.set("quality_exponent", 0.5 + g as f64 * 0.25).unwrap();
        if let Some(c) = cap {
            p.set("mainline_capacity", c as f64).unwrap();
        }
        p
    })
}

/// Random request: up to 5 ads with shuffled ids, up to 3 templates.
pub fn arb_auction() -> impl Strategy<Value = AuctionData> {
    let ads = (0usize..=5).prop_flat_map(|n| {
        (Just(n), prop::collection::vec(0u64..1000, n))
            .prop_flat_map(|(n, salt)| {
                let ids: Vec<u64> = (0..n as u64).map(|i| i * 1000 + salt[i as usize]).rev().collect();
                ids.into_iter().map(arb_ad).collect::<Vec<_>>()
            })
    });
    let templates = (1u32..=3)
        .prop_flat_map(|k| (0..k).map(|i| arb_template(i * 7 % 5)).collect::<Vec<_>>());
    (ads, templates, arb_policy(), any::<u64>()).prop_map(|(mut ads, templates, policy, rid)| {
        let g = policy.get("quality_exponent");
        for a in &mut ads {
            a.quality = a.pclick.powf(g);
        }
        AuctionData {
            request_id: rid,
            query_class: (rid % 4) as u32,
            ads,
            policy_params: policy,
            page_templates: templates,
            logged_allocation: PageAllocation::default(),
            logged_clicks: vec![],
        }
    })
}

/// Independent allocator: every slot scans all ads for the best eligible one
/// and the best remaining eligible runner-up; every template is tried and the
/// best utility (lowest id on ties) kept.
pub fn brute_force(data: &AuctionData) -> PageAllocation {
    let p = &data.policy_params;
    let reserve = p.get("reserve_score");
    let better = |a: &AdRecord, b: &AdRecord| {
        let (ua, ub) = (a.bid * a.quality, b.bid * b.quality);
        ua > ub || (ua == ub && a.ad_id < b.ad_id)
    };
    let mut best: Option<PageAllocation> = None;
    for t in &data.page_templates {
        let mut used: Vec<u64> = Vec::new();
        let mut placements = Vec::new();
        let mut utility = 0.0;
        for b in &t.blocks {
            let (cap, minp) = if b.name == "mainline" {
                let c = p.get("mainline_capacity").floor() as u32;
                (b.capacity.min(c), b.min_pclick.max(p.get("mainline_min_pclick")))
            } else {
                (b.capacity, b.min_pclick)
            };
            let ok = |a: &AdRecord| a.bid * a.quality >= reserve && a.pclick >= minp;
            for slot in 0..cap {
                let pick = |skip: &[u64]| {
                    data.ads
                        .iter()
                        .filter(|a| ok(a) && !skip.contains(&a.ad_id))
                        .fold(None::<&AdRecord>, |m, a| match m {
                            Some(m) if !better(a, m) => Some(m),
                            _ => Some(a),
                        })
                };
                let Some(w) = pick(&used) else { break };
                used.push(w.ad_id);
                let pricing = pick(&used).map_or(reserve, |r| r.bid * r.quality);
                let cpc = if w.quality > 0.0 { (pricing / w.quality).max(0.0).min(w.bid) } else { 0.0 };
                utility += w.bid * w.quality;
                placements.push(Placement {
                    block: b.name.clone(),
                    slot,
                    ad_id: w.ad_id,
                    rank_score: w.bid * w.quality,
                    pricing_score: pricing,
                    pclick: w.pclick,
                    cpc,
                });
            }
        }
        let cand = PageAllocation { template_id: t.template_id, placements, utility };
        let take = match &best {
            None => true,
            Some(b) => cand.utility > b.utility || (cand.utility == b.utility && cand.template_id < b.template_id),
        };
        if take {
            best = Some(cand);
        }
    }
    best.unwrap_or_default()
}

pub fn arb_grid_point() -> impl Strategy<Value = GridPoint> {
    (
        prop::option::of(0.25f64..4.0),
        prop::option::of(0.0f64..0.5),
        prop::option::of(0.0f64..0.3),
        prop::option::of(0.3f64..2.5),
        prop::option::of(0u32..5),
    )
        .prop_map(|(bm, r, m, g, c)| {
            let mut s: Vec<(&str, f64)> = Vec::new();
            if let Some(v) = bm { s.push(("bid_multiplier", v)); }
            if let Some(v) = r { s.push(("reserve_score", v)); }
            if let Some(v) = m { s.push(("mainline_min_pclick", v)); }
            if let Some(v) = g { s.push(("quality_exponent", v)); }
            if let Some(v) = c { s.push(("mainline_capacity", v as f64)); }
            GridPoint::new(1, s).unwrap()
        })
}

pub fn arb_record() -> impl Strategy<Value = KpiRecord> {
    (0u32..4, 0u64..1000, 0u32..3, 0u32..4, 0u64..6, 0u64..4, 0i64..2_000_000, 0i64..5_000_000).prop_map(
        |(g, rid, qc, t, imp, ml, clk, rev)| KpiRecord {
            grid_id: g,
            request_id: rid,
            query_class: qc,
            template_id: t,
            counters: CellCounters {
                requests: 1,
                impressions: imp,
                mainline_impressions: ml.min(imp),
                expected_clicks_micros: clk,
                revenue_micros: rev,
            },
        },
    )
}

pub fn arb_cube() -> impl Strategy<Value = DataCube> {
    prop::collection::vec(arb_record(), 0..12).prop_map(|rs| DataCube::from_records(default_dimensions(), &rs))
}

