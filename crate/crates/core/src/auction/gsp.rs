//! Generalized second-price allocation over candidate page templates.
//!
//! Ads are ranked by `bid * quality`. Each template is filled greedily block by
//! block, slot by slot: the winner is the best-ranked eligible ad not yet on the
//! page, and the slot's pricing score is the rank score of the next eligible ad
//! (or the reserve when there is none). The template with the highest total
//! rank score wins; ties go to the lowest template id.

use std::cmp::Ordering;

use super::types::{AdRecord, AuctionData, Block, PageAllocation, PageTemplate, Placement};
use crate::policy::{PolicyConfig, MAINLINE_CAPACITY, MAINLINE_MIN_PCLICK, RESERVE_SCORE};

/// Block constraints after applying policy knobs.
#[derive(Debug, Clone, Copy)]
pub(crate) struct BlockRule {
    pub capacity: u32,
    pub min_pclick: f64,
    pub reserve: f64,
}

pub(crate) fn block_rule(block: &Block, policy: &PolicyConfig) -> BlockRule {
    let reserve = policy.get(RESERVE_SCORE);
    if block.is_mainline() {
        let cap = policy.get(MAINLINE_CAPACITY).floor().max(0.0) as u32;
        BlockRule {
            capacity: block.capacity.min(cap),
            min_pclick: block.min_pclick.max(policy.get(MAINLINE_MIN_PCLICK)),
            reserve,
        }
    } else {
        BlockRule {
            capacity: block.capacity,
            min_pclick: block.min_pclick,
            reserve,
        }
    }
}

pub(crate) fn eligible(ad: &AdRecord, rule: &BlockRule) -> bool {
    ad.rank_score() >= rule.reserve && ad.pclick >= rule.min_pclick
}

/// Indices of `ads` sorted by rank score descending, then ad id ascending.
pub fn rank_order(ads: &[AdRecord]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..ads.len()).collect();
    idx.sort_by(|&a, &b| {
        ads[b]
            .rank_score()
            .partial_cmp(&ads[a].rank_score())
            .unwrap_or(Ordering::Equal)
            .then(ads[a].ad_id.cmp(&ads[b].ad_id))
    });
    idx
}

pub(crate) fn price(pricing_score: f64, winner: &AdRecord) -> f64 {
    if winner.quality > 0.0 {
        (pricing_score / winner.quality).clamp(0.0, winner.bid)
    } else {
        0.0
    }
}

/// Greedy fill of one template given the ranked ad order.
pub fn fill_template(
    ads: &[AdRecord],
    order: &[usize],
    template: &PageTemplate,
    policy: &PolicyConfig,
) -> PageAllocation {
    let mut placed = vec![false; ads.len()];
    let mut placements = Vec::new();
    let mut utility = 0.0;
    for block in &template.blocks {
        let rule = block_rule(block, policy);
        for slot in 0..rule.capacity {
            let mut candidates = order
                .iter()
                .copied()
                .filter(|&i| !placed[i] && eligible(&ads[i], &rule));
            let Some(w) = candidates.next() else { break };
            let pricing_score = candidates
                .next()
                .map(|r| ads[r].rank_score())
                .unwrap_or(rule.reserve);
            let winner = &ads[w];
            placed[w] = true;
            let rank_score = winner.rank_score();
            utility += rank_score;
            placements.push(Placement {
                block: block.name.clone(),
                slot,
                ad_id: winner.ad_id,
                rank_score,
                pricing_score,
                pclick: winner.pclick,
                cpc: price(pricing_score, winner),
            });
        }
    }
    PageAllocation {
        template_id: template.template_id,
        placements,
        utility,
    }
}

/// Run the auction on `data` under its own policy parameters.
pub fn run_auction(data: &AuctionData) -> PageAllocation {
    let order = rank_order(&data.ads);
    let mut best: Option<PageAllocation> = None;
    for template in &data.page_templates {
        let alloc = fill_template(&data.ads, &order, template, &data.policy_params);
        let better = match &best {
            None => true,
            Some(b) => {
                alloc.utility > b.utility
                    || (alloc.utility == b.utility && alloc.template_id < b.template_id)
            }
        };
        if better {
            best = Some(alloc);
        }
    }
    best.unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::PolicyConfig;
    use std::collections::BTreeMap;

    fn ad(id: u64, bid: f64, q: f64) -> AdRecord {
        AdRecord {
            ad_id: id,
            advertiser_id: id as u32,
            bid,
            pclick: q,
            quality: q,
            metadata: BTreeMap::new(),
        }
    }

    fn data(ads: Vec<AdRecord>, templates: Vec<PageTemplate>, reserve: f64) -> AuctionData {
        AuctionData {
            request_id: 1,
            query_class: 0,
            ads,
            policy_params: PolicyConfig::new([(RESERVE_SCORE, reserve)]).unwrap(),
            page_templates: templates,
            logged_allocation: PageAllocation::default(),
            logged_clicks: vec![],
        }
    }

    fn one_slot() -> Vec<PageTemplate> {
        vec![PageTemplate {
            template_id: 0,
            blocks: vec![Block::new("mainline", 1)],
        }]
    }

    #[test]
    fn two_ad_second_price() {
        let d = data(vec![ad(1, 2.0, 0.1), ad(2, 1.0, 0.1)], one_slot(), 0.0);
        let a = run_auction(&d);
        assert_eq!(a.placements.len(), 1);
        let p = &a.placements[0];
        assert_eq!(p.ad_id, 1);
        assert!((p.pricing_score - 0.1).abs() < 1e-15);
        assert!((p.cpc - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_ad_pays_reserve() {
        let d = data(vec![ad(1, 2.0, 0.1)], one_slot(), 0.0);
        let a = run_auction(&d);
        assert_eq!(a.placements[0].cpc, 0.0);
        let d = data(vec![ad(1, 2.0, 0.1)], one_slot(), 0.05);
        let a = run_auction(&d);
        assert!((a.placements[0].cpc - 0.5).abs() < 1e-12);
    }

    #[test]
    fn nothing_eligible_gives_empty_allocation() {
        let d = data(vec![ad(1, 1.0, 0.1)], one_slot(), 5.0);
        let a = run_auction(&d);
        assert!(a.is_empty());
        assert_eq!(a.utility, 0.0);
    }

    #[test]
    fn ties_broken_by_ad_id() {
        let d = data(vec![ad(9, 1.0, 0.1), ad(3, 1.0, 0.1)], one_slot(), 0.0);
        assert_eq!(run_auction(&d).placements[0].ad_id, 3);
    }

    #[test]
    fn template_ties_go_to_lowest_id() {
        let t = vec![
            PageTemplate {
                template_id: 5,
                blocks: vec![Block::new("mainline", 1)],
            },
            PageTemplate {
                template_id: 2,
                blocks: vec![Block::new("sidebar", 1)],
            },
        ];
        let d = data(vec![ad(1, 1.0, 0.2)], t, 0.0);
        assert_eq!(run_auction(&d).template_id, 2);
    }

    #[test]
    fn mainline_min_pclick_pushes_ads_to_sidebar() {
        let t = vec![PageTemplate {
            template_id: 0,
            blocks: vec![Block::new("mainline", 2), Block::new("sidebar", 2)],
        }];
        let mut d = data(
            vec![ad(1, 1.0, 0.3), ad(2, 5.0, 0.05), ad(3, 1.0, 0.2)],
            t,
            0.0,
        );
        d.policy_params.set(MAINLINE_MIN_PCLICK, 0.1).unwrap();
        let a = run_auction(&d);
        let ml: Vec<u64> = a
            .placements
            .iter()
            .filter(|p| p.is_mainline())
            .map(|p| p.ad_id)
            .collect();
        assert_eq!(ml, vec![1, 3]);
        // runner-up for the first mainline slot is ad 3, not the ineligible ad 2
        assert!((a.placements[0].pricing_score - 0.2).abs() < 1e-15);
        assert_eq!(a.placements[2].ad_id, 2);
    }
}
