use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::policy::PolicyConfig;

pub const MAINLINE: &str = "mainline";
pub const SIDEBAR: &str = "sidebar";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdRecord {
    pub ad_id: u64,
    pub advertiser_id: u32,
    /// Effective bid in currency per click.
    pub bid: f64,
    /// System click probability estimate.
    pub pclick: f64,
    /// Click quality score; `pclick ^ quality_exponent` under the active policy.
    pub quality: f64,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl AdRecord {
    pub fn rank_score(&self) -> f64 {
        self.bid * self.quality
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub name: String,
    pub capacity: u32,
    #[serde(default)]
    pub min_pclick: f64,
}

impl Block {
    pub fn new(name: &str, capacity: u32) -> Self {
        Self {
            name: name.to_string(),
            capacity,
            min_pclick: 0.0,
        }
    }

    pub fn is_mainline(&self) -> bool {
        self.name == MAINLINE
    }
}

/// A candidate page layout; blocks are ordered most significant first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageTemplate {
    pub template_id: u32,
    pub blocks: Vec<Block>,
}

impl PageTemplate {
    pub fn total_capacity(&self) -> u32 {
        self.blocks.iter().map(|b| b.capacity).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub block: String,
    pub slot: u32,
    pub ad_id: u64,
    pub rank_score: f64,
    pub pricing_score: f64,
    /// Click probability; the system pclick at auction time, the click
    /// model's estimate after re-calibration.
    pub pclick: f64,
    pub cpc: f64,
}

impl Placement {
    pub fn is_mainline(&self) -> bool {
        self.block == MAINLINE
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct PageAllocation {
    pub template_id: u32,
    pub placements: Vec<Placement>,
    pub utility: f64,
}

impl PageAllocation {
    pub fn is_empty(&self) -> bool {
        self.placements.is_empty()
    }

    /// Equality on everything the auction decides: template, ads, order,
    /// pricing scores and prices.
    pub fn same_outcome(&self, other: &PageAllocation) -> bool {
        self.template_id == other.template_id
            && self.placements.len() == other.placements.len()
            && self
                .placements
                .iter()
                .zip(&other.placements)
                .all(|(a, b)| {
                    a.block == b.block
                        && a.slot == b.slot
                        && a.ad_id == b.ad_id
                        && a.rank_score == b.rank_score
                        && a.pricing_score == b.pricing_score
                        && a.cpc == b.cpc
                })
    }
}

/// One logged request, reconstructed into the form the auction consumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuctionData {
    pub request_id: u64,
    pub query_class: u32,
    pub ads: Vec<AdRecord>,
    pub policy_params: PolicyConfig,
    pub page_templates: Vec<PageTemplate>,
    pub logged_allocation: PageAllocation,
    /// Observed click outcome per logged placement, in placement order.
    #[serde(default)]
    pub logged_clicks: Vec<bool>,
}

impl AuctionData {
    pub fn ad(&self, ad_id: u64) -> Option<&AdRecord> {
        self.ads.iter().find(|a| a.ad_id == ad_id)
    }
}
