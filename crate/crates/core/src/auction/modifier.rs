//! In-place modification of auction data for a grid point, with an exact undo.
//!
//! `bid_multiplier` scales the logged bids. `quality_exponent` recomputes every
//! ad's quality from its pclick. All other knobs are assigned directly in the
//! request's policy parameters. The restorer keeps the original values rather
//! than inverting the mutation, so restore is bit-exact.

use super::types::AuctionData;
use crate::error::{Error, Result};
use crate::policy::{GridPoint, BID_MULTIPLIER, QUALITY_EXPONENT};
use crate::policy::PolicyConfig;

#[derive(Debug, Clone)]
pub struct Modifier {
    pub grid_point: GridPoint,
}

/// Undo record returned by [`Modifier::apply`].
#[derive(Debug)]
#[must_use = "auction data stays modified until the restorer runs"]
pub struct Restorer {
    bids: Option<Vec<f64>>,
    qualities: Option<Vec<f64>>,
    policy: Option<PolicyConfig>,
}

impl Modifier {
    pub fn new(grid_point: GridPoint) -> Result<Self> {
        grid_point.validate()?;
        Ok(Self { grid_point })
    }

    pub fn apply(&self, data: &mut AuctionData) -> Result<Restorer> {
        let setting = &self.grid_point.setting;
        let mut restorer = Restorer {
            bids: None,
            qualities: None,
            policy: None,
        };
        if setting.is_empty() {
            return Ok(restorer);
        }
        // validate the whole setting before touching anything
        let mut policy = data.policy_params.clone();
        for (k, v) in setting {
            if k == BID_MULTIPLIER {
                policy.set(k, data.policy_params.get(k) * v)?;
            } else {
                policy.set(k, *v)?;
            }
        }
        restorer.policy = Some(std::mem::replace(&mut data.policy_params, policy));
        if let Some(m) = setting.get(BID_MULTIPLIER) {
            restorer.bids = Some(data.ads.iter().map(|a| a.bid).collect());
            for ad in &mut data.ads {
                ad.bid *= m;
            }
        }
        if let Some(g) = setting.get(QUALITY_EXPONENT) {
            restorer.qualities = Some(data.ads.iter().map(|a| a.quality).collect());
            for ad in &mut data.ads {
                ad.quality = ad.pclick.powf(*g);
            }
        }
        Ok(restorer)
    }
}

impl Restorer {
    pub fn is_noop(&self) -> bool {
        self.bids.is_none() && self.qualities.is_none() && self.policy.is_none()
    }

    pub fn restore(self, data: &mut AuctionData) {
        if let Some(bids) = self.bids {
            for (ad, b) in data.ads.iter_mut().zip(bids) {
                ad.bid = b;
            }
        }
        if let Some(qs) = self.qualities {
            for (ad, q) in data.ads.iter_mut().zip(qs) {
                ad.quality = q;
            }
        }
        if let Some(p) = self.policy {
            data.policy_params = p;
        }
    }
}

/// One modifier per grid point, in grid order.
pub fn generate_modifiers(grid: &[GridPoint], _data: &AuctionData) -> Result<Vec<Modifier>> {
    if grid.is_empty() {
        return Err(Error::Config("grid is empty".into()));
    }
    grid.iter().cloned().map(Modifier::new).collect()
}
