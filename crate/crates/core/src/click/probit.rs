//! Online Bayesian probit regression over one-hot binned features.
//!
//! Every bin carries an independent Gaussian weight `N(mu, sigma2)`. An
//! impression activates one bin per feature; its score is `x'w` and the click
//! likelihood is `Phi(y * x'w / beta)` with `y` in {-1, +1}. Training is a
//! single pass of Gaussian message passing that moves the active bins' means in
//! the label's direction and shrinks their variances.

use serde::{Deserialize, Serialize};

use super::features::{bin_features, BinnedVector, BinningSpec, FeatureMap, LabeledImpression};
use crate::error::{Error, Result};
use crate::stats::{inverse_mills, norm_cdf};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbitParams {
    pub prior_mean: f64,
    pub prior_variance: f64,
    pub beta: f64,
}

impl Default for ProbitParams {
    fn default() -> Self {
        Self {
            prior_mean: 0.0,
            prior_variance: 1.0,
            beta: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbitModel {
    pub mu: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub beta: f64,
    pub prior_mean: f64,
    pub prior_variance: f64,
    pub binning: BinningSpec,
    /// Impressions skipped during training because they failed to bin.
    #[serde(default)]
    pub skipped: u64,
}

/// Moments of a single update, exposed for invariant checks.
#[derive(Debug, Clone, Copy)]
pub struct UpdateStats {
    pub t: f64,
    pub v: f64,
    pub w: f64,
}

impl ProbitModel {
    pub fn prior(binning: BinningSpec, params: ProbitParams) -> Result<Self> {
        if !(params.beta > 0.0) || !(params.prior_variance > 0.0) {
            return Err(Error::Config(
                "probit beta and prior variance must be positive".into(),
            ));
        }
        let d = binning.dim();
        Ok(Self {
            mu: vec![params.prior_mean; d],
            sigma2: vec![params.prior_variance; d],
            beta: params.beta,
            prior_mean: params.prior_mean,
            prior_variance: params.prior_variance,
            binning,
            skipped: 0,
        })
    }

    fn check(&self, x: &BinnedVector) -> Result<()> {
        if x.feature_count() != self.binning.features.len()
            || x.flat.iter().any(|&i| i >= self.mu.len())
        {
            return Err(Error::Schema(format!(
                "binned vector with {} features does not match model with {}",
                x.feature_count(),
                self.binning.features.len()
            )));
        }
        Ok(())
    }

    fn moments(&self, x: &BinnedVector) -> (f64, f64) {
        let mean: f64 = x.flat.iter().map(|&i| self.mu[i]).sum();
        let var: f64 = x.flat.iter().map(|&i| self.sigma2[i]).sum();
        (mean, var)
    }

    /// One message-passing step for label `y` in {-1, +1}.
    pub fn update(&mut self, x: &BinnedVector, y: i8) -> Result<UpdateStats> {
        self.check(x)?;
        let y = if y > 0 { 1.0 } else { -1.0 };
        let (mean, var) = self.moments(x);
        let total = var + self.beta * self.beta;
        let sd = total.sqrt();
        let t = y * mean / sd;
        let v = inverse_mills(t);
        // w lies in (0, 1); clamp against rounding in the far tails
        let w = (v * (v + t)).clamp(0.0, 1.0 - 1e-12);
        for &i in &x.flat {
            let s2 = self.sigma2[i];
            self.mu[i] += y * (s2 / sd) * v;
            let factor = 1.0 - (s2 / total) * w;
            self.sigma2[i] = s2 * factor.max(f64::MIN_POSITIVE);
        }
        Ok(UpdateStats { t, v, w })
    }

    pub fn predict_binned(&self, x: &BinnedVector) -> Result<f64> {
        self.check(x)?;
        let (mean, var) = self.moments(x);
        Ok(norm_cdf(mean / (var + self.beta * self.beta).sqrt()))
    }

    pub fn predict(&self, impression: &FeatureMap) -> Result<f64> {
        let x = bin_features(impression, &self.binning)?;
        self.predict_binned(&x)
    }
}

/// Single sequential pass over `data` in order.
pub fn probit_train(
    data: &[LabeledImpression],
    binning: BinningSpec,
    params: ProbitParams,
) -> Result<ProbitModel> {
    let mut model = ProbitModel::prior(binning, params)?;
    for d in data {
        match bin_features(&d.features, &model.binning) {
            Ok(x) => {
                model.update(&x, d.label)?;
            }
            Err(_) => model.skipped += 1,
        }
    }
    Ok(model)
}

pub fn probit_predict(model: &ProbitModel, x: &BinnedVector) -> Result<f64> {
    model.predict_binned(x)
}
