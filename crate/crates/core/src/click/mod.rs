//! Click calibration models: online Bayesian probit and gradient tree boosting.

pub mod features;
pub mod gbt;
pub mod metrics;
pub mod probit;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use features::{
    bin_features, placement_features, training_impressions, BinnedVector, BinningSpec, Bins,
    FeatureMap, FeatureValue, LabeledImpression,
};
pub use gbt::{gbt_predict, gbt_train, GbtModel, GbtParams};
pub use metrics::{eval_cumulative_error, eval_logloss};
pub use probit::{probit_predict, probit_train, ProbitModel, ProbitParams};

use crate::error::{Error, Result};

/// Anything that maps an impression to a click probability.
pub trait ClickPredictor: Sync {
    fn predict(&self, impression: &FeatureMap) -> Result<f64>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClickModel {
    Probit(ProbitModel),
    Gbt(GbtModel),
}

impl ClickPredictor for ClickModel {
    fn predict(&self, impression: &FeatureMap) -> Result<f64> {
        match self {
            ClickModel::Probit(m) => m.predict(impression),
            ClickModel::Gbt(m) => m.predict(impression),
        }
    }
}

impl ClickPredictor for ProbitModel {
    fn predict(&self, impression: &FeatureMap) -> Result<f64> {
        ProbitModel::predict(self, impression)
    }
}

impl ClickPredictor for GbtModel {
    fn predict(&self, impression: &FeatureMap) -> Result<f64> {
        GbtModel::predict(self, impression)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClickModelSpec {
    Probit {
        #[serde(flatten)]
        params: ProbitParams,
        /// Bins per continuous feature when no explicit binning is given.
        #[serde(default = "default_bins")]
        bins: usize,
        #[serde(default)]
        binning: Option<BinningSpec>,
    },
    Gbt {
        #[serde(flatten)]
        params: GbtParams,
    },
}

fn default_bins() -> usize {
    features::DEFAULT_CONTINUOUS_BINS
}

impl Default for ClickModelSpec {
    fn default() -> Self {
        ClickModelSpec::Probit {
            params: ProbitParams::default(),
            bins: default_bins(),
            binning: None,
        }
    }
}

pub fn train_click_model(data: &[LabeledImpression], spec: &ClickModelSpec) -> Result<ClickModel> {
    match spec {
        ClickModelSpec::Probit {
            params,
            bins,
            binning,
        } => {
            let binning = binning
                .clone()
                .unwrap_or_else(|| BinningSpec::infer(data, *bins));
            Ok(ClickModel::Probit(probit_train(data, binning, *params)?))
        }
        ClickModelSpec::Gbt { params } => Ok(ClickModel::Gbt(gbt_train(data, *params)?)),
    }
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    model: ClickModel,
}

impl ClickModel {
    pub fn to_json(&self) -> Result<String> {
        let f = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            model: self.clone(),
        };
        Ok(serde_json::to_string_pretty(&f)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: ModelFile = serde_json::from_str(text)?;
        if f.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Schema(format!(
                "unsupported model format version {}",
                f.format_version
            )));
        }
        Ok(f.model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_file_round_trip_is_byte_identical() {
        let mut data = Vec::new();
        for i in 0..300 {
            let mut f = FeatureMap::new();
            f.insert("pclick".into(), FeatureValue::Num(f64::from(i % 37) / 41.0));
            f.insert("block".into(), FeatureValue::Cat(if i % 3 == 0 { "mainline" } else { "sidebar" }.into()));
            data.push(LabeledImpression::new(f, i % 5 == 0));
        }
        for spec in [
            ClickModelSpec::default(),
            ClickModelSpec::Gbt { params: GbtParams { n_trees: 3, min_samples_leaf: 5, ..GbtParams::default() } },
        ] {
            let m = train_click_model(&data, &spec).unwrap();
            let a = m.to_json().unwrap();
            let back = ClickModel::from_json(&a).unwrap();
            assert_eq!(back, m);
            assert_eq!(back.to_json().unwrap(), a);
        }
    }
}
