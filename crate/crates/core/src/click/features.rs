//! Raw impression features and the declarative binning used by the probit model.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::auction::{AuctionData, Placement};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatureValue {
    Num(f64),
    Cat(String),
}

pub type FeatureMap = BTreeMap<String, FeatureValue>;

pub const F_POSITION: &str = "position";
pub const F_BLOCK: &str = "block";
pub const F_PCLICK: &str = "pclick";
pub const F_QUERY_CLASS: &str = "query_class";

/// Features of one placed ad as seen by the click models.
pub fn placement_features(query_class: u32, placement: &Placement) -> FeatureMap {
    let mut f = FeatureMap::new();
    f.insert(F_POSITION.into(), FeatureValue::Num(f64::from(placement.slot)));
    f.insert(F_BLOCK.into(), FeatureValue::Cat(placement.block.clone()));
    f.insert(F_PCLICK.into(), FeatureValue::Num(placement.pclick));
    f.insert(
        F_QUERY_CLASS.into(),
        FeatureValue::Cat(format!("q{query_class}")),
    );
    f
}

/// An impression with a click label in {-1, +1}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledImpression {
    pub features: FeatureMap,
    pub label: i8,
}

impl LabeledImpression {
    pub fn new(features: FeatureMap, clicked: bool) -> Self {
        Self {
            features,
            label: if clicked { 1 } else { -1 },
        }
    }

    pub fn clicked(&self) -> bool {
        self.label > 0
    }
}

/// Click-labelled impressions of every logged placement.
pub fn training_impressions(records: &[AuctionData]) -> Vec<LabeledImpression> {
    let mut out = Vec::new();
    for r in records {
        for (p, &c) in r.logged_allocation.placements.iter().zip(&r.logged_clicks) {
            out.push(LabeledImpression::new(placement_features(r.query_class, p), c));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Bins {
    /// Bin index = number of boundaries `<=` value; values outside the range
    /// land in the first or last bin.
    Continuous { boundaries: Vec<f64> },
    /// One bin per listed category plus a trailing bin for anything unseen.
    Categorical { categories: Vec<String> },
}

impl Bins {
    pub fn len(&self) -> usize {
        match self {
            Bins::Continuous { boundaries } => boundaries.len() + 1,
            Bins::Categorical { categories } => categories.len() + 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn bin(&self, name: &str, v: &FeatureValue) -> Result<usize> {
        match (self, v) {
            (Bins::Continuous { boundaries }, FeatureValue::Num(x)) => {
                if x.is_nan() {
                    return Err(Error::Schema(format!("feature `{name}` is NaN")));
                }
                Ok(boundaries.partition_point(|b| b <= x))
            }
            (Bins::Categorical { categories }, FeatureValue::Cat(c)) => Ok(categories
                .iter()
                .position(|k| k == c)
                .unwrap_or(categories.len())),
            (Bins::Categorical { categories }, FeatureValue::Num(x)) => {
                let c = x.to_string();
                Ok(categories
                    .iter()
                    .position(|k| *k == c)
                    .unwrap_or(categories.len()))
            }
            (Bins::Continuous { .. }, FeatureValue::Cat(c)) => Err(Error::Schema(format!(
                "feature `{name}` is continuous, got category `{c}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureBins {
    pub name: String,
    pub bins: Bins,
}

/// Ordered per-feature bin definitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct BinningSpec {
    pub features: Vec<FeatureBins>,
}

pub const DEFAULT_CONTINUOUS_BINS: usize = 16;

impl BinningSpec {
    pub fn continuous(mut self, name: &str, boundaries: Vec<f64>) -> Self {
        self.features.push(FeatureBins {
            name: name.into(),
            bins: Bins::Continuous { boundaries },
        });
        self
    }

    pub fn categorical(mut self, name: &str, categories: Vec<String>) -> Self {
        self.features.push(FeatureBins {
            name: name.into(),
            bins: Bins::Categorical { categories },
        });
        self
    }

    /// Equal-frequency boundaries for a continuous feature.
    pub fn equal_frequency(values: &[f64], n_bins: usize) -> Vec<f64> {
        let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
        if v.is_empty() || n_bins < 2 {
            return Vec::new();
        }
        v.sort_by(f64::total_cmp);
        let mut out: Vec<f64> = (1..n_bins)
            .map(|k| v[(k * v.len() / n_bins).min(v.len() - 1)])
            .collect();
        out.dedup();
        // a boundary equal to the minimum would leave the first bin empty
        out.retain(|b| *b > v[0]);
        out
    }

    /// Derive a spec from training data: numeric features get equal-frequency
    /// bins, categorical features one bin per observed category.
    pub fn infer(data: &[LabeledImpression], n_bins: usize) -> Self {
        let mut numeric: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        let mut cats: BTreeMap<&str, Vec<String>> = BTreeMap::new();
        for d in data {
            for (k, v) in &d.features {
                match v {
                    FeatureValue::Num(x) => numeric.entry(k).or_default().push(*x),
                    FeatureValue::Cat(c) => {
                        let e = cats.entry(k).or_default();
                        if !e.contains(c) {
                            e.push(c.clone());
                        }
                    }
                }
            }
        }
        let mut spec = BinningSpec::default();
        for (k, vals) in numeric {
            spec = spec.continuous(k, Self::equal_frequency(&vals, n_bins));
        }
        for (k, mut c) in cats {
            c.sort();
            spec = spec.categorical(k, c);
        }
        spec
    }

    /// Total number of bins across all features.
    pub fn dim(&self) -> usize {
        self.features.iter().map(|f| f.bins.len()).sum()
    }

    pub fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.features
            .iter()
            .map(|f| {
                let o = acc;
                acc += f.bins.len();
                o
            })
            .collect()
    }
}

/// Sparse one-hot encoding: exactly one active bin per feature.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedVector {
    /// `(feature index, bin index)` in feature order.
    pub active_bins: Vec<(usize, usize)>,
    /// Flat indices into the model's weight vectors.
    pub flat: Vec<usize>,
}

impl BinnedVector {
    pub fn feature_count(&self) -> usize {
        self.active_bins.len()
    }
}

pub fn bin_features(impression: &FeatureMap, spec: &BinningSpec) -> Result<BinnedVector> {
    for k in impression.keys() {
        if !spec.features.iter().any(|f| &f.name == k) {
            return Err(Error::Schema(format!("unknown feature `{k}`")));
        }
    }
    let mut active_bins = Vec::with_capacity(spec.features.len());
    let mut flat = Vec::with_capacity(spec.features.len());
    let mut offset = 0;
    for (j, f) in spec.features.iter().enumerate() {
        let v = impression
            .get(&f.name)
            .ok_or_else(|| Error::Schema(format!("missing feature `{}`", f.name)))?;
        let b = f.bins.bin(&f.name, v)?;
        active_bins.push((j, b));
        flat.push(offset + b);
        offset += f.bins.len();
    }
    Ok(BinnedVector { active_bins, flat })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn position_spec() -> BinningSpec {
        BinningSpec::default().continuous("position", vec![2.0, 3.0])
    }

    fn fm(pairs: &[(&str, FeatureValue)]) -> FeatureMap {
        pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    #[test]
    fn position_one_is_first_bin() {
        let x = bin_features(&fm(&[("position", FeatureValue::Num(1.0))]), &position_spec()).unwrap();
        assert_eq!(x.active_bins, vec![(0, 0)]);
        let x = bin_features(&fm(&[("position", FeatureValue::Num(7.0))]), &position_spec()).unwrap();
        assert_eq!(x.active_bins, vec![(0, 2)]);
    }

    #[test]
    fn below_range_clamps_to_lowest_bin() {
        let x = bin_features(&fm(&[("position", FeatureValue::Num(-40.0))]), &position_spec()).unwrap();
        assert_eq!(x.active_bins[0].1, 0);
    }

    #[test]
    fn one_hot_mass_equals_feature_count() {
        let spec = position_spec()
            .categorical("block", vec!["mainline".into(), "sidebar".into()])
            .continuous("pclick", vec![0.05, 0.1, 0.2]);
        let x = bin_features(
            &fm(&[
                ("position", FeatureValue::Num(2.0)),
                ("block", FeatureValue::Cat("sidebar".into())),
                ("pclick", FeatureValue::Num(0.12)),
            ]),
            &spec,
        )
        .unwrap();
        assert_eq!(x.feature_count(), 3);
        let mut dense = vec![0u32; spec.dim()];
        for i in &x.flat {
            dense[*i] += 1;
        }
        assert_eq!(dense.iter().sum::<u32>(), 3);
        let offs = spec.offsets();
        for (j, f) in spec.features.iter().enumerate() {
            let s: u32 = dense[offs[j]..offs[j] + f.bins.len()].iter().sum();
            assert_eq!(s, 1);
        }
    }

    #[test]
    fn unknown_feature_is_schema_error() {
        let r = bin_features(&fm(&[("height", FeatureValue::Num(1.0))]), &position_spec());
        assert!(matches!(r, Err(Error::Schema(_))));
    }

    #[test]
    fn unseen_category_goes_to_overflow_bin() {
        let spec = BinningSpec::default().categorical("block", vec!["mainline".into()]);
        let x = bin_features(&fm(&[("block", FeatureValue::Cat("footer".into()))]), &spec).unwrap();
        assert_eq!(x.active_bins[0].1, 1);
    }

    #[test]
    fn equal_frequency_boundaries() {
        let v: Vec<f64> = (0..1600).map(f64::from).collect();
        let b = BinningSpec::equal_frequency(&v, 16);
        assert_eq!(b.len(), 15);
        assert_eq!(b[0], 100.0);
        let constant = BinningSpec::equal_frequency(&[3.0; 50], 16);
        assert!(constant.is_empty());
    }
}
