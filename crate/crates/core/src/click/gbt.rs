//! Gradient tree boosting for click probability under log loss.
//!
//! Each iteration fits a least-squares regression tree to the per-sample
//! negative gradient of log loss with respect to the additive score
//! (`y - p` with `y` in {0, 1}); leaves predict the mean target scaled by the
//! learning rate. Prediction is `sigmoid(base + sum of traversed leaves)`.
//!
//! Continuous features are pre-binned into quantile thresholds; categorical
//! features split on a category subset found by ordering categories by their
//! mean gradient.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::{BinningSpec, FeatureMap, FeatureValue, LabeledImpression};
use crate::error::{Error, Result};
use crate::stats::{logit, sigmoid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbtParams {
    pub n_trees: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Upper bound on candidate thresholds per continuous feature, plus one.
    pub max_bins: usize,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            learning_rate: 0.5,
            max_depth: 4,
            min_samples_leaf: 50,
            max_bins: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitRule {
    /// Left when `value < threshold`.
    Threshold { threshold: f64 },
    /// Left when the category is in the set.
    Categories { left: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: String,
        rule: SplitRule,
        left: usize,
        right: usize,
    },
    Leaf {
        weight: f64,
    },
}

/// Flat node list; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(weight: f64) -> Self {
        Self {
            nodes: vec![Node::Leaf { weight }],
        }
    }

    pub fn leaf_weight(&self, x: &FeatureMap) -> Result<f64> {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { weight } => return Ok(*weight),
                Node::Split {
                    feature,
                    rule,
                    left,
                    right,
                } => {
                    let v = x
                        .get(feature)
                        .ok_or_else(|| Error::Schema(format!("missing feature `{feature}`")))?;
                    let go_left = match (rule, v) {
                        (SplitRule::Threshold { threshold }, FeatureValue::Num(x)) => x < threshold,
                        (SplitRule::Categories { left }, FeatureValue::Cat(c)) => left.contains(c),
                        _ => {
                            return Err(Error::Schema(format!(
                                "feature `{feature}` has the wrong kind for this model"
                            )))
                        }
                    };
                    i = if go_left { *left } else { *right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
            }
        }
        go(self, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub base_score: f64,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub trees: Vec<Tree>,
}

impl GbtModel {
    pub fn raw_score(&self, x: &FeatureMap) -> Result<f64> {
        self.raw_score_upto(x, self.trees.len())
    }

    /// Score using only the first `n_trees` trees.
    pub fn raw_score_upto(&self, x: &FeatureMap, n_trees: usize) -> Result<f64> {
        let mut s = self.base_score;
        for t in self.trees.iter().take(n_trees) {
            s += t.leaf_weight(x)?;
        }
        Ok(s)
    }

    pub fn predict(&self, x: &FeatureMap) -> Result<f64> {
        Ok(sigmoid(self.raw_score(x)?))
    }

    /// No split is unreachable: along every root-to-leaf path each threshold
    /// lies strictly inside the interval left by earlier tests on the same
    /// feature, and each category split partitions the categories still
    /// possible on that path into two non-empty sets.
    pub fn is_well_formed(&self) -> bool {
        #[derive(Clone, Default)]
        struct PathState {
            intervals: BTreeMap<String, (f64, f64)>,
            excluded: BTreeMap<String, Vec<String>>,
            included: BTreeMap<String, Vec<String>>,
        }
        fn walk(t: &Tree, i: usize, st: PathState) -> bool {
            match &t.nodes[i] {
                Node::Leaf { weight } => weight.is_finite(),
                Node::Split {
                    feature,
                    rule,
                    left,
                    right,
                } => {
                    if *left >= t.nodes.len() || *right >= t.nodes.len() {
                        return false;
                    }
                    match rule {
                        SplitRule::Threshold { threshold } => {
                            let (lo, hi) = st
                                .intervals
                                .get(feature)
                                .copied()
                                .unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
                            // left is [lo, thr), right is [thr, hi)
                            if !(*threshold > lo && *threshold < hi) {
                                return false;
                            }
                            let mut l = st.clone();
                            l.intervals.insert(feature.clone(), (lo, *threshold));
                            let mut r = st;
                            r.intervals.insert(feature.clone(), (*threshold, hi));
                            walk(t, *left, l) && walk(t, *right, r)
                        }
                        SplitRule::Categories { left: set } => {
                            if set.is_empty() {
                                return false;
                            }
                            if let Some(inc) = st.included.get(feature) {
                                // a left branch earlier restricted the category set
                                let live: Vec<&String> = inc.iter().filter(|c| set.contains(c)).collect();
                                if live.is_empty() || live.len() == inc.len() {
                                    return false;
                                }
                            }
                            let ex = st.excluded.get(feature).cloned().unwrap_or_default();
                            if set.iter().all(|c| ex.contains(c)) {
                                return false;
                            }
                            let mut l = st.clone();
                            let inc = match st.included.get(feature) {
                                Some(inc) => inc.iter().filter(|c| set.contains(c)).cloned().collect(),
                                None => set.iter().filter(|c| !ex.contains(c)).cloned().collect(),
                            };
                            l.included.insert(feature.clone(), inc);
                            let mut r = st;
                            if let Some(inc) = r.included.get_mut(feature) {
                                inc.retain(|c| !set.contains(c));
                            }
                            r.excluded.entry(feature.clone()).or_default().extend(set.iter().cloned());
                            walk(t, *left, l) && walk(t, *right, r)
                        }
                    }
                }
            }
        }
        self.trees.iter().all(|t| !t.nodes.is_empty() && walk(t, 0, PathState::default()))
    }
}

enum Column {
    Numeric { thresholds: Vec<f64>, codes: Vec<u16> },
    Categorical { categories: Vec<String>, codes: Vec<u16> },
}

impl Column {
    fn codes(&self) -> &[u16] {
        match self {
            Column::Numeric { codes, .. } | Column::Categorical { codes, .. } => codes,
        }
    }

    fn n_codes(&self) -> usize {
        match self {
            Column::Numeric { thresholds, .. } => thresholds.len() + 1,
            Column::Categorical { categories, .. } => categories.len(),
        }
    }
}

fn build_columns(data: &[LabeledImpression], max_bins: usize) -> Result<(Vec<String>, Vec<Column>)> {
    let first = &data[0].features;
    let names: Vec<String> = first.keys().cloned().collect();
    let mut cols = Vec::with_capacity(names.len());
    for name in &names {
        let numeric = matches!(first[name], FeatureValue::Num(_));
        let mut nums = Vec::new();
        let mut cats: Vec<&str> = Vec::new();
        for d in data {
            match (d.features.get(name), numeric) {
                (Some(FeatureValue::Num(x)), true) if !x.is_nan() => nums.push(*x),
                (Some(FeatureValue::Cat(c)), false) => cats.push(c),
                _ => {
                    return Err(Error::Schema(format!(
                        "feature `{name}` missing or of inconsistent kind"
                    )))
                }
            }
        }
        if data.iter().any(|d| d.features.len() != names.len()) {
            return Err(Error::Schema("impressions carry different feature sets".into()));
        }
        if numeric {
            let thresholds = BinningSpec::equal_frequency(&nums, max_bins.clamp(2, u16::MAX as usize));
            let codes = nums
                .iter()
                .map(|x| thresholds.partition_point(|b| b <= x) as u16)
                .collect();
            cols.push(Column::Numeric { thresholds, codes });
        } else {
            let mut categories: Vec<String> = cats.iter().map(|c| c.to_string()).collect();
            categories.sort();
            categories.dedup();
            let codes = cats
                .iter()
                .map(|c| categories.binary_search_by(|k| k.as_str().cmp(c)).unwrap_or(0) as u16)
                .collect();
            cols.push(Column::Categorical { categories, codes });
        }
    }
    Ok((names, cols))
}

struct Candidate {
    gain: f64,
    feature: usize,
    /// Codes routed left.
    left_codes: Vec<bool>,
    rule: SplitRule,
}

fn best_split(
    col: &Column,
    feature: usize,
    idx: &[usize],
    grad: &[f64],
    min_leaf: usize,
) -> Option<Candidate> {
    let n_codes = col.n_codes();
    if n_codes < 2 {
        return None;
    }
    let codes = col.codes();
    let mut sum = vec![0.0; n_codes];
    let mut cnt = vec![0usize; n_codes];
    for &i in idx {
        let c = codes[i] as usize;
        sum[c] += grad[i];
        cnt[c] += 1;
    }
    let total: f64 = sum.iter().sum();
    let n = idx.len();
    let parent = total * total / n as f64;
    let order: Vec<usize> = match col {
        Column::Numeric { .. } => (0..n_codes).collect(),
        Column::Categorical { .. } => {
            let mut o: Vec<usize> = (0..n_codes).filter(|&c| cnt[c] > 0).collect();
            o.sort_by(|&a, &b| {
                (sum[a] / cnt[a] as f64)
                    .total_cmp(&(sum[b] / cnt[b] as f64))
                    .then(a.cmp(&b))
            });
            o
        }
    };
    let mut best: Option<(f64, usize)> = None;
    let (mut sl, mut nl) = (0.0, 0usize);
    for (k, &c) in order.iter().enumerate().take(order.len().saturating_sub(1)) {
        sl += sum[c];
        nl += cnt[c];
        let nr = n - nl;
        if nl < min_leaf || nr < min_leaf {
            continue;
        }
        let sr = total - sl;
        let gain = sl * sl / nl as f64 + sr * sr / nr as f64 - parent;
        if gain > best.map_or(1e-12, |b| b.0) {
            best = Some((gain, k));
        }
    }
    let (gain, k) = best?;
    let mut left_codes = vec![false; n_codes];
    for &c in &order[..=k] {
        left_codes[c] = true;
    }
    let rule = match col {
        Column::Numeric { thresholds, .. } => SplitRule::Threshold {
            threshold: thresholds[order[k]],
        },
        Column::Categorical { categories, .. } => SplitRule::Categories {
            left: order[..=k].iter().map(|&c| categories[c].clone()).collect(),
        },
    };
    Some(Candidate {
        gain,
        feature,
        left_codes,
        rule,
    })
}

struct TreeBuilder<'a> {
    names: &'a [String],
    cols: &'a [Column],
    grad: &'a [f64],
    params: &'a GbtParams,
    nodes: Vec<Node>,
    /// Leaf assignment of every training sample, for score updates.
    leaf_of: Vec<f64>,
}

impl TreeBuilder<'_> {
    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { weight: 0.0 });
        let split = if depth < self.params.max_depth && idx.len() >= 2 * self.params.min_samples_leaf {
            let found: Vec<Option<Candidate>> = self
                .cols
                .par_iter()
                .enumerate()
                .map(|(j, c)| best_split(c, j, &idx, self.grad, self.params.min_samples_leaf))
                .collect();
            // first feature wins ties
            found.into_iter().flatten().fold(None, |acc: Option<Candidate>, c| match acc {
                Some(a) if a.gain >= c.gain => Some(a),
                _ => Some(c),
            })
        } else {
            None
        };
        match split {
            None => {
                let mean = idx.iter().map(|&i| self.grad[i]).sum::<f64>() / idx.len() as f64;
                let w = self.params.learning_rate * mean;
                for &i in &idx {
                    self.leaf_of[i] = w;
                }
                self.nodes[id] = Node::Leaf { weight: w };
            }
            Some(c) => {
                let codes = self.cols[c.feature].codes();
                let (l, r): (Vec<usize>, Vec<usize>) =
                    idx.into_iter().partition(|&i| c.left_codes[codes[i] as usize]);
                let left = self.grow(l, depth + 1);
                let right = self.grow(r, depth + 1);
                self.nodes[id] = Node::Split {
                    feature: self.names[c.feature].clone(),
                    rule: c.rule,
                    left,
                    right,
                };
            }
        }
        id
    }
}

pub fn gbt_train(data: &[LabeledImpression], params: GbtParams) -> Result<GbtModel> {
    if data.is_empty() {
        return Err(Error::Config("boosting needs at least one impression".into()));
    }
    if params.n_trees == 0 {
        return Err(Error::Config("boosting needs at least one tree".into()));
    }
    if !(params.learning_rate > 0.0 && params.learning_rate <= 1.0) {
        return Err(Error::Config("learning rate must lie in (0, 1]".into()));
    }
    let min_leaf = params.min_samples_leaf.max(1);
    let params = GbtParams {
        min_samples_leaf: min_leaf,
        ..params
    };
    let (names, cols) = build_columns(data, params.max_bins)?;
    let y: Vec<f64> = data.iter().map(|d| if d.clicked() { 1.0 } else { 0.0 }).collect();
    let n = y.len() as f64;
    let rate = (y.iter().sum::<f64>() / n).clamp(1e-6, 1.0 - 1e-6);
    let base_score = logit(rate);
    let mut score = vec![base_score; y.len()];
    let mut trees = Vec::with_capacity(params.n_trees);
    for _ in 0..params.n_trees {
        let grad: Vec<f64> = y.iter().zip(&score).map(|(y, s)| y - sigmoid(*s)).collect();
        let mut b = TreeBuilder {
            names: &names,
            cols: &cols,
            grad: &grad,
            params: &params,
            nodes: Vec::new(),
            leaf_of: vec![0.0; y.len()],
        };
        b.grow((0..y.len()).collect(), 0);
        for (s, w) in score.iter_mut().zip(&b.leaf_of) {
            *s += w;
        }
        trees.push(Tree { nodes: b.nodes });
    }
    Ok(GbtModel {
        base_score,
        learning_rate: params.learning_rate,
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
        trees,
    })
}

pub fn gbt_predict(model: &GbtModel, impression: &FeatureMap) -> Result<f64> {
    model.predict(impression)
}
