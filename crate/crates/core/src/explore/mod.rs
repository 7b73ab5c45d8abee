//! Regression surrogates over simulated grid points and the explore/select
//! optimizer that recommends new operating points.

mod optimize;
mod regression;

use std::collections::BTreeMap;

pub use optimize::{
    explore, optimize, Candidate, Constraint, ConstraintOp, DimRange, Direction, ExploreParams,
    Objective, OptimizeResult, DEFAULT_BATCHES, DEFAULT_POPULATION,
};
pub use regression::{
    fit_regression, poly_feature_names, poly_features, rmse, rmse_cv, ModelSpec, RegressionKind,
    RegressionModel, DEFAULT_FOLDS,
};

use crate::cube::{TotalsRow, METRIC_NAMES};
use crate::error::{Error, Result};
use crate::policy::GridPoint;

/// Training pairs (setting → KPI deltas) from a report's total rows.
///
/// Rows whose setting lacks any of `dims`, or whose deltas are undefined,
/// are skipped; the baseline row carries no knob values and is skipped too.
pub fn training_set(
    rows: &[TotalsRow],
    dims: &[String],
) -> (Vec<Vec<f64>>, BTreeMap<String, Vec<f64>>) {
    let mut x = Vec::new();
    let mut dy: BTreeMap<String, Vec<f64>> =
        METRIC_NAMES.iter().map(|m| (m.to_string(), Vec::new())).collect();
    for r in rows {
        let Some(s) = dims.iter().map(|d| r.setting.get(d).copied()).collect::<Option<Vec<f64>>>()
        else {
            continue;
        };
        let Some(d) = METRIC_NAMES.iter().map(|m| r.delta.get(m)).collect::<Option<Vec<f64>>>()
        else {
            continue;
        };
        x.push(s);
        for (m, v) in METRIC_NAMES.iter().zip(d) {
            dy.get_mut(*m).expect("metric present").push(v);
        }
    }
    (x, dy)
}

/// Recommended settings as a grid, numbered from `first_id`.
pub fn recommendations_grid(result: &OptimizeResult, first_id: u32) -> Result<Vec<GridPoint>> {
    if first_id == 0 {
        return Err(Error::Config("grid id 0 is reserved for the baseline".into()));
    }
    result
        .top
        .iter()
        .enumerate()
        .map(|(i, c)| {
            GridPoint::new(
                first_id + i as u32,
                result.dims.iter().cloned().zip(c.setting.iter().copied()),
            )
        })
        .collect()
}
