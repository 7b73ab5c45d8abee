//! Per-request counterfactual replay.
//!
//! For every grid point the request is modified in place, re-auctioned, its
//! placements re-calibrated by the click model, summarized into a KPI record,
//! and restored before the next grid point runs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gsp::run_auction;
use super::modifier::generate_modifiers;
use super::types::{AuctionData, PageAllocation};
use crate::click::{placement_features, ClickPredictor};
use crate::cube::{DataCube, Dimension, KpiRecord};
use crate::error::{Error, Result};
use crate::policy::{with_baseline, GridPoint};

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    /// Allocation with calibrated click probabilities.
    pub allocation: PageAllocation,
    pub record: KpiRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOutcome {
    pub grid_point: GridPoint,
    pub result: std::result::Result<SimOutcome, String>,
}

/// Replace each placement's pclick with the model's estimate.
pub fn recalibrate(
    alloc: &mut PageAllocation,
    query_class: u32,
    model: &dyn ClickPredictor,
) -> Result<()> {
    for p in &mut alloc.placements {
        p.pclick = model.predict(&placement_features(query_class, p))?;
    }
    Ok(())
}

pub fn simulate_request(
    data: &mut AuctionData,
    grid: &[GridPoint],
    model: &dyn ClickPredictor,
) -> Result<Vec<GridOutcome>> {
    let grid = with_baseline(grid)?;
    let modifiers = generate_modifiers(&grid, data)?;
    let mut out = Vec::with_capacity(grid.len());
    for m in modifiers {
        let result = match m.apply(data) {
            Err(e) => Err(e.to_string()),
            Ok(restorer) => {
                let mut allocation = run_auction(data);
                let r = recalibrate(&mut allocation, data.query_class, model).map(|_| {
                    let record = KpiRecord::new(m.grid_point.id, data, &allocation);
                    SimOutcome { allocation, record }
                });
                restorer.restore(data);
                r.map_err(|e| e.to_string())
            }
        };
        out.push(GridOutcome {
            grid_point: m.grid_point,
            result,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimError {
    pub request_id: u64,
    pub grid_id: u32,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutput {
    pub cube: DataCube,
    pub errors: Vec<SimError>,
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Replay every record against the grid and aggregate into one cube.
///
/// `workers = 0` uses rayon's default parallelism.
pub fn simulate_dataset(
    records: &mut [AuctionData],
    grid: &[GridPoint],
    model: &dyn ClickPredictor,
    dims: &[Dimension],
    workers: usize,
) -> Result<SimulationOutput> {
    let grid = with_baseline(grid)?;
    let mut run = || {
        records
            .par_iter_mut()
            .map(|r| -> Result<(DataCube, Vec<SimError>)> {
                let mut cube = DataCube::empty(dims.to_vec());
                let mut errors = Vec::new();
                for o in simulate_request(r, &grid, model)? {
                    match o.result {
                        Ok(s) => cube.add_record(&s.record),
                        Err(message) => errors.push(SimError {
                            request_id: r.request_id,
                            grid_id: o.grid_point.id,
                            message,
                        }),
                    }
                }
                Ok((cube, errors))
            })
            .try_reduce(
                || (DataCube::empty(dims.to_vec()), Vec::new()),
                |(mut a, mut ea), (b, eb)| {
                    a.merge_into(&b)?;
                    ea.extend(eb);
                    Ok((a, ea))
                },
            )
    };
    let (cube, mut errors) = if workers == 0 { run()? } else { pool(workers)?.install(run)? };
    errors.sort_by_key(|e| (e.request_id, e.grid_id));
    Ok(SimulationOutput { cube, errors })
}

/// Per-request KPI records for each grid point, in record order.
pub fn simulate_records(
    records: &mut [AuctionData],
    grid: &[GridPoint],
    model: &dyn ClickPredictor,
) -> Result<Vec<Vec<KpiRecord>>> {
    let grid = with_baseline(grid)?;
    records
        .par_iter_mut()
        .map(|r| {
            simulate_request(r, &grid, model)?
                .into_iter()
                .map(|o| o.result.map(|s| s.record).map_err(Error::Config))
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationAccuracy {
    pub total: usize,
    pub matched: usize,
    pub accuracy: f64,
    pub mismatched: Vec<u64>,
}

/// Fraction of records whose unmodified replay reproduces the logged allocation.
pub fn replay_check(records: &[AuctionData]) -> SimulationAccuracy {
    let mut mismatched: Vec<u64> = records
        .par_iter()
        .filter(|r| !run_auction(r).same_outcome(&r.logged_allocation))
        .map(|r| r.request_id)
        .collect();
    mismatched.sort_unstable();
    let total = records.len();
    let matched = total - mismatched.len();
    SimulationAccuracy {
        total,
        matched,
        accuracy: if total == 0 { 1.0 } else { matched as f64 / total as f64 },
        mismatched,
    }
}
