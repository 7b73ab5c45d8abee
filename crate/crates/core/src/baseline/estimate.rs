use serde::{Deserialize, Serialize};

use super::sampling::{ProposalDistribution, RandomizationSpec};
use crate::auction::AuctionData;
use crate::cube::{KpiDelta, KpiMetrics};
use crate::error::{Error, Result};

/// `P*(x) / P(x)` per record, computed as the exponentiated difference of
/// log densities so identical distributions give weights of exactly 1.
pub fn importance_weights(
    logs: &[AuctionData],
    spec: &RandomizationSpec,
    target: &ProposalDistribution,
) -> Result<Vec<f64>> {
    logs.iter()
        .map(|r| {
            let mut lw = 0.0;
            for (k, g) in &spec.knobs {
                let x = r.policy_params.knobs.get(k).copied().ok_or_else(|| {
                    Error::Weight(format!("request {} does not record knob `{k}`", r.request_id))
                })?;
                let lp = g.ln_pdf(x);
                if lp == f64::NEG_INFINITY {
                    return Err(Error::Weight(format!(
                        "request {}: `{k}` = {x} has zero logging density",
                        r.request_id
                    )));
                }
                let lq = target.knobs.get(k).map_or(lp, |t| t.ln_pdf(x));
                lw += lq - lp;
            }
            let w = lw.exp();
            if w.is_finite() {
                Ok(w)
            } else {
                Err(Error::Weight(format!("request {}: weight overflow", r.request_id)))
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsEstimate {
    pub value: f64,
    pub n: usize,
    /// `(Σw)² / Σw²`.
    pub ess: f64,
    /// Weighted standard deviation of the metric over `sqrt(ess)`.
    pub se: f64,
}

/// Weighted estimate from precomputed weights: `Σ wᵢyᵢ / N`, or
/// `Σ wᵢyᵢ / Σ wᵢ` when self-normalized.
pub fn weighted_estimate(weights: &[f64], ys: &[f64], self_normalized: bool) -> Result<IsEstimate> {
    if weights.is_empty() || weights.len() != ys.len() {
        return Err(Error::Config("need matching non-empty weights and outcomes".into()));
    }
    let n = weights.len();
    let sw: f64 = weights.iter().sum();
    let sw2: f64 = weights.iter().map(|w| w * w).sum();
    let swy: f64 = weights.iter().zip(ys).map(|(w, y)| w * y).sum();
    let value = if self_normalized { swy / sw } else { swy / n as f64 };
    let ess = sw * sw / sw2;
    let mean_w = swy / sw;
    let var = weights
        .iter()
        .zip(ys)
        .map(|(w, y)| w * (y - mean_w).powi(2))
        .sum::<f64>()
        / sw;
    Ok(IsEstimate {
        value,
        n,
        ess,
        se: (var / ess).sqrt(),
    })
}

pub fn is_estimate(
    logs: &[AuctionData],
    spec: &RandomizationSpec,
    target: &ProposalDistribution,
    metric: &dyn Fn(&AuctionData) -> f64,
    self_normalized: bool,
) -> Result<IsEstimate> {
    let w = importance_weights(logs, spec, target)?;
    let ys: Vec<f64> = logs.iter().map(metric).collect();
    weighted_estimate(&w, &ys, self_normalized)
}

fn clicked(r: &AuctionData) -> impl Iterator<Item = &crate::auction::Placement> {
    r.logged_allocation
        .placements
        .iter()
        .zip(&r.logged_clicks)
        .filter(|(_, c)| **c)
        .map(|(p, _)| p)
}

/// Revenue actually charged: the cpc of every clicked placement.
pub fn realized_revenue(r: &AuctionData) -> f64 {
    clicked(r).map(|p| p.cpc).sum()
}

pub fn realized_clicks(r: &AuctionData) -> f64 {
    clicked(r).count() as f64
}

pub fn logged_impressions(r: &AuctionData) -> f64 {
    r.logged_allocation.placements.len() as f64
}

pub fn logged_mainline_impressions(r: &AuctionData) -> f64 {
    r.logged_allocation
        .placements
        .iter()
        .filter(|p| p.is_mainline())
        .count() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsKpis {
    pub metrics: KpiMetrics,
    pub ess: f64,
    pub n: usize,
}

/// All KPIs under `target` from realized outcomes; CPC is the ratio of the
/// revenue and click estimates.
pub fn is_kpis(
    logs: &[AuctionData],
    spec: &RandomizationSpec,
    target: &ProposalDistribution,
    self_normalized: bool,
) -> Result<IsKpis> {
    let w = importance_weights(logs, spec, target)?;
    let est = |f: fn(&AuctionData) -> f64| -> Result<IsEstimate> {
        let ys: Vec<f64> = logs.iter().map(f).collect();
        weighted_estimate(&w, &ys, self_normalized)
    };
    let rev = est(realized_revenue)?;
    let clk = est(realized_clicks)?;
    Ok(IsKpis {
        metrics: KpiMetrics {
            rpm: Some(1000.0 * rev.value),
            cy: Some(clk.value),
            iy: Some(est(logged_impressions)?.value),
            mliy: Some(est(logged_mainline_impressions)?.value),
            cpc: (clk.value > 0.0).then(|| rev.value / clk.value),
        },
        ess: rev.ess,
        n: rev.n,
    })
}

/// Estimated KPI delta of `treatment` against `control`, both from the same logs.
pub fn is_delta(
    logs: &[AuctionData],
    spec: &RandomizationSpec,
    treatment: &ProposalDistribution,
    control: &ProposalDistribution,
    self_normalized: bool,
) -> Result<KpiDelta> {
    let t = is_kpis(logs, spec, treatment, self_normalized)?;
    let c = is_kpis(logs, spec, control, self_normalized)?;
    Ok(KpiDelta::between(&t.metrics, &c.metrics))
}
