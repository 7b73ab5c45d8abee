use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{CellCounters, DataCube, Dimension};
use crate::error::{Error, Result};
use crate::policy::GridPoint;

pub const METRIC_NAMES: [&str; 5] = ["rpm", "cy", "iy", "mliy", "cpc"];

/// Ratios derived from aggregated counters; `None` where undefined.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KpiMetrics {
    pub rpm: Option<f64>,
    pub cy: Option<f64>,
    pub iy: Option<f64>,
    pub mliy: Option<f64>,
    pub cpc: Option<f64>,
}

impl KpiMetrics {
    pub fn from_counters(c: &CellCounters) -> Self {
        let per_request = |x: f64| (c.requests > 0).then(|| x / c.requests as f64);
        Self {
            rpm: per_request(1000.0 * c.revenue()),
            cy: per_request(c.expected_clicks()),
            iy: per_request(c.impressions as f64),
            mliy: per_request(c.mainline_impressions as f64),
            cpc: (c.expected_clicks_micros > 0).then(|| c.revenue() / c.expected_clicks()),
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "rpm" => self.rpm,
            "cy" => self.cy,
            "iy" => self.iy,
            "mliy" => self.mliy,
            "cpc" => self.cpc,
            _ => None,
        }
    }

    fn values(&self) -> [Option<f64>; 5] {
        [self.rpm, self.cy, self.iy, self.mliy, self.cpc]
    }
}

/// Normalized differences `(treatment - baseline) / baseline`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KpiDelta {
    pub rpm: Option<f64>,
    pub cy: Option<f64>,
    pub iy: Option<f64>,
    pub mliy: Option<f64>,
    pub cpc: Option<f64>,
}

fn rel(t: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (t, b) {
        (Some(t), Some(b)) if b != 0.0 => Some((t - b) / b),
        _ => None,
    }
}

impl KpiDelta {
    pub fn between(treatment: &KpiMetrics, baseline: &KpiMetrics) -> Self {
        Self {
            rpm: rel(treatment.rpm, baseline.rpm),
            cy: rel(treatment.cy, baseline.cy),
            iy: rel(treatment.iy, baseline.iy),
            mliy: rel(treatment.mliy, baseline.mliy),
            cpc: rel(treatment.cpc, baseline.cpc),
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "rpm" => self.rpm,
            "cy" => self.cy,
            "iy" => self.iy,
            "mliy" => self.mliy,
            "cpc" => self.cpc,
            _ => None,
        }
    }

    fn values(&self) -> [Option<f64>; 5] {
        [self.rpm, self.cy, self.iy, self.mliy, self.cpc]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub grid_id: u32,
    /// Values of the non-grid dimensions; `None` marks a rolled-up dimension.
    pub key: Vec<Option<u64>>,
    pub counters: CellCounters,
    pub metrics: KpiMetrics,
    pub delta: KpiDelta,
}

impl ReportRow {
    pub fn is_total(&self) -> bool {
        self.key.iter().all(Option::is_none)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KpiReport {
    pub baseline_grid_id: u32,
    /// Dimensions other than the grid point id, in cube order.
    pub dimensions: Vec<Dimension>,
    /// Per grid point: a total row, then one row per cell.
    pub rows: Vec<ReportRow>,
}

impl KpiReport {
    pub fn total(&self, grid_id: u32) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.grid_id == grid_id && r.is_total())
    }
}

/// Metrics and deltas per grid point and cell, normalized by the baseline
/// grid point's matching cell.
pub fn kpi_report(cube: &DataCube, baseline_grid_id: u32) -> Result<KpiReport> {
    let gpos = cube
        .dimensions
        .iter()
        .position(|d| *d == Dimension::GridPointId)
        .ok_or_else(|| Error::Config("report needs a grid_point_id dimension".into()))?;
    let others: Vec<Dimension> = cube
        .dimensions
        .iter()
        .copied()
        .filter(|d| *d != Dimension::GridPointId)
        .collect();
    // grid id -> (rest key -> counters)
    let mut by_grid: BTreeMap<u32, BTreeMap<Vec<u64>, CellCounters>> = BTreeMap::new();
    for (k, v) in &cube.cells {
        let gid = u32::try_from(k[gpos]).map_err(|_| Error::Schema("grid id overflow".into()))?;
        let rest: Vec<u64> = k
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != gpos)
            .map(|(_, x)| *x)
            .collect();
        by_grid.entry(gid).or_default().entry(rest).or_default().add(v);
    }
    let base = by_grid.get(&baseline_grid_id).ok_or_else(|| {
        Error::Config(format!("baseline grid point {baseline_grid_id} not in cube"))
    })?;
    let base_total = base.values().fold(CellCounters::default(), |mut a, c| {
        a.add(c);
        a
    });
    let base_total_m = KpiMetrics::from_counters(&base_total);
    let mut rows = Vec::new();
    for (gid, cells) in &by_grid {
        let mut total = CellCounters::default();
        for c in cells.values() {
            total.add(c);
        }
        let m = KpiMetrics::from_counters(&total);
        rows.push(ReportRow {
            grid_id: *gid,
            key: vec![None; others.len()],
            counters: total,
            metrics: m,
            delta: KpiDelta::between(&m, &base_total_m),
        });
        if others.is_empty() {
            continue;
        }
        for (rest, c) in cells {
            let m = KpiMetrics::from_counters(c);
            let bm = base.get(rest).map(KpiMetrics::from_counters).unwrap_or_default();
            rows.push(ReportRow {
                grid_id: *gid,
                key: rest.iter().map(|x| Some(*x)).collect(),
                counters: *c,
                metrics: m,
                delta: KpiDelta::between(&m, &bm),
            });
        }
    }
    Ok(KpiReport {
        baseline_grid_id,
        dimensions: others,
        rows,
    })
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), |v| v.to_string())
}

/// Tab-separated report with a fixed column order.
pub fn format_report(report: &KpiReport, grid: &[GridPoint]) -> String {
    let mut cols = vec!["grid_point_id".to_string(), "setting".to_string()];
    cols.extend(report.dimensions.iter().map(|d| d.name().to_string()));
    cols.extend(
        [
            "requests",
            "impressions",
            "mainline_impressions",
            "expected_clicks",
            "revenue",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    cols.extend(METRIC_NAMES.iter().map(|s| s.to_string()));
    cols.extend(METRIC_NAMES.iter().map(|s| format!("d_{s}")));
    let mut out = cols.join("\t");
    out.push('\n');
    for r in &report.rows {
        let setting = grid
            .iter()
            .find(|g| g.id == r.grid_id)
            .map(GridPoint::setting_string)
            .unwrap_or_default();
        let mut f = vec![r.grid_id.to_string(), setting];
        f.extend(
            r.key
                .iter()
                .map(|k| k.map_or_else(|| "*".to_string(), |v| v.to_string())),
        );
        let c = &r.counters;
        f.push(c.requests.to_string());
        f.push(c.impressions.to_string());
        f.push(c.mainline_impressions.to_string());
        f.push(c.expected_clicks().to_string());
        f.push(c.revenue().to_string());
        f.extend(r.metrics.values().iter().map(|v| opt(*v)));
        f.extend(r.delta.values().iter().map(|v| opt(*v)));
        out.push_str(&f.join("\t"));
        out.push('\n');
    }
    out
}

/// A grid point's aggregate row read back from a report file.
#[derive(Debug, Clone, PartialEq)]
pub struct TotalsRow {
    pub grid_id: u32,
    pub setting: BTreeMap<String, f64>,
    pub metrics: KpiMetrics,
    pub delta: KpiDelta,
}

/// Parse the per-grid-point total rows of a formatted report.
pub fn parse_report(text: &str) -> Result<Vec<TotalsRow>> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::Schema("empty report".into()))?
        .split('\t')
        .collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| Error::Schema(format!("report lacks column `{name}`")))
    };
    let gcol = col("grid_point_id")?;
    let scol = col("setting")?;
    let dim_cols: Vec<usize> = header
        .iter()
        .enumerate()
        .filter(|(_, h)| h.parse::<Dimension>().is_ok() && **h != "grid_point_id")
        .map(|(i, _)| i)
        .collect();
    let mcols: Vec<usize> = METRIC_NAMES.iter().map(|m| col(m)).collect::<Result<_>>()?;
    let dcols: Vec<usize> = METRIC_NAMES
        .iter()
        .map(|m| col(&format!("d_{m}")))
        .collect::<Result<_>>()?;
    let num = |s: &str| -> Result<Option<f64>> {
        if s == "NA" {
            Ok(None)
        } else {
            s.parse::<f64>()
                .map(Some)
                .map_err(|e| Error::Schema(format!("bad number `{s}`: {e}")))
        }
    };
    let mut out = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != header.len() {
            return Err(Error::Schema(format!("report row {} has {} fields", n + 2, f.len())));
        }
        if !dim_cols.iter().all(|&i| f[i] == "*") {
            continue;
        }
        let grid_id = f[gcol]
            .parse()
            .map_err(|e| Error::Schema(format!("bad grid id: {e}")))?;
        let mut setting = BTreeMap::new();
        for kv in f[scol].split(';').filter(|s| !s.is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Schema(format!("bad setting `{kv}`")))?;
            setting.insert(
                k.to_string(),
                v.parse::<f64>()
                    .map_err(|e| Error::Schema(format!("bad setting value `{v}`: {e}")))?,
            );
        }
        let m: Vec<Option<f64>> = mcols.iter().map(|&i| num(f[i])).collect::<Result<_>>()?;
        let d: Vec<Option<f64>> = dcols.iter().map(|&i| num(f[i])).collect::<Result<_>>()?;
        out.push(TotalsRow {
            grid_id,
            setting,
            metrics: KpiMetrics { rpm: m[0], cy: m[1], iy: m[2], mliy: m[3], cpc: m[4] },
            delta: KpiDelta { rpm: d[0], cy: d[1], iy: d[2], mliy: d[3], cpc: d[4] },
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cube::{default_dimensions, KpiRecord};

    fn rec(grid_id: u32, qc: u32, revenue: i64, clicks: i64) -> KpiRecord {
        KpiRecord {
            grid_id,
            request_id: 0,
            query_class: qc,
            template_id: 0,
            counters: CellCounters {
                requests: 1,
                impressions: 2,
                mainline_impressions: 1,
                expected_clicks_micros: clicks,
                revenue_micros: revenue,
            },
        }
    }

    #[test]
    fn identical_treatment_has_zero_delta() {
        let cube = DataCube::from_records(
            default_dimensions(),
            &[rec(0, 1, 500, 100), rec(1, 1, 500, 100), rec(0, 2, 40, 10), rec(1, 2, 40, 10)],
        );
        let r = kpi_report(&cube, 0).unwrap();
        for row in &r.rows {
            for m in METRIC_NAMES {
                assert_eq!(row.delta.get(m), Some(0.0), "{m}");
            }
        }
    }

    #[test]
    fn doubled_revenue_is_plus_100_percent() {
        let cube = DataCube::from_records(
            vec![Dimension::GridPointId],
            &[rec(0, 0, 1_000_000, 100), rec(1, 0, 2_000_000, 100)],
        );
        let r = kpi_report(&cube, 0).unwrap();
        assert_eq!(r.total(1).unwrap().delta.rpm, Some(1.0));
        assert_eq!(r.total(0).unwrap().delta.rpm, Some(0.0));
    }

    #[test]
    fn zero_requests_is_undefined_not_nan() {
        let m = KpiMetrics::from_counters(&CellCounters::default());
        assert_eq!(m, KpiMetrics::default());
        let zero_clicks = CellCounters { requests: 3, ..Default::default() };
        assert_eq!(KpiMetrics::from_counters(&zero_clicks).cpc, None);
        assert_eq!(KpiMetrics::from_counters(&zero_clicks).cy, Some(0.0));
    }

    #[test]
    fn missing_baseline() {
        let cube = DataCube::from_records(default_dimensions(), &[rec(3, 0, 1, 1)]);
        assert!(matches!(kpi_report(&cube, 0), Err(Error::Config(_))));
    }

    #[test]
    fn ratio_after_aggregation() {
        // two requests with very different RPM: the merged RPM is not the mean
        // of the per-request RPMs when requests differ in clicks
        let cube = DataCube::from_records(
            vec![Dimension::GridPointId],
            &[rec(0, 0, 3_000_000, 1_000_000), rec(0, 0, 1_000_000, 4_000_000)],
        );
        let r = kpi_report(&cube, 0).unwrap();
        let cpc = r.total(0).unwrap().metrics.cpc.unwrap();
        let mean_of_ratios = (3.0 / 1.0 + 1.0 / 4.0) / 2.0;
        assert!((cpc - 4.0 / 5.0).abs() < 1e-12);
        assert!((cpc - mean_of_ratios).abs() > 0.5);
    }

    #[test]
    fn format_then_parse_totals() {
        let cube = DataCube::from_records(
            default_dimensions(),
            &[rec(0, 1, 500, 100), rec(4, 1, 900, 120), rec(4, 2, 100, 0)],
        );
        let r = kpi_report(&cube, 0).unwrap();
        let grid = vec![GridPoint::baseline(), GridPoint::new(4, [("bid_multiplier", 1.5)]).unwrap()];
        let text = format_report(&r, &grid);
        assert!(text.starts_with("grid_point_id\tsetting\tquery_class\trequests"));
        let totals = parse_report(&text).unwrap();
        assert_eq!(totals.len(), 2);
        assert_eq!(totals[1].setting.get("bid_multiplier"), Some(&1.5));
        assert_eq!(totals[1].delta, r.total(4).unwrap().delta);
    }
}
