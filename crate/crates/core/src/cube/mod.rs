//! Additive KPI data cubes.
//!
//! Every (request, grid point) outcome becomes a single-cell cube keyed by the
//! configured dimensions. Cubes merge by cell-wise sums; all counters are
//! integers (revenue and expected clicks in millionths) so merging is exactly
//! associative and commutative and any reduction order gives the same cube.
//! Ratios are derived only from fully aggregated counters.

mod report;

pub use report::{
    format_report, kpi_report, parse_report, KpiDelta, KpiMetrics, KpiReport, ReportRow,
    TotalsRow, METRIC_NAMES,
};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::auction::{AuctionData, PageAllocation};
use crate::error::{Error, Result};

/// Fixed-point scale for revenue and expected clicks.
pub const MICROS: f64 = 1e6;

pub fn to_micros(x: f64) -> i64 {
    (x * MICROS).round() as i64
}

pub fn from_micros(m: i64) -> f64 {
    m as f64 / MICROS
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CellCounters {
    pub requests: u64,
    pub impressions: u64,
    pub mainline_impressions: u64,
    /// Sum of click probabilities, in millionths of a click.
    pub expected_clicks_micros: i64,
    /// Sum of `pclick * cpc`, in micro-currency.
    pub revenue_micros: i64,
}

impl CellCounters {
    pub fn add(&mut self, o: &CellCounters) {
        self.requests += o.requests;
        self.impressions += o.impressions;
        self.mainline_impressions += o.mainline_impressions;
        self.expected_clicks_micros += o.expected_clicks_micros;
        self.revenue_micros += o.revenue_micros;
    }

    pub fn expected_clicks(&self) -> f64 {
        from_micros(self.expected_clicks_micros)
    }

    pub fn revenue(&self) -> f64 {
        from_micros(self.revenue_micros)
    }

    /// Counters of one request's allocation; placements carry the calibrated
    /// click probabilities.
    pub fn from_allocation(alloc: &PageAllocation) -> Self {
        let mut c = CellCounters {
            requests: 1,
            ..Default::default()
        };
        for p in &alloc.placements {
            c.impressions += 1;
            if p.is_mainline() {
                c.mainline_impressions += 1;
            }
            c.expected_clicks_micros += to_micros(p.pclick);
            c.revenue_micros += to_micros(p.pclick * p.cpc);
        }
        c
    }
}

/// Per-request outcome for one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiRecord {
    pub grid_id: u32,
    pub request_id: u64,
    pub query_class: u32,
    pub template_id: u32,
    pub counters: CellCounters,
}

impl KpiRecord {
    pub fn new(grid_id: u32, data: &AuctionData, alloc: &PageAllocation) -> Self {
        Self {
            grid_id,
            request_id: data.request_id,
            query_class: data.query_class,
            template_id: alloc.template_id,
            counters: CellCounters::from_allocation(alloc),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    GridPointId,
    QueryClass,
    TemplateId,
}

impl Dimension {
    pub fn name(self) -> &'static str {
        match self {
            Dimension::GridPointId => "grid_point_id",
            Dimension::QueryClass => "query_class",
            Dimension::TemplateId => "template_id",
        }
    }

    fn value(self, r: &KpiRecord) -> u64 {
        match self {
            Dimension::GridPointId => u64::from(r.grid_id),
            Dimension::QueryClass => u64::from(r.query_class),
            Dimension::TemplateId => u64::from(r.template_id),
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Dimension {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grid_point_id" => Ok(Dimension::GridPointId),
            "query_class" => Ok(Dimension::QueryClass),
            "template_id" => Ok(Dimension::TemplateId),
            _ => Err(Error::Config(format!("unknown cube dimension `{s}`"))),
        }
    }
}

pub fn default_dimensions() -> Vec<Dimension> {
    vec![Dimension::GridPointId, Dimension::QueryClass]
}

pub fn parse_dimensions<S: AsRef<str>>(names: &[S]) -> Result<Vec<Dimension>> {
    let dims: Vec<Dimension> = names
        .iter()
        .map(|s| s.as_ref().parse())
        .collect::<Result<_>>()?;
    let mut seen = dims.clone();
    seen.sort();
    seen.dedup();
    if seen.len() != dims.len() {
        return Err(Error::Config("repeated cube dimension".into()));
    }
    Ok(dims)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "CubeFile", try_from = "CubeFile")]
pub struct DataCube {
    pub dimensions: Vec<Dimension>,
    pub cells: BTreeMap<Vec<u64>, CellCounters>,
}

#[derive(Serialize, Deserialize)]
struct CubeFile {
    dimensions: Vec<Dimension>,
    cells: Vec<(Vec<u64>, CellCounters)>,
}

impl From<DataCube> for CubeFile {
    fn from(c: DataCube) -> Self {
        CubeFile {
            dimensions: c.dimensions,
            cells: c.cells.into_iter().collect(),
        }
    }
}

impl TryFrom<CubeFile> for DataCube {
    type Error = Error;

    fn try_from(f: CubeFile) -> Result<Self> {
        let n = f.dimensions.len();
        if f.cells.iter().any(|(k, _)| k.len() != n) {
            return Err(Error::Schema("cube cell key arity mismatch".into()));
        }
        Ok(DataCube {
            dimensions: f.dimensions,
            cells: f.cells.into_iter().collect(),
        })
    }
}

impl DataCube {
    pub fn empty(dimensions: Vec<Dimension>) -> Self {
        Self {
            dimensions,
            cells: BTreeMap::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn add_record(&mut self, r: &KpiRecord) {
        let key: Vec<u64> = self.dimensions.iter().map(|d| d.value(r)).collect();
        self.cells.entry(key).or_default().add(&r.counters);
    }

    pub fn from_records<'a, I: IntoIterator<Item = &'a KpiRecord>>(
        dimensions: Vec<Dimension>,
        records: I,
    ) -> Self {
        let mut c = Self::empty(dimensions);
        for r in records {
            c.add_record(r);
        }
        c
    }

    pub fn merge_into(&mut self, other: &DataCube) -> Result<()> {
        if self.dimensions != other.dimensions {
            return Err(Error::Schema(format!(
                "cannot merge cubes over {:?} and {:?}",
                self.dimensions, other.dimensions
            )));
        }
        for (k, v) in &other.cells {
            self.cells.entry(k.clone()).or_default().add(v);
        }
        Ok(())
    }

    /// Sum cells over every dimension not in `keep`.
    pub fn rollup(&self, keep: &[Dimension]) -> Result<DataCube> {
        let pos: Vec<usize> = keep
            .iter()
            .map(|d| {
                self.dimensions
                    .iter()
                    .position(|x| x == d)
                    .ok_or_else(|| Error::Config(format!("cube has no dimension `{d}`")))
            })
            .collect::<Result<_>>()?;
        let mut out = DataCube::empty(keep.to_vec());
        for (k, v) in &self.cells {
            let key: Vec<u64> = pos.iter().map(|&i| k[i]).collect();
            out.cells.entry(key).or_default().add(v);
        }
        Ok(out)
    }

    /// Sum of all cells.
    pub fn total(&self) -> CellCounters {
        let mut t = CellCounters::default();
        for v in self.cells.values() {
            t.add(v);
        }
        t
    }

    /// Counters of the cells whose `dim` component equals `value`.
    pub fn slice_total(&self, dim: Dimension, value: u64) -> Result<CellCounters> {
        let i = self
            .dimensions
            .iter()
            .position(|d| *d == dim)
            .ok_or_else(|| Error::Config(format!("cube has no dimension `{dim}`")))?;
        let mut t = CellCounters::default();
        for (k, v) in &self.cells {
            if k[i] == value {
                t.add(v);
            }
        }
        Ok(t)
    }
}

/// Single-request cube for one grid point outcome.
pub fn request_cube(record: &KpiRecord, dims: &[Dimension]) -> DataCube {
    DataCube::from_records(dims.to_vec(), [record])
}

pub fn merge_cubes(a: &DataCube, b: &DataCube) -> Result<DataCube> {
    let mut out = a.clone();
    out.merge_into(b)?;
    Ok(out)
}
