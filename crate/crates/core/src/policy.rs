//! Policy knobs and counterfactual grid points.
//!
//! Every tunable system parameter is a named knob declared in [`KNOBS`]. A knob
//! that is absent from a [`PolicyConfig`] takes its registry default, so adding
//! a knob never changes the behaviour of configurations written before it.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BID_MULTIPLIER: &str = "bid_multiplier";
pub const RESERVE_SCORE: &str = "reserve_score";
pub const MAINLINE_MIN_PCLICK: &str = "mainline_min_pclick";
pub const QUALITY_EXPONENT: &str = "quality_exponent";
pub const MAINLINE_CAPACITY: &str = "mainline_capacity";

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy)]
pub struct KnobSpec {
    pub name: &'static str,
    pub default: f64,
    pub min: f64,
    pub max: f64,
    pub help: &'static str,
}

/// The declared knob registry.
pub const KNOBS: &[KnobSpec] = &[
    KnobSpec {
        name: BID_MULTIPLIER,
        default: 1.0,
        min: 1e-6,
        max: 1e6,
        help: "multiplies every advertiser bid",
    },
    KnobSpec {
        name: RESERVE_SCORE,
        default: 0.0,
        min: 0.0,
        max: 1e9,
        help: "minimum rank score for any placement; floor price when no runner-up exists",
    },
    KnobSpec {
        name: MAINLINE_MIN_PCLICK,
        default: 0.0,
        min: 0.0,
        max: 1.0,
        help: "minimum ad pclick for mainline blocks",
    },
    KnobSpec {
        name: QUALITY_EXPONENT,
        default: 1.0,
        min: 1e-6,
        max: 100.0,
        help: "quality policy q = pclick^exponent",
    },
    KnobSpec {
        name: MAINLINE_CAPACITY,
        default: 64.0,
        min: 0.0,
        max: 64.0,
        help: "caps the slot count of mainline blocks",
    },
];

pub fn knob_spec(name: &str) -> Result<&'static KnobSpec> {
    KNOBS
        .iter()
        .find(|k| k.name == name)
        .ok_or_else(|| Error::Config(format!("unknown knob `{name}`")))
}

fn check_knob(name: &str, value: f64) -> Result<()> {
    let spec = knob_spec(name)?;
    if !value.is_finite() || value < spec.min || value > spec.max {
        return Err(Error::Config(format!(
            "knob `{name}` = {value} outside [{}, {}]",
            spec.min, spec.max
        )));
    }
    Ok(())
}

/// Active policy settings of the serving system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPolicy")]
pub struct PolicyConfig {
    pub knobs: BTreeMap<String, f64>,
    pub schema_version: u32,
}

#[derive(Deserialize)]
struct RawPolicy {
    #[serde(default)]
    knobs: BTreeMap<String, f64>,
    #[serde(default = "default_schema")]
    schema_version: u32,
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

impl TryFrom<RawPolicy> for PolicyConfig {
    type Error = Error;

    fn try_from(raw: RawPolicy) -> Result<Self> {
        let p = PolicyConfig {
            knobs: raw.knobs,
            schema_version: raw.schema_version,
        };
        p.validate()?;
        Ok(p)
    }
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            knobs: BTreeMap::new(),
            schema_version: SCHEMA_VERSION,
        }
    }
}

impl PolicyConfig {
    pub fn new<I, S>(knobs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let p = Self {
            knobs: knobs.into_iter().map(|(k, v)| (k.into(), v)).collect(),
            schema_version: SCHEMA_VERSION,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version > SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "policy schema version {} is newer than supported {SCHEMA_VERSION}",
                self.schema_version
            )));
        }
        for (k, v) in &self.knobs {
            check_knob(k, *v)?;
        }
        Ok(())
    }

    /// Knob value, falling back to the registry default.
    pub fn get(&self, name: &str) -> f64 {
        match self.knobs.get(name) {
            Some(v) => *v,
            None => knob_spec(name).map(|k| k.default).unwrap_or(0.0),
        }
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        check_knob(name, value)?;
        self.knobs.insert(name.to_string(), value);
        Ok(())
    }

    /// This policy with `overrides` applied on top.
    pub fn with(&self, overrides: &BTreeMap<String, f64>) -> Result<Self> {
        let mut p = self.clone();
        for (k, v) in overrides {
            p.set(k, *v)?;
        }
        Ok(p)
    }
}

/// One counterfactual setting. Id 0 is reserved for the unmodified baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub id: u32,
    pub setting: BTreeMap<String, f64>,
}

pub const BASELINE_GRID_ID: u32 = 0;

impl GridPoint {
    pub fn baseline() -> Self {
        Self {
            id: BASELINE_GRID_ID,
            setting: BTreeMap::new(),
        }
    }

    pub fn new<I, S>(id: u32, setting: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let g = Self {
            id,
            setting: setting.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        for (k, v) in &self.setting {
            check_knob(k, *v)?;
        }
        Ok(())
    }

    pub fn is_baseline(&self) -> bool {
        self.setting.is_empty()
    }

    /// `knob=value;knob=value`, empty for the baseline.
    pub fn setting_string(&self) -> String {
        self.setting
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";")
    }
}

impl fmt::Display for GridPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.id)?;
        for (k, v) in &self.setting {
            write!(f, " {k}={v}")?;
        }
        Ok(())
    }
}

impl FromStr for GridPoint {
    type Err = Error;

    /// Parses `id knob=value knob=value ...`.
    fn from_str(line: &str) -> Result<Self> {
        let mut parts = line.split_whitespace();
        let id = parts
            .next()
            .ok_or_else(|| Error::Schema("empty grid line".into()))?
            .parse::<u32>()
            .map_err(|e| Error::Schema(format!("bad grid id: {e}")))?;
        let mut setting = BTreeMap::new();
        for kv in parts {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Schema(format!("expected knob=value, got `{kv}`")))?;
            let v: f64 = v
                .parse()
                .map_err(|e| Error::Schema(format!("bad value for `{k}`: {e}")))?;
            setting.insert(k.to_string(), v);
        }
        let g = GridPoint { id, setting };
        g.validate()?;
        Ok(g)
    }
}

/// Parse a grid file: one point per line, `#` comments and blank lines ignored.
pub fn parse_grid(text: &str) -> Result<Vec<GridPoint>> {
    let mut grid = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        grid.push(
            line.parse::<GridPoint>()
                .map_err(|e| Error::Schema(format!("grid line {}: {e}", n + 1)))?,
        );
    }
    let mut ids: Vec<u32> = grid.iter().map(|g| g.id).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Schema("duplicate grid point id".into()));
    }
    Ok(grid)
}

pub fn format_grid(grid: &[GridPoint]) -> String {
    let mut out = String::new();
    for g in grid {
        out.push_str(&g.to_string());
        out.push('\n');
    }
    out
}

/// The grid with the baseline point (id 0, empty setting) included; it is
/// prepended when absent, otherwise the grid order is kept.
pub fn with_baseline(grid: &[GridPoint]) -> Result<Vec<GridPoint>> {
    match grid.iter().find(|g| g.id == BASELINE_GRID_ID) {
        Some(g) if !g.is_baseline() => Err(Error::Config(
            "grid id 0 is reserved for the empty baseline setting".into(),
        )),
        Some(_) => Ok(grid.to_vec()),
        None => {
            let mut out = Vec::with_capacity(grid.len() + 1);
            out.push(GridPoint::baseline());
            out.extend(grid.iter().cloned());
            Ok(out)
        }
    }
}
