//! Line-delimited log files and their validation.
//!
//! One JSON object per line, so a truncated or corrupted line is detected and
//! skipped on its own. Dataset metadata (logging policy, drift) lives in a
//! sidecar file next to the log.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::generate::{DriftSpec, LogDataset};
use crate::auction::AuctionData;
use crate::error::Result;
use crate::policy::PolicyConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    /// 1-based line number.
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversionStats {
    pub total: usize,
    pub converted: usize,
    pub rejected: Vec<Rejection>,
    /// `converted / total`, or 1.0 for an empty stream.
    pub conversion_success: f64,
    pub zero_total: bool,
}

fn check_record(r: &AuctionData) -> std::result::Result<(), String> {
    if r.ads.is_empty() {
        return Err("no ads".into());
    }
    for a in &r.ads {
        if !(a.bid > 0.0 && a.bid.is_finite()) {
            return Err(format!("ad {}: bid must be positive", a.ad_id));
        }
        if !(a.pclick > 0.0 && a.pclick < 1.0) {
            return Err(format!("ad {}: pclick outside (0, 1)", a.ad_id));
        }
        if !(a.quality >= 0.0 && a.quality.is_finite()) {
            return Err(format!("ad {}: negative quality", a.ad_id));
        }
    }
    if r.page_templates.is_empty() {
        return Err("no page templates".into());
    }
    if !r.logged_clicks.is_empty() && r.logged_clicks.len() != r.logged_allocation.placements.len() {
        return Err("click outcomes do not match placements".into());
    }
    Ok(())
}

/// Parse and validate log lines. Bad lines are counted and skipped; only a
/// failing reader is an error. Blank lines are ignored.
pub fn validate_and_convert<R: BufRead>(mut raw: R) -> Result<(Vec<AuctionData>, ConversionStats)> {
    let mut records = Vec::new();
    let mut rejected = Vec::new();
    let mut seen = HashSet::new();
    let mut total = 0;
    let mut buf = Vec::new();
    let mut line_no = 0;
    loop {
        buf.clear();
        if raw.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        line_no += 1;
        if buf.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        total += 1;
        let parsed = std::str::from_utf8(&buf)
            .map_err(|e| format!("invalid UTF-8: {e}"))
            .and_then(|s| serde_json::from_str::<AuctionData>(s).map_err(|e| e.to_string()))
            .and_then(|r| check_record(&r).map(|_| r))
            .and_then(|r| {
                if seen.insert(r.request_id) {
                    Ok(r)
                } else {
                    Err(format!("duplicate request id {}", r.request_id))
                }
            });
        match parsed {
            Ok(r) => records.push(r),
            Err(reason) => rejected.push(Rejection { line: line_no, reason }),
        }
    }
    let converted = records.len();
    let stats = ConversionStats {
        total,
        converted,
        rejected,
        conversion_success: if total == 0 { 1.0 } else { converted as f64 / total as f64 },
        zero_total: total == 0,
    };
    Ok((records, stats))
}

pub fn write_records<W: Write>(records: &[AuctionData], mut w: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DatasetMeta {
    logging_policy: PolicyConfig,
    drift_spec: Option<DriftSpec>,
}

/// Path of the metadata sidecar for a log file.
pub fn meta_path(log: &Path) -> PathBuf {
    let mut s = log.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

pub fn save_dataset(ds: &LogDataset, path: &Path) -> Result<()> {
    write_records(&ds.records, BufWriter::new(File::create(path)?))?;
    let meta = DatasetMeta {
        logging_policy: ds.logging_policy.clone(),
        drift_spec: ds.drift_spec.clone(),
    };
    std::fs::write(meta_path(path), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

/// Load a log file through [`validate_and_convert`]. Without a sidecar the
/// logging policy defaults to the first record's policy.
pub fn load_dataset(path: &Path) -> Result<(LogDataset, ConversionStats)> {
    let (records, stats) = validate_and_convert(BufReader::new(File::open(path)?))?;
    let mp = meta_path(path);
    let meta = if mp.exists() {
        serde_json::from_str(&std::fs::read_to_string(mp)?)?
    } else {
        DatasetMeta {
            logging_policy: records
                .first()
                .map(|r| r.policy_params.clone())
                .unwrap_or_default(),
            drift_spec: None,
        }
    };
    Ok((
        LogDataset {
            records,
            logging_policy: meta.logging_policy,
            drift_spec: meta.drift_spec,
        },
        stats,
    ))
}
