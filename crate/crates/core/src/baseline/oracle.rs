use serde::{Deserialize, Serialize};

use crate::cube::{CellCounters, KpiDelta, KpiMetrics};
use crate::error::{Error, Result};

/// A true KPI delta with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleDelta {
    pub delta: KpiDelta,
    pub se: KpiDelta,
}

struct Moments {
    n: f64,
    mean: [f64; 5],
    var: [f64; 5],
    cov_rev_clicks: f64,
}

// columns: revenue, clicks, impressions, mainline impressions, requests
fn moments(records: &[CellCounters]) -> Moments {
    let row = |c: &CellCounters| {
        [
            c.revenue(),
            c.expected_clicks(),
            c.impressions as f64,
            c.mainline_impressions as f64,
            c.requests as f64,
        ]
    };
    let n = records.len() as f64;
    let mut mean = [0.0; 5];
    for r in records {
        for (m, v) in mean.iter_mut().zip(row(r)) {
            *m += v / n;
        }
    }
    let mut var = [0.0; 5];
    let mut cov = 0.0;
    for r in records {
        let v = row(r);
        for j in 0..5 {
            var[j] += (v[j] - mean[j]).powi(2) / (n - 1.0);
        }
        cov += (v[0] - mean[0]) * (v[1] - mean[1]) / (n - 1.0);
    }
    Moments { n, mean, var, cov_rev_clicks: cov }
}

/// Delta between two per-request record sets with the standard error of an
/// A/B comparison of independent samples (delta method).
pub fn ab_delta(treatment: &[CellCounters], control: &[CellCounters]) -> Result<OracleDelta> {
    if treatment.len() < 2 || control.len() < 2 {
        return Err(Error::Config("need at least two requests per arm".into()));
    }
    if treatment.iter().chain(control).any(|c| c.requests != 1) {
        return Err(Error::Config("expected one request per record".into()));
    }
    let t = moments(treatment);
    let c = moments(control);
    // squared coefficient of variation of a mean
    let cv2 = |m: &Moments, j: usize| m.var[j] / (m.n * m.mean[j] * m.mean[j]);
    let per_request = |j: usize| {
        let r = t.mean[j] / c.mean[j];
        (c.mean[j] > 0.0).then(|| r * (cv2(&t, j) + cv2(&c, j)).sqrt())
    };
    let ln_cpc_var = |m: &Moments| {
        cv2(m, 0) + cv2(m, 1) - 2.0 * m.cov_rev_clicks / (m.n * m.mean[0] * m.mean[1])
    };
    let sum = |v: &[CellCounters]| {
        let mut s = CellCounters::default();
        for c in v {
            s.add(c);
        }
        s
    };
    let mt = KpiMetrics::from_counters(&sum(treatment));
    let mc = KpiMetrics::from_counters(&sum(control));
    let delta = KpiDelta::between(&mt, &mc);
    let cpc_se = match (mt.cpc, mc.cpc) {
        (Some(a), Some(b)) if b > 0.0 => Some(a / b * (ln_cpc_var(&t) + ln_cpc_var(&c)).max(0.0).sqrt()),
        _ => None,
    };
    Ok(OracleDelta {
        delta,
        se: KpiDelta {
            rpm: per_request(0),
            cy: per_request(1),
            iy: per_request(2),
            mliy: per_request(3),
            cpc: cpc_se,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(rev_micros: i64, clicks: f64, imps: u64, ml: u64) -> CellCounters {
        CellCounters {
            requests: 1,
            impressions: imps,
            mainline_impressions: ml,
            expected_clicks_micros: crate::cube::to_micros(clicks),
            revenue_micros: rev_micros,
        }
    }

    #[test]
    fn identical_arms_have_zero_delta() {
        let v: Vec<_> = (0..50).map(|i| rec(1000 * (i % 7) as i64, 0.1 * (i % 3) as f64, 3, i % 2)).collect();
        let d = ab_delta(&v, &v).unwrap();
        assert_eq!(d.delta.rpm, Some(0.0));
        assert!(d.se.rpm.unwrap() > 0.0);
    }

    #[test]
    fn constant_arms_have_zero_se() {
        let t = vec![rec(2000, 0.5, 4, 2); 10];
        let c = vec![rec(1000, 0.5, 4, 1); 10];
        let d = ab_delta(&t, &c).unwrap();
        assert!((d.delta.rpm.unwrap() - 1.0).abs() < 1e-12);
        assert!((d.delta.mliy.unwrap() - 1.0).abs() < 1e-12);
        assert!(d.se.rpm.unwrap() < 1e-12);
        assert!(d.se.cy.unwrap() < 1e-12);
    }

    #[test]
    fn rejects_small_or_aggregated_arms() {
        assert!(ab_delta(&[rec(1, 0.1, 1, 0)], &[rec(1, 0.1, 1, 0); 3]).is_err());
        let agg = CellCounters { requests: 2, ..rec(1, 0.1, 1, 0) };
        assert!(ab_delta(&[agg, agg], &[agg, agg]).is_err());
    }
}
