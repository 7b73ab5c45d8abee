use crate::error::{Error, Result};

pub const LOGLOSS_EPS: f64 = 1e-12;

fn check(preds: &[f64], labels: &[f64]) -> Result<()> {
    if preds.len() != labels.len() {
        return Err(Error::Schema(format!(
            "{} predictions vs {} labels",
            preds.len(),
            labels.len()
        )));
    }
    if let Some(l) = labels.iter().find(|l| **l != 0.0 && **l != 1.0) {
        return Err(Error::Schema(format!("label {l} not in {{0, 1}}")));
    }
    Ok(())
}

/// `|sum(y) - sum(y_hat)| / sum(y)`.
pub fn eval_cumulative_error(preds: &[f64], labels: &[f64]) -> Result<f64> {
    check(preds, labels)?;
    let sy: f64 = labels.iter().sum();
    if sy <= 0.0 {
        return Err(Error::UndefinedMetric(
            "cumulative error needs at least one positive label".into(),
        ));
    }
    let sp: f64 = preds.iter().sum();
    Ok((sy - sp).abs() / sy)
}

/// Mean log loss with predictions clipped to `[eps, 1 - eps]`.
pub fn eval_logloss(preds: &[f64], labels: &[f64]) -> Result<f64> {
    check(preds, labels)?;
    if preds.is_empty() {
        return Err(Error::UndefinedMetric("log loss of an empty set".into()));
    }
    let total: f64 = preds
        .iter()
        .zip(labels)
        .map(|(p, y)| {
            let p = p.clamp(LOGLOSS_EPS, 1.0 - LOGLOSS_EPS);
            -y * p.ln() - (1.0 - y) * (1.0 - p).ln()
        })
        .sum();
    Ok(total / preds.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cumulative_examples() {
        assert_eq!(eval_cumulative_error(&[0.5, 0.5], &[1.0, 0.0]).unwrap(), 0.0);
        let labels: Vec<f64> = (0..200).map(|i| if i < 100 { 1.0 } else { 0.0 }).collect();
        let preds = vec![110.0 / 200.0; 200];
        assert!((eval_cumulative_error(&preds, &labels).unwrap() - 0.10).abs() < 1e-12);
        assert_eq!(eval_cumulative_error(&labels, &labels).unwrap(), 0.0);
        assert!(matches!(
            eval_cumulative_error(&[0.2], &[0.0]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn logloss_examples() {
        let l = eval_logloss(&[0.5; 4], &[1.0, 0.0, 1.0, 0.0]).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        let perfect = eval_logloss(&[1.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!(perfect <= -(1.0 - LOGLOSS_EPS).ln() + 1e-18);
        assert!((eval_logloss(&[0.25], &[1.0]).unwrap() - 1.386_294_361_119_890_6).abs() < 1e-12);
        assert!(matches!(eval_logloss(&[0.1], &[]), Err(Error::Schema(_))));
    }
}
