use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegressionKind {
    Linear,
    Ridge,
}

/// Exponent tuples of all monomials of total degree ≤ `degree` in `k`
/// variables: graded, then lexicographic in variable index within a degree.
fn monomials(k: usize, degree: u32) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    let mut prev: Vec<Vec<usize>> = vec![vec![]];
    for _ in 0..degree {
        let mut next = Vec::new();
        for m in &prev {
            let start = m.last().copied().unwrap_or(0);
            for v in start..k {
                let mut n = m.clone();
                n.push(v);
                next.push(n);
            }
        }
        out.extend(next.iter().cloned());
        prev = next;
    }
    out
}

/// All monomials of `x` up to total degree `degree`, constant first.
///
/// For `(a, b)` at degree 2 this is `[1, a, b, a², ab, b²]`.
pub fn poly_features(x: &[f64], degree: u32) -> Vec<f64> {
    monomials(x.len(), degree)
        .iter()
        .map(|m| m.iter().map(|&v| x[v]).product())
        .collect()
}

/// Names matching [`poly_features`] order, e.g. `a*b`.
pub fn poly_feature_names(dims: &[String], degree: u32) -> Vec<String> {
    monomials(dims.len(), degree)
        .iter()
        .map(|m| {
            if m.is_empty() {
                "1".to_string()
            } else {
                m.iter().map(|&v| dims[v].as_str()).collect::<Vec<_>>().join("*")
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: RegressionKind,
    pub degree: u32,
    pub lambda: f64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            kind: RegressionKind::Ridge,
            degree: 2,
            lambda: 1e-3,
        }
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.degree) {
            return Err(Error::Config(format!("degree {} not in 1..=3", self.degree)));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::Config("lambda must be non-negative".into()));
        }
        Ok(())
    }

    fn effective_lambda(&self) -> f64 {
        match self.kind {
            RegressionKind::Linear => 0.0,
            RegressionKind::Ridge => self.lambda,
        }
    }
}

/// Polynomial surrogate for one KPI delta.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionModel {
    pub kind: RegressionKind,
    pub degree: u32,
    pub lambda: f64,
    /// Coefficients in original feature units, in [`poly_features`] order.
    pub coefficients: Vec<f64>,
    pub target_metric: String,
}

impl RegressionModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        poly_features(x, self.degree)
            .iter()
            .zip(&self.coefficients)
            .map(|(f, b)| f * b)
            .sum()
    }
}

/// Columns (by feature index) that are linear combinations of earlier ones.
fn collinear_columns(z: &DMatrix<f64>) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut bad = Vec::new();
    for j in 0..z.ncols() {
        let col = z.column(j).into_owned();
        let mut r = col.clone();
        for b in &basis {
            let proj = r.dot(b);
            r -= b * proj;
        }
        let n = r.norm();
        if n <= 1e-9 * col.norm().max(1.0) {
            bad.push(j);
        } else {
            basis.push(r / n);
        }
    }
    bad
}

/// Least squares (optionally ridge-penalized) polynomial fit.
///
/// Non-constant features are standardized before solving; the ridge penalty
/// applies to all coefficients except the intercept. Coefficients are
/// returned in original units.
pub fn fit_regression(
    x: &[Vec<f64>],
    dy: &[f64],
    spec: &ModelSpec,
    target_metric: &str,
) -> Result<RegressionModel> {
    spec.validate()?;
    if x.len() != dy.len() || x.is_empty() {
        return Err(Error::Config(format!(
            "need matching non-empty inputs, got {} points and {} targets",
            x.len(),
            dy.len()
        )));
    }
    let k = x[0].len();
    if x.iter().any(|r| r.len() != k) {
        return Err(Error::Config("points have differing dimensions".into()));
    }
    let n = x.len();
    let feats: Vec<Vec<f64>> = x.iter().map(|r| poly_features(r, spec.degree)).collect();
    let m = feats[0].len();
    let mut mean = vec![0.0; m];
    let mut sd = vec![1.0; m];
    for j in 1..m {
        let mu = feats.iter().map(|f| f[j]).sum::<f64>() / n as f64;
        let var = feats.iter().map(|f| (f[j] - mu).powi(2)).sum::<f64>() / n as f64;
        mean[j] = mu;
        sd[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
    }
    let z = DMatrix::from_fn(n, m, |i, j| {
        if j == 0 {
            1.0
        } else {
            (feats[i][j] - mean[j]) / sd[j]
        }
    });
    let lambda = spec.effective_lambda();
    let singular = |cols: Vec<usize>| {
        let dims: Vec<String> = (0..k).map(|i| format!("x{i}")).collect();
        let names = poly_feature_names(&dims, spec.degree);
        Error::Singular {
            columns: cols.into_iter().map(|c| names[c].clone()).collect(),
        }
    };
    if lambda == 0.0 {
        let bad = collinear_columns(&z);
        if !bad.is_empty() {
            return Err(singular(bad));
        }
    }
    let mut a = z.transpose() * &z;
    for j in 1..m {
        a[(j, j)] += lambda;
    }
    let b = z.transpose() * DVector::from_column_slice(dy);
    let chol = a.cholesky().ok_or_else(|| singular(collinear_columns(&z)))?;
    let gamma = chol.solve(&b);
    let mut coefficients = vec![0.0; m];
    coefficients[0] = gamma[0];
    for j in 1..m {
        coefficients[j] = gamma[j] / sd[j];
        coefficients[0] -= gamma[j] * mean[j] / sd[j];
    }
    Ok(RegressionModel {
        kind: spec.kind,
        degree: spec.degree,
        lambda,
        coefficients,
        target_metric: target_metric.to_string(),
    })
}

pub fn rmse(model: &RegressionModel, x: &[Vec<f64>], dy: &[f64]) -> f64 {
    let se: f64 = x
        .iter()
        .zip(dy)
        .map(|(r, y)| (model.predict(r) - y).powi(2))
        .sum();
    (se / x.len() as f64).sqrt()
}

pub const DEFAULT_FOLDS: usize = 3;

/// Mean held-out RMSE over `folds` seeded random folds.
pub fn rmse_cv(x: &[Vec<f64>], dy: &[f64], folds: usize, spec: &ModelSpec, seed: u64) -> Result<f64> {
    if folds < 2 || x.len() < folds || x.len() != dy.len() {
        return Err(Error::Config(format!(
            "cross validation needs at least {folds} ≥ 2 points, got {}",
            x.len()
        )));
    }
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.shuffle(&mut rng_for(seed, "cv-folds"));
    let mut total = 0.0;
    for f in 0..folds {
        let (mut tx, mut ty, mut vx, mut vy) = (vec![], vec![], vec![], vec![]);
        for (pos, &i) in idx.iter().enumerate() {
            if pos % folds == f {
                vx.push(x[i].clone());
                vy.push(dy[i]);
            } else {
                tx.push(x[i].clone());
                ty.push(dy[i]);
            }
        }
        let m = fit_regression(&tx, &ty, spec, "cv")?;
        total += rmse(&m, &vx, &vy);
    }
    Ok(total / folds as f64)
}
