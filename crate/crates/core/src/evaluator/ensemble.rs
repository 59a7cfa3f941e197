//! Least-squares stacking of several models' per-segment predictions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Models whose coefficient magnitude falls below this fraction of the
/// largest are dropped by [`select_models`].
pub const SELECTION_THRESHOLD: f64 = 0.05;

const RIDGE: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleWeights {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    /// The normal equations were singular and the ridge term was used.
    #[serde(default)]
    pub ridge: bool,
    /// Models whose predictions were constant; their coefficient is 0.
    #[serde(default)]
    pub degenerate: Vec<usize>,
}

impl EnsembleWeights {
    pub fn identity(models: usize) -> Self {
        EnsembleWeights {
            coefficients: vec![1.0; models],
            intercept: 0.0,
            ridge: false,
            degenerate: Vec::new(),
        }
    }
}

/// In-place Cholesky factor of a symmetric matrix; `None` when a pivot is
/// not safely positive.
fn cholesky(a: &[Vec<f64>], tol: f64) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = a[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            if i == j {
                if !(s > tol) {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Some(l)
}

fn cholesky_solve(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut y = vec![0.0; n];
    for i in 0..n {
        y[i] = (b[i] - (0..i).map(|k| l[i][k] * y[k]).sum::<f64>()) / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        x[i] = (y[i] - (i + 1..n).map(|k| l[k][i] * x[k]).sum::<f64>()) / l[i][i];
    }
    x
}

/// Least squares with intercept. `model_preds[m][s]` is model `m`'s
/// prediction for pooled segment `s`.
pub fn fit_linear_regression(model_preds: &[Vec<f64>], targets: &[f64]) -> Result<EnsembleWeights> {
    let m = model_preds.len();
    let s = targets.len();
    if m == 0 {
        return Err(Error::Invalid("ensemble needs at least one model".into()));
    }
    if s <= m + 1 {
        return Err(Error::Invalid(format!(
            "{s} samples are too few to fit {m} coefficients and an intercept"
        )));
    }
    if let Some(bad) = model_preds.iter().position(|p| p.len() != s) {
        return Err(Error::shape("fit_linear_regression", &[model_preds[bad].len()], &[s]));
    }
    if model_preds.iter().flatten().chain(targets).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("ensemble regression inputs".into()));
    }
    let n = s as f64;
    let y_mean = targets.iter().sum::<f64>() / n;
    let degenerate: Vec<usize> = (0..m)
        .filter(|&j| model_preds[j].iter().all(|&x| x == model_preds[j][0]))
        .collect();
    let active: Vec<usize> = (0..m).filter(|j| !degenerate.contains(j)).collect();
    let means: Vec<f64> = model_preds.iter().map(|p| p.iter().sum::<f64>() / n).collect();
    let centered: Vec<Vec<f64>> = active
        .iter()
        .map(|&j| model_preds[j].iter().map(|x| x - means[j]).collect())
        .collect();
    let yc: Vec<f64> = targets.iter().map(|y| y - y_mean).collect();
    let k = active.len();
    let mut gram = vec![vec![0.0; k]; k];
    for a in 0..k {
        for b in 0..=a {
            let v: f64 = centered[a].iter().zip(&centered[b]).map(|(x, y)| x * y).sum();
            gram[a][b] = v;
            gram[b][a] = v;
        }
    }
    let rhs: Vec<f64> = centered.iter().map(|c| c.iter().zip(&yc).map(|(x, y)| x * y).sum()).collect();
    let scale = (0..k).map(|i| gram[i][i]).fold(0.0, f64::max);
    let (solution, ridge) = match cholesky(&gram, 1e-12 * scale) {
        Some(l) => (cholesky_solve(&l, &rhs), false),
        None => {
            let mut reg = gram.clone();
            for (i, row) in reg.iter_mut().enumerate() {
                row[i] += RIDGE;
            }
            let l = cholesky(&reg, 0.0)
                .ok_or_else(|| Error::Invalid("ensemble normal equations are not positive definite".into()))?;
            (cholesky_solve(&l, &rhs), true)
        }
    };
    let mut coefficients = vec![0.0; m];
    for (&j, &w) in active.iter().zip(&solution) {
        coefficients[j] = w;
    }
    let intercept = y_mean - coefficients.iter().zip(&means).map(|(c, x)| c * x).sum::<f64>();
    Ok(EnsembleWeights {
        coefficients,
        intercept,
        ridge,
        degenerate,
    })
}

/// `intercept + Σ_m coefficient_m · prediction_m`, per segment.
pub fn ensemble_predict(model_preds: &[Vec<f64>], weights: &EnsembleWeights) -> Result<Vec<f64>> {
    if model_preds.len() != weights.coefficients.len() {
        return Err(Error::Invalid(format!(
            "{} models given, weights are for {}",
            model_preds.len(),
            weights.coefficients.len()
        )));
    }
    let t_n = model_preds.first().map_or(0, Vec::len);
    if let Some(bad) = model_preds.iter().find(|p| p.len() != t_n) {
        return Err(Error::shape("ensemble_predict", &[bad.len()], &[t_n]));
    }
    Ok((0..t_n)
        .map(|i| {
            let mut acc = weights.intercept;
            for (p, &c) in model_preds.iter().zip(&weights.coefficients) {
                acc += c * p[i];
            }
            acc
        })
        .collect())
}

/// Indices of models kept by coefficient magnitude.
pub fn select_models(weights: &EnsembleWeights, threshold: f64) -> Vec<usize> {
    let max = weights.coefficients.iter().fold(0.0f64, |a, c| a.max(c.abs()));
    if max == 0.0 {
        return Vec::new();
    }
    (0..weights.coefficients.len())
        .filter(|&j| weights.coefficients[j].abs() >= threshold * max)
        .collect()
}
