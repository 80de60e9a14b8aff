use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Least-squares fit of `log v = log C − c t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpFit {
    pub amplitude: f64,
    pub rate: f64,
    /// Coefficient of determination; 0 when the data are constant.
    pub r_squared: f64,
    /// Set when `R²` is undefined (no variance in `log v`).
    pub degenerate: bool,
}

pub fn fit_exponential_decay(times: &[f64], values: &[f64]) -> Result<ExpFit> {
    if times.len() != values.len() {
        return Err(Error::Shape { expected: times.len(), got: values.len() });
    }
    if times.len() < 5 {
        return Err(Error::InvalidParameter(format!("need at least 5 samples, got {}", times.len())));
    }
    if let Some(&v) = values.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::NonPositiveValue(v));
    }
    let n = times.len() as f64;
    let y: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let tm = times.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let sxx: f64 = times.iter().map(|t| (t - tm).powi(2)).sum();
    let sxy: f64 = times.iter().zip(&y).map(|(t, v)| (t - tm) * (v - ym)).sum();
    let syy: f64 = y.iter().map(|v| (v - ym).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("sample times are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * tm;
    let degenerate = syy <= 1e-28 * (1.0 + ym * ym) * n;
    let r_squared = if degenerate {
        0.0
    } else {
        let ss_res: f64 = times.iter().zip(&y).map(|(t, v)| (v - intercept - slope * t).powi(2)).sum();
        1.0 - ss_res / syy
    };
    Ok(ExpFit { amplitude: intercept.exp(), rate: if degenerate { 0.0 } else { -slope }, r_squared, degenerate })
}
