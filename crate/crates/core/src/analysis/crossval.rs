use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jko::{jko_run_with, JkoParams};
use crate::measures::{l1_distance, Density, Exponents, Weight};
use crate::pde::{pde_solve_with, PdeParams};
use crate::trajectory::DiagnosticsConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidationSpec {
    pub taus: Vec<f64>,
    pub t_end: f64,
    /// Reference integrator settings (a fine implicit step).
    pub reference: PdeParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub taus: Vec<f64>,
    /// `‖f_JKO(T) − f_PDE(T)‖_{L¹}` per `τ`.
    pub gaps: Vec<f64>,
    /// `log(gap_i / gap_{i+1}) / log(τ_i / τ_{i+1})`
    pub orders: Vec<f64>,
    /// Least-squares slope of `log gap` against `log τ`.
    pub fitted_order: f64,
    pub monotone: bool,
}

/// Runs one JKO trajectory per `τ` (in parallel) against a fine PDE reference.
pub fn cross_validation(
    f0: &Density,
    w: &Weight,
    exps: &Exponents,
    spec: &CrossValidationSpec,
) -> Result<CrossValidation> {
    if spec.taus.len() < 2 {
        return Err(Error::InvalidParameter("need at least two time steps".into()));
    }
    let cfg = DiagnosticsConfig { stride: usize::MAX, ..Default::default() };
    let jobs: Vec<Option<f64>> = std::iter::once(None).chain(spec.taus.iter().map(|&t| Some(t))).collect();
    let finals: Vec<Result<Density>> = jobs
        .par_iter()
        .map(|job| {
            let traj = match job {
                None => pde_solve_with(f0, w, exps, &spec.reference, spec.t_end, &cfg),
                Some(tau) => {
                    let steps = (spec.t_end / tau).round() as usize;
                    if ((steps as f64) * tau - spec.t_end).abs() > 1e-9 * spec.t_end {
                        return Err(Error::InvalidParameter(format!("tau {tau} does not divide the horizon")));
                    }
                    jko_run_with(f0, w, exps, &JkoParams::new(*tau)?, steps, &cfg)
                }
            }
            .map_err(|e| e.error)?;
            Ok(traj.last().expect("at least the initial sample").density.clone())
        })
        .collect();
    let mut finals = finals.into_iter();
    let reference = finals.next().unwrap()?;
    let gaps = finals
        .map(|f| f.map(|f| l1_distance(f.values(), reference.values(), w.grid())))
        .collect::<Result<Vec<f64>>>()?;
    let orders: Vec<f64> =
        gaps.windows(2).zip(spec.taus.windows(2)).map(|(g, t)| (g[0] / g[1]).ln() / (t[0] / t[1]).ln()).collect();
    let lx: Vec<f64> = spec.taus.iter().map(|t| t.ln()).collect();
    let ly: Vec<f64> = gaps.iter().map(|g| g.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(CrossValidation {
        monotone: gaps.windows(2).all(|g| g[1] < g[0]),
        taus: spec.taus.clone(),
        gaps,
        orders,
        fitted_order: sxy / sxx,
    })
}
