//! Time series of densities with per-sample diagnostics, shared by both solvers.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{
    functional_f, functional_gq, l2_distance, steady_state, to_u, weighted_bv_norm, Density, Exponents, Weight,
};

/// What to record along a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsConfig {
    /// Exponents for the `G_q` columns.
    pub q_list: Vec<f64>,
    /// Record every `stride`-th step (the first and last are always kept).
    pub stride: usize,
    /// PDE runs only: compute `W₂` between consecutive samples.
    pub record_w2: bool,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig { q_list: Vec::new(), stride: 1, record_w2: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub step: usize,
    pub t: f64,
    pub f_rho: f64,
    /// `W₂` to the previous sample, when known.
    pub w2_step: Option<f64>,
    /// `Σ W₂²` over all JKO steps so far (including unsampled ones).
    pub w2_sq_sum: Option<f64>,
    pub bv_m: f64,
    pub min_u: f64,
    pub max_u: f64,
    pub min_f: f64,
    pub max_f: f64,
    /// `G_q` for each entry of the configured `q_list`.
    pub gq: Vec<f64>,
    pub mass: f64,
    /// `‖f − Mγm‖_{L²}`
    pub l2_steady: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub density: Density,
    pub diagnostics: StepDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub q_list: Vec<f64>,
    pub samples: Vec<Sample>,
}

impl Trajectory {
    pub(crate) fn new(q_list: Vec<f64>) -> Self {
        Trajectory { q_list, samples: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.diagnostics.t).collect()
    }

    pub fn densities(&self) -> impl Iterator<Item = &Density> {
        self.samples.iter().map(|s| &s.density)
    }

    pub fn diagnostics(&self) -> impl Iterator<Item = &StepDiagnostics> {
        self.samples.iter().map(|s| &s.diagnostics)
    }

    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }

    /// Writes the diagnostics table as CSV.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let mut header: Vec<String> =
            ["step", "t", "F_rho", "W2_step", "BV_m", "min_u", "max_u", "min_f", "max_f"].map(String::from).to_vec();
        header.extend(self.q_list.iter().map(|q| format!("Gq_{q}")));
        header.extend(["mass", "L2_steady"].map(String::from));
        wtr.write_record(&header)?;
        for d in self.diagnostics() {
            let mut row = vec![
                d.step.to_string(),
                fmt(d.t),
                fmt(d.f_rho),
                d.w2_step.map(fmt).unwrap_or_default(),
                fmt(d.bv_m),
                fmt(d.min_u),
                fmt(d.max_u),
                fmt(d.min_f),
                fmt(d.max_f),
            ];
            row.extend(d.gq.iter().copied().map(fmt));
            row.push(fmt(d.mass));
            row.push(fmt(d.l2_steady));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn fmt(v: f64) -> String {
    format!("{v:e}")
}

/// Writes one density snapshot as CSV with columns `center, rho, m, f`.
pub fn write_density_csv<W: Write>(out: W, f: &Density, w: &Weight) -> Result<()> {
    w.grid().check_len(f.len())?;
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["center", "rho", "m", "f"])?;
    for i in 0..f.len() {
        wtr.write_record([w.grid().centers()[i], w.rho()[i], w.m()[i], f.values()[i]].map(fmt))?;
    }
    wtr.flush()?;
    Ok(())
}

/// Builds diagnostics for one sample; `steady` is `Mγm` for the run's mass.
pub(crate) struct Recorder<'a> {
    w: &'a Weight,
    exps: &'a Exponents,
    cfg: &'a DiagnosticsConfig,
    steady: Density,
}

impl<'a> Recorder<'a> {
    pub(crate) fn new(f0: &Density, w: &'a Weight, exps: &'a Exponents, cfg: &'a DiagnosticsConfig) -> Result<Self> {
        if cfg.stride == 0 {
            return Err(Error::InvalidParameter("stride must be at least 1".into()));
        }
        for &q in &cfg.q_list {
            if (0.0..=1.0).contains(&q) || !q.is_finite() {
                return Err(Error::UnsupportedExponent(q));
            }
        }
        Ok(Recorder { w, exps, cfg, steady: steady_state(w, f0.mass())? })
    }

    pub(crate) fn keep(&self, step: usize, last: bool) -> bool {
        last || step.is_multiple_of(self.cfg.stride)
    }

    pub(crate) fn sample(
        &self,
        step: usize,
        t: f64,
        f: &Density,
        w2_step: Option<f64>,
        w2_sq_sum: Option<f64>,
    ) -> Sample {
        let u = to_u(f, self.w);
        let grid = self.w.grid();
        let gq = self.cfg.q_list.iter().map(|&q| functional_gq(q, self.w, f).unwrap_or(f64::NAN)).collect();
        let diagnostics = StepDiagnostics {
            step,
            t,
            f_rho: functional_f(self.w, f, self.exps),
            w2_step,
            w2_sq_sum,
            bv_m: weighted_bv_norm(&u, self.w),
            min_u: u.iter().copied().fold(f64::INFINITY, f64::min),
            max_u: u.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            min_f: f.min(),
            max_f: f.max(),
            gq,
            mass: grid.integrate(f.values()).unwrap_or(f64::NAN),
            l2_steady: l2_distance(f.values(), self.steady.values(), grid),
        };
        Sample { density: f.clone(), diagnostics }
    }
}

/// A run that stopped early; `partial` holds everything recorded before the failure.
#[derive(Debug, Clone)]
pub struct Interrupted {
    pub error: Error,
    pub partial: Box<Trajectory>,
}

impl std::fmt::Display for Interrupted {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "run interrupted after {} samples: {}", self.partial.len(), self.error)
    }
}

impl std::error::Error for Interrupted {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}
