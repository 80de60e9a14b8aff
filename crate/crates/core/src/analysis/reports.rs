use serde::{Deserialize, Serialize};

use super::fit::{fit_exponential_decay, ExpFit};
use super::worst_increase;
use crate::error::{Error, Result};
use crate::measures::{to_u, weighted_bv_norm, Weight};
use crate::trajectory::Trajectory;

/// Slack used for all monotonicity verdicts.
const SLACK: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnackReport {
    pub times: Vec<f64>,
    pub min_f: Vec<f64>,
    pub max_f: Vec<f64>,
    /// `C_t = max(max f, 1/min f)`
    pub c_t: Vec<f64>,
    /// Largest increase of `C_t` between consecutive samples.
    pub worst_increase: f64,
    pub nonincreasing: bool,
    /// Whether `max f` and `1/min f` are each nonincreasing (reported only).
    pub max_nonincreasing: bool,
    pub inv_min_nonincreasing: bool,
}

pub fn harnack_report(traj: &Trajectory, _w: &Weight) -> HarnackReport {
    let times = traj.times();
    let min_f: Vec<f64> = traj.diagnostics().map(|d| d.min_f).collect();
    let max_f: Vec<f64> = traj.diagnostics().map(|d| d.max_f).collect();
    let c_t: Vec<f64> = min_f.iter().zip(&max_f).map(|(lo, hi)| hi.max(1.0 / lo)).collect();
    let inv_min: Vec<f64> = min_f.iter().map(|v| 1.0 / v).collect();
    let worst = worst_increase(&c_t);
    HarnackReport {
        nonincreasing: worst <= SLACK,
        max_nonincreasing: worst_increase(&max_f) <= SLACK,
        inv_min_nonincreasing: worst_increase(&inv_min) <= SLACK,
        worst_increase: worst,
        times,
        min_f,
        max_f,
        c_t,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub times: Vec<f64>,
    /// `∫(f − g)₊`
    pub positive: Vec<f64>,
    /// `∫(f − g)₋`
    pub negative: Vec<f64>,
    /// `∫|f − g|`
    pub total: Vec<f64>,
    /// Largest increase of each series.
    pub worst_increase: [f64; 3],
    pub nonincreasing: bool,
}

pub fn contraction_report(traj_f: &Trajectory, traj_g: &Trajectory, w: &Weight) -> Result<ContractionReport> {
    let times = traj_f.times();
    let tg = traj_g.times();
    if times.len() != tg.len() || times.iter().zip(&tg).any(|(a, b)| (a - b).abs() > 1e-12 * (1.0 + a.abs())) {
        return Err(Error::TimeGridMismatch);
    }
    let grid = w.grid();
    let (mut positive, mut negative, mut total) = (Vec::new(), Vec::new(), Vec::new());
    for (f, g) in traj_f.densities().zip(traj_g.densities()) {
        grid.check_len(f.len())?;
        grid.check_len(g.len())?;
        let (mut p, mut n) = (0.0, 0.0);
        for (a, b) in f.values().iter().zip(g.values()) {
            let d = a - b;
            if d > 0.0 {
                p += d;
            } else {
                n -= d;
            }
        }
        positive.push(grid.h() * p);
        negative.push(grid.h() * n);
        total.push(grid.h() * (p + n));
    }
    let worst = [worst_increase(&positive), worst_increase(&negative), worst_increase(&total)];
    Ok(ContractionReport {
        times,
        positive,
        negative,
        total,
        nonincreasing: worst.iter().all(|&x| x <= SLACK),
        worst_increase: worst,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BvReport {
    pub times: Vec<f64>,
    /// `‖f/m‖_{BV(Ω;m)}`
    pub bv: Vec<f64>,
    pub worst_increase: f64,
    /// Asserted only for `Λ ≤ 0`; `None` otherwise.
    pub nonincreasing: Option<bool>,
    /// Largest `log(BV(t₁)/BV(t₀)) / (t₁ − t₀)` over consecutive samples.
    pub max_log_growth_rate: f64,
    /// Exponential fit over samples with `t ≥ t_burn`; `None` if too few or zero values.
    pub fit: Option<ExpFit>,
}

/// `t_burn` excludes the initial transient from the fit.
pub fn bv_convergence_report(traj: &Trajectory, w: &Weight, t_burn: f64) -> BvReport {
    let times = traj.times();
    let bv: Vec<f64> = traj.densities().map(|f| weighted_bv_norm(&to_u(f, w), w)).collect();
    let worst = worst_increase(&bv);
    let max_log_growth_rate = times
        .windows(2)
        .zip(bv.windows(2))
        .filter(|(_, b)| b[0] > 0.0 && b[1] > 0.0)
        .map(|(t, b)| (b[1] / b[0]).ln() / (t[1] - t[0]))
        .fold(f64::NEG_INFINITY, f64::max);
    let (ft, fv): (Vec<f64>, Vec<f64>) =
        times.iter().zip(&bv).filter(|(t, _)| **t >= t_burn).map(|(t, b)| (*t, *b)).unzip();
    BvReport {
        nonincreasing: (w.semiconcavity() <= 0.0).then_some(worst <= SLACK),
        worst_increase: worst,
        max_log_growth_rate,
        fit: fit_exponential_decay(&ft, &fv).ok(),
        times,
        bv,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, Domain};
    use crate::measures::{steady_state, weight_from_rho, Density, Exponents};
    use crate::pde::{pde_solve_with, PdeParams};
    use crate::trajectory::DiagnosticsConfig;
    use std::f64::consts::PI;

    fn setup() -> (Weight, Exponents) {
        let g = make_grid(Domain::torus(1.0).unwrap(), 64).unwrap();
        let e = Exponents::new(1.0).unwrap();
        (weight_from_rho(|x| 1.0 + 0.5 * (2.0 * PI * x).cos(), &g, &e, 0.0).unwrap(), e)
    }

    fn run(f0: &Density, w: &Weight, e: &Exponents) -> Trajectory {
        let cfg = DiagnosticsConfig { stride: 10, ..Default::default() };
        pde_solve_with(f0, w, e, &PdeParams::implicit(1e-3).unwrap(), 0.1, &cfg).unwrap()
    }

    #[test]
    fn steady_trajectory() {
        let (w, e) = setup();
        let f = steady_state(&w, 1.0).unwrap();
        let tr = run(&f, &w, &e);
        let h = harnack_report(&tr, &w);
        let gamma = 1.0 / w.grid().integrate(w.m()).unwrap();
        let expect = (gamma * w.max_m()).max(1.0 / (gamma * w.min_m()));
        assert!(h.c_t.iter().all(|c| (c - expect).abs() < 1e-10));
        assert!(h.nonincreasing);
        let bv = bv_convergence_report(&tr, &w, 0.0);
        assert!(bv.bv.iter().all(|b| b.abs() < 1e-10));
        let c = contraction_report(&tr, &tr, &w).unwrap();
        assert!(c.total.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn ordered_pair_one_sided() {
        let (w, e) = setup();
        let g = w.grid();
        let f0 = Density::new(g.sample(|x| 1.6 + 0.3 * (2.0 * PI * x).sin()), g).unwrap();
        let g0 = Density::new(g.sample(|x| 1.0 + 0.2 * (4.0 * PI * x).cos()), g).unwrap();
        let c = contraction_report(&run(&f0, &w, &e), &run(&g0, &w, &e), &w).unwrap();
        assert!(c.negative.iter().all(|v| *v <= 1e-10));
        assert!(c.nonincreasing);
    }

    #[test]
    fn mismatched_times() {
        let (w, e) = setup();
        let f = steady_state(&w, 1.0).unwrap();
        let a = run(&f, &w, &e);
        let cfg = DiagnosticsConfig { stride: 5, ..Default::default() };
        let b = pde_solve_with(&f, &w, &e, &PdeParams::implicit(1e-3).unwrap(), 0.1, &cfg).unwrap();
        assert_eq!(contraction_report(&a, &b, &w), Err(Error::TimeGridMismatch));
    }
}
