//! Finite-volume integrator for `∂ₜf = −σ div(m ∇u^{−r})`, `u = f/m`.
//!
//! Face flux `F_{i+1/2} = σ m_{i+1/2} (u_{i+1}^{−r} − u_i^{−r}) / h`, zero at the
//! ends of an interval and wrapped on the torus. The update is always written in
//! conservative form `f_i ← f_i − (dt/h)(F_{i+1/2} − F_{i−1/2})`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{solve_cyclic_tridiagonal, solve_tridiagonal};
use crate::measures::{to_u, Density, Exponents, Weight};
use crate::trajectory::{DiagnosticsConfig, Interrupted, Recorder, Trajectory};
use crate::transport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    ImplicitNewton,
    ExplicitAdaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdeParams {
    pub dt: f64,
    pub scheme: Scheme,
    /// Newton stops when the sup-norm residual is below `newton_tol · max(1, max f)`.
    pub newton_tol: f64,
    pub max_newton: usize,
    /// Fraction of the explicit stability bound actually used.
    pub cfl_safety: f64,
}

impl PdeParams {
    pub fn implicit(dt: f64) -> Result<Self> {
        let p = PdeParams { dt, scheme: Scheme::ImplicitNewton, newton_tol: 1e-11, max_newton: 50, cfl_safety: 0.4 };
        p.validate()?;
        Ok(p)
    }

    pub fn explicit(dt: f64) -> Result<Self> {
        let p = PdeParams { scheme: Scheme::ExplicitAdaptive, ..Self::implicit(dt)? };
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.newton_tol > 0.0) || self.max_newton == 0 {
            return Err(Error::InvalidParameter("Newton tolerance and iteration cap must be positive".into()));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::InvalidParameter("cfl_safety must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Face fluxes `F_{i+1/2}` for `i = 0..n` (the last is the wrap face; zero on an interval).
fn fluxes(u: &[f64], w: &Weight, exps: &Exponents) -> Vec<f64> {
    let n = u.len();
    let h = w.grid().h();
    let periodic = w.grid().is_periodic();
    let p: Vec<f64> = u.iter().map(|&v| v.powf(-exps.r())).collect();
    (0..n)
        .map(|i| if i + 1 == n && !periodic { 0.0 } else { exps.sigma() * w.m_face(i) * (p[(i + 1) % n] - p[i]) / h })
        .collect()
}

fn conservative_update(f: &[f64], flux: &[f64], ratio: f64) -> Vec<f64> {
    let n = f.len();
    (0..n).map(|i| f[i] - ratio * (flux[i] - flux[(i + n - 1) % n])).collect()
}

/// Explicit stability bound `h² min m / (rσ max m max u^{−σ})`.
pub fn explicit_dt_bound(f: &Density, w: &Weight, exps: &Exponents) -> f64 {
    let u = to_u(f, w);
    let umin = u.iter().copied().fold(f64::INFINITY, f64::min);
    let h = w.grid().h();
    h * h * w.min_m() / (exps.r() * exps.sigma() * w.max_m() * umin.powf(-exps.sigma()))
}

fn implicit_step(f: &Density, w: &Weight, exps: &Exponents, params: &PdeParams, dt: f64) -> Result<Vec<f64>> {
    let n = f.len();
    let h = w.grid().h();
    let periodic = w.grid().is_periodic();
    let ratio = dt / h;
    let (r, sigma) = (exps.r(), exps.sigma());
    let m = w.m();
    let fv = f.values();
    let scale = params.newton_tol * f.max().max(1.0);
    let residual = |u: &[f64]| -> Vec<f64> {
        let q = fluxes(u, w, exps);
        (0..n).map(|i| m[i] * u[i] - fv[i] + ratio * (q[i] - q[(i + n - 1) % n])).collect()
    };
    let mut u = to_u(f, w);
    let mut res = residual(&u);
    let mut rnorm = res.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut it = 0;
    while rnorm > scale {
        if it >= params.max_newton {
            return Err(Error::NewtonFailed { iterations: it, residual: rnorm });
        }
        it += 1;
        // k_i = σ r u_i^{−σ} / h: derivative of the face potential difference.
        let k: Vec<f64> = u.iter().map(|&v| sigma * r * v.powf(-sigma) / h).collect();
        let mut lower = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut upper = vec![0.0; n];
        for i in 0..n {
            diag[i] = m[i];
            let has_right = periodic || i + 1 < n;
            let has_left = periodic || i > 0;
            if has_right {
                let mf = w.m_face(i);
                diag[i] += ratio * mf * k[i];
                upper[i] = -ratio * mf * k[(i + 1) % n];
            }
            if has_left {
                let l = (i + n - 1) % n;
                let mf = w.m_face(l);
                diag[i] += ratio * mf * k[i];
                lower[i] = -ratio * mf * k[l];
            }
        }
        let rhs: Vec<f64> = res.iter().map(|v| -v).collect();
        let delta = if periodic {
            solve_cyclic_tridiagonal(&lower, &diag, &upper, &rhs)
        } else {
            solve_tridiagonal(&lower, &diag, &upper, &rhs)
        }
        .ok_or(Error::NewtonFailed { iterations: it, residual: rnorm })?;
        // Stay positive: never shrink a cell by more than 90% in one iteration.
        let mut alpha: f64 = 1.0;
        for (ui, di) in u.iter().zip(&delta) {
            if *di < 0.0 {
                alpha = alpha.min(0.9 * ui / -di);
            }
        }
        let mut accepted = false;
        for _ in 0..40 {
            let cand: Vec<f64> = u.iter().zip(&delta).map(|(ui, di)| ui + alpha * di).collect();
            let cres = residual(&cand);
            let cnorm = cres.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if cnorm < rnorm || cnorm <= scale {
                u = cand;
                res = cres;
                rnorm = cnorm;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Err(Error::NewtonFailed { iterations: it, residual: rnorm });
        }
    }
    let next = conservative_update(fv, &fluxes(&u, w, exps), ratio);
    if let Some((index, &value)) = next.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::Positivity { index, value });
    }
    Ok(next)
}

fn explicit_step(f: &Density, w: &Weight, exps: &Exponents, params: &PdeParams, dt: f64) -> Result<Vec<f64>> {
    let grid = w.grid();
    let h = grid.h();
    let mut cur = f.clone();
    let mut remaining = dt;
    while remaining > 0.0 {
        let bound = params.cfl_safety * explicit_dt_bound(&cur, w, exps);
        let mut sub = remaining.min(bound);
        let mut retries = 0;
        let next = loop {
            let q = fluxes(&to_u(&cur, w), w, exps);
            let cand = conservative_update(cur.values(), &q, sub / h);
            if cand.iter().all(|&v| v > 0.0) {
                break cand;
            }
            retries += 1;
            if retries > 20 {
                return Err(Error::PositivityLost { retries });
            }
            sub *= 0.5;
        };
        cur = Density::new(next, grid)?;
        remaining -= sub;
        if remaining < 1e-15 * dt {
            break;
        }
    }
    Ok(cur.values().to_vec())
}

/// Advances `f` by `params.dt`.
pub fn pde_step(f: &Density, w: &Weight, exps: &Exponents, params: &PdeParams) -> Result<Density> {
    advance(f, w, exps, params, params.dt)
}

fn advance(f: &Density, w: &Weight, exps: &Exponents, params: &PdeParams, dt: f64) -> Result<Density> {
    params.validate()?;
    w.grid().check_len(f.len())?;
    if let Some((index, &value)) = f.values().iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::Positivity { index, value });
    }
    let next = match params.scheme {
        Scheme::ImplicitNewton => implicit_step(f, w, exps, params, dt)?,
        Scheme::ExplicitAdaptive => explicit_step(f, w, exps, params, dt)?,
    };
    Density::new(next, w.grid())
}

/// Implicit step that splits `dt` in halves (recursively, at most 20 levels) when Newton fails.
fn advance_robust(
    f: &Density,
    w: &Weight,
    exps: &Exponents,
    params: &PdeParams,
    dt: f64,
    depth: u32,
) -> Result<Density> {
    match advance(f, w, exps, params, dt) {
        Err(Error::NewtonFailed { .. } | Error::Positivity { .. })
            if depth < 20 && params.scheme == Scheme::ImplicitNewton =>
        {
            let mid = advance_robust(f, w, exps, params, 0.5 * dt, depth + 1)?;
            advance_robust(&mid, w, exps, params, 0.5 * dt, depth + 1)
        }
        other => other,
    }
}

/// Integrates to `t_end`; the last step is shortened to land on it exactly.
pub fn pde_solve(
    f0: &Density,
    w: &Weight,
    exps: &Exponents,
    params: &PdeParams,
    t_end: f64,
) -> std::result::Result<Trajectory, Interrupted> {
    pde_solve_with(f0, w, exps, params, t_end, &DiagnosticsConfig::default())
}

pub fn pde_solve_with(
    f0: &Density,
    w: &Weight,
    exps: &Exponents,
    params: &PdeParams,
    t_end: f64,
    cfg: &DiagnosticsConfig,
) -> std::result::Result<Trajectory, Interrupted> {
    let mut traj = Trajectory::new(cfg.q_list.clone());
    let fail = |error: Error, traj: Trajectory| Interrupted { error, partial: Box::new(traj) };
    let checked = params.validate().and_then(|_| {
        if t_end >= 0.0 && t_end.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("t_end must be nonnegative, got {t_end}")))
        }
    });
    let rec = match checked.and_then(|_| Recorder::new(f0, w, exps, cfg)) {
        Ok(r) => r,
        Err(e) => return Err(fail(e, traj)),
    };
    traj.samples.push(rec.sample(0, 0.0, f0, None, None));
    let n_steps = (t_end / params.dt - 1e-9).ceil().max(0.0) as usize;
    let mut f = f0.clone();
    let mut last_sampled = f0.clone();
    for step in 1..=n_steps {
        let t = if step == n_steps { t_end } else { step as f64 * params.dt };
        let dt = t - (step - 1) as f64 * params.dt;
        f = match advance_robust(&f, w, exps, params, dt, 0) {
            Ok(next) => next,
            Err(e) => return Err(fail(e, traj)),
        };
        if rec.keep(step, step == n_steps) {
            let w2 = if cfg.record_w2 {
                match transport::w2(&f, &last_sampled, w.grid()) {
                    Ok(t) => Some(t.w2),
                    Err(e) => return Err(fail(e, traj)),
                }
            } else {
                None
            };
            traj.samples.push(rec.sample(step, t, &f, w2, None));
            last_sampled = f.clone();
        }
    }
    Ok(traj)
}
