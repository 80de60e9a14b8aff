use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::Exponents;

/// A value known to lie in `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certified {
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Exponent ladder `q_{i+1} = θ(q_i − σ)` with the sums and products that
/// control the Harnack exponents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoserSchedule {
    pub q0: f64,
    pub theta: f64,
    pub sigma: f64,
    pub d: u32,
    pub q_seq: Vec<f64>,
    /// `q̄_i = q_i − σ`
    pub qbar_seq: Vec<f64>,
    /// `η_i = q̄_i / 2`
    pub eta_seq: Vec<f64>,
    /// `Σ_{i=1}^{k} 1/q̄_i` for `k = 1..=K`
    pub a_partial: Vec<f64>,
    /// `Π_{i=0}^{k} q_i/q̄_i` for `k = 0..=K`
    pub b_partial: Vec<f64>,
    pub a_inf: Certified,
    pub b_inf: Certified,
    pub alpha: f64,
    pub beta: f64,
    /// Truncation index.
    pub k: usize,
}

/// `q_i = θ^i q0 − θσ(θ^i − 1)/(θ − 1)`
pub fn moser_closed_form(q0: f64, theta: f64, sigma: f64, i: i32) -> f64 {
    let ti = theta.powi(i);
    ti * q0 - theta * sigma * (ti - 1.0) / (theta - 1.0)
}

/// Builds the schedule until both tail bounds are below `tail_tol`.
///
/// `θ = d/(d−2)` for `d ≥ 3` and `θ = p_star/2` otherwise. The ladder diverges
/// only if `q0` exceeds the fixed point `θσ/(θ−1)`, which for `d ≥ 3` equals `σd/2`.
pub fn moser_schedule(q0: f64, exps: &Exponents, d: u32, p_star: f64, tail_tol: f64) -> Result<MoserSchedule> {
    let sigma = exps.sigma();
    if d == 0 {
        return Err(Error::InvalidParameter("dimension must be positive".into()));
    }
    let theta = if d >= 3 {
        d as f64 / (d as f64 - 2.0)
    } else {
        if !(p_star > 2.0 && p_star.is_finite()) {
            return Err(Error::InvalidParameter(format!("p_star must exceed 2, got {p_star}")));
        }
        p_star / 2.0
    };
    if !(tail_tol > 0.0) {
        return Err(Error::InvalidParameter("tail tolerance must be positive".into()));
    }
    let fixed = theta * sigma / (theta - 1.0);
    let threshold = (sigma * (d as f64 / 2.0).max(1.0)).max(fixed);
    if !(q0 > threshold) || !q0.is_finite() {
        return Err(Error::SubcriticalExponent { q0, threshold });
    }
    let c = q0 - fixed;
    let a_tail = |k: usize| 1.0 / (c * theta.powi(k as i32) * (theta - 1.0));

    let mut q_seq = vec![q0];
    let mut a_partial = Vec::new();
    let mut b_partial = vec![q0 / (q0 - sigma)];
    let mut k = 0;
    loop {
        let at = a_tail(k);
        let b = *b_partial.last().unwrap();
        let bt = b * ((sigma * at).exp() - 1.0);
        if k >= 1 && at < tail_tol && bt < tail_tol {
            break;
        }
        if k >= 100_000 {
            return Err(Error::InvalidParameter("Moser schedule did not reach the tail tolerance".into()));
        }
        let q = theta * (q_seq[k] - sigma);
        q_seq.push(q);
        k += 1;
        let qbar = q - sigma;
        a_partial.push(a_partial.last().copied().unwrap_or(0.0) + 1.0 / qbar);
        b_partial.push(b * q / qbar);
    }
    let at = a_tail(k);
    let a_k = *a_partial.last().unwrap();
    let b_k = *b_partial.last().unwrap();
    let b_hi = b_k * (sigma * at).exp();
    let a_inf = Certified { value: a_k + 0.5 * at, lower: a_k, upper: a_k + at };
    let b_inf = Certified { value: 0.5 * (b_k + b_hi), lower: b_k, upper: b_hi };
    let qbar_seq: Vec<f64> = q_seq.iter().map(|q| q - sigma).collect();
    Ok(MoserSchedule {
        q0,
        theta,
        sigma,
        d,
        eta_seq: qbar_seq.iter().map(|q| 0.5 * q).collect(),
        qbar_seq,
        q_seq,
        a_partial,
        b_partial,
        alpha: a_inf.value * b_inf.value,
        beta: b_inf.value,
        a_inf,
        b_inf,
        k,
    })
}
