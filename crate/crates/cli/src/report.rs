//! The `diagnostics.json` document shared by all subcommands, and the invariant checks.

use serde::Serialize;
use ufd_core::analysis::{bv_convergence_report, fit_exponential_decay, harnack_report, worst_increase, ExpFit};
use ufd_core::{Trajectory, Weight};

use crate::config::{Check, SCHEMA_VERSION};

/// Relative slack for monotonicity and conservation verdicts.
pub const SLACK: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// Not applicable to this run (e.g. the BV check when `Λ > 0`).
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub verdict: Verdict,
    /// The quantity compared against its threshold.
    pub value: f64,
    pub detail: String,
}

impl CheckResult {
    pub fn new(name: &str, pass: bool, value: f64, detail: String) -> Self {
        let verdict = if pass { Verdict::Pass } else { Verdict::Fail };
        CheckResult { name: name.into(), verdict, value, detail }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    ChecksFailed,
    SolverFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    /// Terminal `‖f − Mγm‖_{L²}`.
    pub l2_error: Option<f64>,
    /// Exponential fit of the `L²` distance to the steady state.
    pub fit: Option<ExpFit>,
    pub samples: usize,
    pub all_checks_pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    pub schema_version: u32,
    pub command: &'static str,
    pub status: Status,
    pub error: Option<String>,
    pub summary: Summary,
    pub checks: Vec<CheckResult>,
    /// Command-specific payload.
    pub report: serde_json::Value,
}

impl Diagnostics {
    pub fn new(command: &'static str, checks: Vec<CheckResult>, summary: Summary, report: serde_json::Value) -> Self {
        let status = if summary.all_checks_pass { Status::Ok } else { Status::ChecksFailed };
        Diagnostics { schema_version: SCHEMA_VERSION, command, status, error: None, summary, checks, report }
    }

    pub fn failed(mut self, error: String) -> Self {
        self.status = Status::SolverFailure;
        self.error = Some(error);
        self
    }

    /// One line for standard output.
    pub fn summary_line(&self) -> String {
        let mut parts = vec![format!("ufd {}:", self.command)];
        if let Some(e) = self.summary.l2_error {
            parts.push(format!("L2_error={e:.3e}"));
        }
        match &self.summary.fit {
            Some(f) if !f.degenerate => parts.push(format!("rate={:.4} (R2 {:.4})", f.rate, f.r_squared)),
            _ if self.summary.l2_error.is_some() => parts.push("rate=n/a".into()),
            _ => {}
        }
        for c in &self.checks {
            let v = match c.verdict {
                Verdict::Pass => "pass",
                Verdict::Fail => "FAIL",
                Verdict::Skipped => "skipped",
            };
            parts.push(format!("{}={v}", c.name));
        }
        let failed = self.checks.iter().filter(|c| c.verdict == Verdict::Fail).count();
        parts.push(match (self.status, failed) {
            (Status::SolverFailure, _) => format!("-> solver failure: {}", self.error.as_deref().unwrap_or("")),
            (_, 0) => "-> all checks pass".into(),
            (_, k) => format!("-> {k} check(s) failed"),
        });
        parts.join(" ")
    }
}

pub fn all_pass(checks: &[CheckResult]) -> bool {
    checks.iter().all(|c| c.verdict != Verdict::Fail)
}

/// Exponential fit of `‖f − Mγm‖_{L²}` over samples with `t > 0` that are above roundoff.
pub fn l2_fit(traj: &Trajectory) -> Option<ExpFit> {
    let (t, v): (Vec<f64>, Vec<f64>) =
        traj.diagnostics().filter(|d| d.t > 0.0 && d.l2_steady > 1e-12).map(|d| (d.t, d.l2_steady)).unzip();
    fit_exponential_decay(&t, &v).ok()
}

fn relative_increase(v: &[f64]) -> f64 {
    let scale = v.first().map_or(1.0, |x| x.abs().max(1.0));
    if v.len() < 2 {
        return 0.0;
    }
    worst_increase(v) / scale
}

/// Evaluates the requested checks on a completed (or partial) trajectory.
pub fn trajectory_checks(
    traj: &Trajectory,
    w: &Weight,
    checks: &[Check],
    l2_tolerance: Option<f64>,
) -> Vec<CheckResult> {
    let diags: Vec<_> = traj.diagnostics().collect();
    let Some(first) = diags.first() else { return Vec::new() };
    let mut out = Vec::new();
    for &check in checks {
        let name = check.name();
        out.push(match check {
            Check::Mass => {
                let drift = diags.iter().map(|d| (d.mass - first.mass).abs()).fold(0.0, f64::max) / first.mass;
                CheckResult::new(name, drift <= 1e-10, drift, format!("max relative mass drift {drift:.3e}"))
            }
            Check::Energy => {
                let v: Vec<f64> = diags.iter().map(|d| d.f_rho).collect();
                let inc = relative_increase(&v);
                CheckResult::new(name, inc <= SLACK, inc, format!("max relative increase of F_rho {inc:.3e}"))
            }
            Check::MaxPrinciple => {
                let lo = diags.iter().map(|d| (first.min_u - d.min_u) / first.min_u).fold(0.0, f64::max);
                let hi = diags.iter().map(|d| (d.max_u - first.max_u) / first.max_u).fold(0.0, f64::max);
                let v = lo.max(hi);
                CheckResult::new(
                    name,
                    v <= SLACK,
                    v,
                    format!("u stays in [{:.6e}, {:.6e}] up to {v:.3e}", first.min_u, first.max_u),
                )
            }
            Check::LqMonotone => {
                let worst = (0..traj.q_list.len())
                    .map(|j| relative_increase(&diags.iter().map(|d| d.gq[j]).collect::<Vec<_>>()))
                    .fold(f64::NEG_INFINITY, f64::max);
                let worst = if worst.is_finite() { worst } else { 0.0 };
                CheckResult::new(
                    name,
                    worst <= SLACK,
                    worst,
                    format!("q in {:?}, max relative increase {worst:.3e}", traj.q_list),
                )
            }
            Check::Harnack => {
                let h = harnack_report(traj, w);
                let v = if h.worst_increase.is_finite() { h.worst_increase } else { 0.0 };
                CheckResult::new(
                    name,
                    h.nonincreasing || traj.len() < 2,
                    v,
                    format!("C_t from {:.4} to {:.4}", h.c_t[0], h.c_t[h.c_t.len() - 1]),
                )
            }
            Check::Bv => {
                let b = bv_convergence_report(traj, w, 0.0);
                let v = if b.worst_increase.is_finite() { b.worst_increase } else { 0.0 };
                match b.nonincreasing {
                    Some(ok) => CheckResult::new(name, ok || traj.len() < 2, v, format!("max BV increase {v:.3e}")),
                    None => CheckResult {
                        name: name.into(),
                        verdict: Verdict::Skipped,
                        value: v,
                        detail: format!("Lambda = {} > 0: BV may grow", w.semiconcavity()),
                    },
                }
            }
        });
    }
    if let Some(tol) = l2_tolerance {
        let e = diags.last().map_or(f64::NAN, |d| d.l2_steady);
        out.push(CheckResult::new("l2_tolerance", e <= tol, e, format!("terminal L2 error {e:.3e} vs {tol:e}")));
    }
    out
}
