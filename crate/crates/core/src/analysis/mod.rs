//! Post-processing of trajectories: Moser exponents, Harnack and contraction
//! monitors, exponential fits and the JKO/PDE cross-validation study.

mod crossval;
mod fit;
mod moser;
mod reports;

pub use crossval::{cross_validation, CrossValidation, CrossValidationSpec};
pub use fit::{fit_exponential_decay, ExpFit};
pub use moser::{moser_closed_form, moser_schedule, Certified, MoserSchedule};
pub use reports::{
    bv_convergence_report, contraction_report, harnack_report, BvReport, ContractionReport, HarnackReport,
};

/// Largest increase `v[i+1] − v[i]` over consecutive entries (negative if strictly decreasing).
pub fn worst_increase(v: &[f64]) -> f64 {
    v.windows(2).map(|p| p[1] - p[0]).fold(f64::NEG_INFINITY, f64::max)
}
