//! Solvers and diagnostics for the weighted ultrafast diffusion equation
//! `∂ₜf = −r div(f ∇(ρ/f^{r+1}))` on a 1-D torus or interval.
//!
//! Two independent integrators are provided: the JKO minimizing-movement scheme
//! with exact 1-D optimal transport ([`jko`]), and a conservative finite-volume
//! scheme in the variable `u = f/m`, `m = ρ^{1/(r+1)}` ([`pde`]).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod grid;
pub mod jko;
mod linalg;
pub mod measures;
pub mod pde;
pub mod trajectory;
pub mod transport;

pub use error::{Error, Result};
pub use grid::{integrate, make_grid, Domain, Grid};
pub use jko::{jko_run, jko_run_with, jko_step, jko_step_from, JkoParams, JkoStepReport};
pub use measures::{
    functional_f, functional_gq, steady_state, to_f, to_u, weight_from_rho, weighted_bv_norm, weighted_lq_moment,
    weighted_lq_norm, Density, Exponents, Weight,
};
pub use pde::{pde_solve, pde_solve_with, pde_step, PdeParams, Scheme};
pub use trajectory::{DiagnosticsConfig, Interrupted, Sample, StepDiagnostics, Trajectory};
pub use transport::{quantiles, w2, w2_bruteforce, w2_interval, w2_torus, Atom, QuantileMap, TransportResult};
