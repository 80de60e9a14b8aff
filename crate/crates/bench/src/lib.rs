//! Shared fixtures for the benchmarks.

use std::f64::consts::PI;

use ufd_core::{make_grid, weight_from_rho, Density, Domain, Exponents, Weight};

/// Cosine weight on the unit torus with a smooth two-mode initial density.
pub fn torus_case(n: usize, r: f64) -> (Weight, Exponents, Density) {
    let grid = make_grid(Domain::torus(1.0).unwrap(), n).unwrap();
    let exps = Exponents::new(r).unwrap();
    let w = weight_from_rho(|x| 1.0 + 0.3 * (2.0 * PI * x).cos(), &grid, &exps, 0.0).unwrap();
    let f = Density::from_fn_with_mass(|x| 1.0 + 0.4 * (2.0 * PI * x).sin() + 0.2 * (6.0 * PI * x).cos(), &grid, 1.0)
        .unwrap();
    (w, exps, f)
}

/// A second density on the same grid, shifted in phase.
pub fn shifted(f: &Density, w: &Weight, cells: usize) -> Density {
    let v = f.values();
    let n = v.len();
    Density::new((0..n).map(|i| v[(i + cells) % n]).collect(), w.grid()).unwrap()
}
