//! Densities, the weight pair `(ρ, m)`, energy functionals and weighted norms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Nonlinearity exponents: `r > 0`, `σ = r + 1`, and the analysis dimension `d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exponents {
    r: f64,
    sigma: f64,
    d: u32,
}

impl Exponents {
    pub fn new(r: f64) -> Result<Self> {
        Self::with_dimension(r, 1)
    }

    pub fn with_dimension(r: f64, d: u32) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidParameter(format!("r must be positive, got {r}")));
        }
        if d == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        Ok(Exponents { r, sigma: r + 1.0, d })
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    /// `U(s) = s^{-r}`
    pub fn u(&self, s: f64) -> f64 {
        s.powf(-self.r)
    }

    /// `U'(s) = -r s^{-σ}`
    pub fn u_prime(&self, s: f64) -> f64 {
        -self.r * s.powf(-self.sigma)
    }

    /// `U''(s) = r σ s^{-σ-1}`
    pub fn u_second(&self, s: f64) -> f64 {
        self.r * self.sigma * s.powf(-self.sigma - 1.0)
    }
}

/// Reference density `ρ` sampled on a grid together with `m = ρ^{1/(r+1)}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weight {
    grid: Grid,
    rho: Vec<f64>,
    m: Vec<f64>,
    lambda: f64,
    semiconcavity: f64,
}

impl Weight {
    /// Builds a weight from cell samples of `ρ`, renormalised to unit mass.
    ///
    /// `semiconcavity` is the caller's bound `Λ` on the second derivative of `log m`.
    pub fn from_samples(grid: &Grid, rho: Vec<f64>, exps: &Exponents, semiconcavity: f64) -> Result<Self> {
        grid.check_len(rho.len())?;
        if let Some((index, &value)) = rho.iter().enumerate().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::Positivity { index, value });
        }
        let total = grid.integrate(&rho)?;
        let rho: Vec<f64> = rho.iter().map(|v| v / total).collect();
        let m: Vec<f64> = rho.iter().map(|v| v.powf(1.0 / exps.sigma())).collect();
        let min_m = m.iter().copied().fold(f64::INFINITY, f64::min);
        let max_m = m.iter().copied().fold(0.0, f64::max);
        let lambda = min_m.min(1.0 / max_m) * (1.0 - 1e-9);
        Ok(Weight { grid: grid.clone(), rho, m, lambda, semiconcavity })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn m(&self) -> &[f64] {
        &self.m
    }

    /// `λ` with `λ < m < 1/λ` on every cell.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `Λ` with `(log m)'' <= Λ`.
    pub fn semiconcavity(&self) -> f64 {
        self.semiconcavity
    }

    pub fn min_m(&self) -> f64 {
        self.m.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_m(&self) -> f64 {
        self.m.iter().copied().fold(0.0, f64::max)
    }

    /// Face value of `m` between cell `i` and its right neighbour (wrapping on the torus).
    pub(crate) fn m_face(&self, i: usize) -> f64 {
        let n = self.m.len();
        0.5 * (self.m[i] + self.m[(i + 1) % n])
    }
}

/// Samples `rho_fn` at the cell centres and builds the normalised weight.
pub fn weight_from_rho(
    rho_fn: impl Fn(f64) -> f64,
    grid: &Grid,
    exps: &Exponents,
    semiconcavity: f64,
) -> Result<Weight> {
    Weight::from_samples(grid, grid.sample(rho_fn), exps, semiconcavity)
}

/// Nonnegative cell values of a density together with its total mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Density {
    f: Vec<f64>,
    mass: f64,
}

impl Density {
    pub fn new(f: Vec<f64>, grid: &Grid) -> Result<Self> {
        grid.check_len(f.len())?;
        if let Some((index, &value)) = f.iter().enumerate().find(|(_, v)| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::Positivity { index, value });
        }
        let mass = grid.integrate(&f)?;
        if mass <= 0.0 {
            return Err(Error::NonPositiveValue(mass));
        }
        Ok(Density { f, mass })
    }

    /// Samples `f_fn` and rescales to the requested mass.
    pub fn from_fn_with_mass(f_fn: impl Fn(f64) -> f64, grid: &Grid, mass: f64) -> Result<Self> {
        Density::new(grid.sample(f_fn), grid)?.with_mass(mass, grid)
    }

    pub fn with_mass(self, mass: f64, grid: &Grid) -> Result<Self> {
        if !(mass > 0.0) {
            return Err(Error::NonPositiveValue(mass));
        }
        let scale = mass / self.mass;
        Density::new(self.f.into_iter().map(|v| v * scale).collect(), grid)
    }

    pub fn values(&self) -> &[f64] {
        &self.f
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn len(&self) -> usize {
        self.f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.f.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.f.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_positive(&self) -> bool {
        self.f.iter().all(|&v| v > 0.0)
    }
}

/// `F_ρ[f] = ∫ ρ f^{-r}`; `+∞` if any cell is empty.
pub fn functional_f(w: &Weight, f: &Density, exps: &Exponents) -> f64 {
    if !f.is_positive() {
        return f64::INFINITY;
    }
    let h = w.grid.h();
    h * w.rho.iter().zip(&f.f).map(|(rho, v)| rho * v.powf(-exps.r())).sum::<f64>()
}

/// `G_(q)[f] = ∫ (f/m)^q m` for `q < 0` or `q > 1`.
pub fn functional_gq(q: f64, w: &Weight, f: &Density) -> Result<f64> {
    if (0.0..=1.0).contains(&q) || !q.is_finite() {
        return Err(Error::UnsupportedExponent(q));
    }
    if q < 0.0 && !f.is_positive() {
        return Ok(f64::INFINITY);
    }
    let h = w.grid.h();
    Ok(h * w.m.iter().zip(&f.f).map(|(m, v)| (v / m).powf(q) * m).sum::<f64>())
}

/// `‖u‖_{BV(Ω;m)}`: face-weighted total variation; includes the wrap face on the torus.
pub fn weighted_bv_norm(u: &[f64], w: &Weight) -> f64 {
    let n = u.len();
    let faces = if w.grid.is_periodic() { n } else { n - 1 };
    (0..faces).map(|i| w.m_face(i) * (u[(i + 1) % n] - u[i]).abs()).sum()
}

/// Plain total variation (no weight).
pub fn total_variation(u: &[f64], periodic: bool) -> f64 {
    let n = u.len();
    let faces = if periodic { n } else { n - 1 };
    (0..faces).map(|i| (u[(i + 1) % n] - u[i]).abs()).sum()
}

/// `∫ m u^q`
pub fn weighted_lq_moment(u: &[f64], w: &Weight, q: f64) -> Result<f64> {
    if q == 0.0 || !q.is_finite() {
        return Err(Error::UnsupportedExponent(q));
    }
    w.grid.check_len(u.len())?;
    if q < 0.0 {
        if let Some((index, &value)) = u.iter().enumerate().find(|(_, v)| **v <= 0.0) {
            return Err(Error::Positivity { index, value });
        }
    }
    Ok(w.grid.h() * u.iter().zip(&w.m).map(|(v, m)| m * v.powf(q)).sum::<f64>())
}

/// `(∫ m u^q)^{1/q}`
pub fn weighted_lq_norm(u: &[f64], w: &Weight, q: f64) -> Result<f64> {
    Ok(weighted_lq_moment(u, w, q)?.powf(1.0 / q))
}

/// `M γ m` with `γ = (∫ m)^{-1}`.
pub fn steady_state(w: &Weight, mass: f64) -> Result<Density> {
    if !(mass > 0.0) {
        return Err(Error::NonPositiveValue(mass));
    }
    let gamma = 1.0 / w.grid.integrate(&w.m)?;
    Density::new(w.m.iter().map(|m| mass * gamma * m).collect(), &w.grid)
}

pub fn to_u(f: &Density, w: &Weight) -> Vec<f64> {
    f.f.iter().zip(&w.m).map(|(v, m)| v / m).collect()
}

pub fn to_f(u: &[f64], w: &Weight) -> Result<Density> {
    Density::new(u.iter().zip(&w.m).map(|(v, m)| v * m).collect(), &w.grid)
}

/// `‖f - g‖_{L²}` on the grid.
pub fn l2_distance(f: &[f64], g: &[f64], grid: &Grid) -> f64 {
    (grid.h() * f.iter().zip(g).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()).sqrt()
}

/// `‖f - g‖_{L¹}` on the grid.
pub fn l1_distance(f: &[f64], g: &[f64], grid: &Grid) -> f64 {
    grid.h() * f.iter().zip(g).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, Domain};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn torus(n: usize) -> Grid {
        make_grid(Domain::torus(1.0).unwrap(), n).unwrap()
    }

    fn interval(n: usize) -> Grid {
        make_grid(Domain::interval(0.0, 1.0).unwrap(), n).unwrap()
    }

    #[test]
    fn uniform_weight() {
        let g = torus(16);
        let e = Exponents::new(1.0).unwrap();
        let w = weight_from_rho(|_| 3.0, &g, &e, 0.0).unwrap();
        assert!(w.m().iter().all(|m| (m - 1.0).abs() < 1e-15));
        assert!((w.lambda() - 1.0).abs() < 1e-8 && w.lambda() < 1.0);
    }

    #[test]
    fn cosine_weight_has_unit_mass_and_root_relation() {
        let g = torus(64);
        let e = Exponents::new(1.0).unwrap();
        let w = weight_from_rho(|x| 1.0 + 0.5 * (2.0 * PI * x).cos(), &g, &e, 0.0).unwrap();
        assert!((g.integrate(w.rho()).unwrap() - 1.0).abs() < 1e-12);
        for (rho, m) in w.rho().iter().zip(w.m()) {
            assert!((m - rho.sqrt()).abs() < 1e-12);
        }
        assert!(w.lambda() < w.min_m() && w.max_m() < 1.0 / w.lambda());
    }

    #[test]
    fn exponential_tilt_log_m_is_affine() {
        // log m = (-x - log Z)/(r+1) has zero second difference, so Λ = 0 is admissible.
        let g = interval(32);
        let e = Exponents::new(2.0).unwrap();
        let w = weight_from_rho(|x| (-x).exp(), &g, &e, 0.0).unwrap();
        let lm: Vec<f64> = w.m().iter().map(|m| m.ln()).collect();
        for i in 1..31 {
            let d2 = (lm[i + 1] - 2.0 * lm[i] + lm[i - 1]) / (g.h() * g.h());
            assert!(d2.abs() < 1e-9, "second difference {d2}");
        }
    }

    #[test]
    fn rejects_nonpositive_rho() {
        let g = torus(4);
        let e = Exponents::new(1.0).unwrap();
        assert!(matches!(weight_from_rho(|x| x - 0.5, &g, &e, 0.0), Err(Error::Positivity { index: 0, .. })));
    }

    #[test]
    fn energy_of_constant_density() {
        let g = torus(8);
        let e = Exponents::new(2.0).unwrap();
        let w = weight_from_rho(|_| 1.0, &g, &e, 0.0).unwrap();
        let f = Density::new(vec![3.0; 8], &g).unwrap();
        assert!((functional_f(&w, &f, &e) - 1.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn energy_of_weight_root_is_integral_of_m() {
        let g = torus(32);
        let e = Exponents::new(1.5).unwrap();
        let w = weight_from_rho(|x| 1.0 + 0.4 * (2.0 * PI * x).sin(), &g, &e, 0.0).unwrap();
        let f = Density::new(w.m().to_vec(), &g).unwrap();
        let int_m = g.integrate(w.m()).unwrap();
        assert!((functional_f(&w, &f, &e) - int_m).abs() < 1e-13);
    }

    #[test]
    fn truncated_linear_rho_normalises() {
        let g = interval(50);
        let e = Exponents::new(1.0).unwrap();
        let w = weight_from_rho(|x| (2.0 * x).max(0.05), &g, &e, 0.0).unwrap();
        assert!((g.integrate(w.rho()).unwrap() - 1.0).abs() < 1e-12);
        let f = Density::new(vec![1.0; 50], &g).unwrap();
        assert!((functional_f(&w, &f, &e) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn energy_is_infinite_on_empty_cell() {
        let g = torus(4);
        let e = Exponents::new(1.0).unwrap();
        let w = weight_from_rho(|_| 1.0, &g, &e, 0.0).unwrap();
        let f = Density::new(vec![1.0, 0.0, 2.0, 1.0], &g).unwrap();
        assert_eq!(functional_f(&w, &f, &e), f64::INFINITY);
    }

    #[test]
    fn gq_rejects_unit_interval() {
        let g = torus(4);
        let e = Exponents::new(1.0).unwrap();
        let w = weight_from_rho(|_| 1.0, &g, &e, 0.0).unwrap();
        let f = Density::new(vec![1.0; 4], &g).unwrap();
        for q in [0.0, 0.5, 1.0] {
            assert_eq!(functional_gq(q, &w, &f), Err(Error::UnsupportedExponent(q)));
        }
    }

    #[test]
    fn gq_of_scaled_weight() {
        let g = torus(32);
        let e = Exponents::new(1.0).unwrap();
        let w = weight_from_rho(|x| 1.0 + 0.3 * (2.0 * PI * x).cos(), &g, &e, 0.0).unwrap();
        let c = 1.7;
        let f = Density::new(w.m().iter().map(|m| c * m).collect(), &g).unwrap();
        let int_m = g.integrate(w.m()).unwrap();
        for q in [-2.0, 3.0] {
            let got = functional_gq(q, &w, &f).unwrap();
            assert!((got - c.powf(q) * int_m).abs() < 1e-12);
        }
    }

    #[test]
    fn gq_square_of_sine_perturbation() {
        // ∫(1 + a sin)^2 = 1 + a^2/2; the midpoint rule is exact for trigonometric polynomials of low degree.
        let g = torus(64);
        let e = Exponents::new(1.0).unwrap();
        let w = weight_from_rho(|_| 1.0, &g, &e, 0.0).unwrap();
        let f = Density::new(g.sample(|x| 1.0 + 0.1 * (2.0 * PI * x).sin()), &g).unwrap();
        assert!((functional_gq(2.0, &w, &f).unwrap() - 1.005).abs() < 1e-14);
    }

    #[test]
    fn bv_examples() {
        let g = interval(10);
        let e = Exponents::new(1.0).unwrap();
        let w = weight_from_rho(|_| 1.0, &g, &e, 0.0).unwrap();
        assert_eq!(weighted_bv_norm(&[2.0; 10], &w), 0.0);
        let step: Vec<f64> = (0..10).map(|i| if i < 4 { 0.0 } else { 1.0 }).collect();
        assert!((weighted_bv_norm(&step, &w) - 1.0).abs() < 1e-15);

        let g = torus(256);
        let w = weight_from_rho(|_| 1.0, &g, &e, 0.0).unwrap();
        let u = g.sample(|x| (2.0 * PI * x).sin());
        assert!((weighted_bv_norm(&u, &w) - 4.0).abs() < 1e-3);
    }

    #[test]
    fn lq_examples() {
        let g = torus(8);
        let e = Exponents::new(1.0).unwrap();
        let w = weight_from_rho(|_| 1.0, &g, &e, 0.0).unwrap();
        let u = vec![2.0, 2.0, 2.0, 2.0, 1.0, 1.0, 1.0, 1.0];
        // ∫u^{-1} = 1/2·1/2 + 1/2·1 = 3/4
        assert!((weighted_lq_norm(&u, &w, -1.0).unwrap() - 4.0 / 3.0).abs() < 1e-14);
        assert!((weighted_lq_norm(&u, &w, 1.0).unwrap() - 1.5).abs() < 1e-14);
        assert!((weighted_lq_norm(&[3.0; 8], &w, 4.0).unwrap() - 3.0).abs() < 1e-14);
        assert_eq!(weighted_lq_norm(&u, &w, 0.0), Err(Error::UnsupportedExponent(0.0)));
    }

    #[test]
    fn steady_state_properties() {
        let g = torus(40);
        let e = Exponents::new(1.0).unwrap();
        let w = weight_from_rho(|x| (1.0 + 0.25 * (2.0 * PI * x).cos()).powi(2), &g, &e, 0.0).unwrap();
        let s = steady_state(&w, 2.0).unwrap();
        assert!((s.mass() - 2.0).abs() < 1e-12);
        let u = to_u(&s, &w);
        assert!(u.iter().all(|v| (v - u[0]).abs() < 1e-13));

        let flat = weight_from_rho(|_| 1.0, &g, &e, 0.0).unwrap();
        let s = steady_state(&flat, 1.0).unwrap();
        assert!(s.values().iter().all(|v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn weight_root_maps_to_unit_u() {
        let g = torus(16);
        let e = Exponents::new(1.0).unwrap();
        let w = weight_from_rho(|x| 2.0 + x, &g, &e, 0.0).unwrap();
        let f = Density::new(w.m().to_vec(), &g).unwrap();
        assert!(to_u(&f, &w).iter().all(|v| (v - 1.0).abs() < 1e-15));
    }

    fn arb_cells(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.05f64..3.0, n)
    }

    proptest! {
        #[test]
        fn gq_minus_r_is_energy(f in arb_cells(24), r in 0.1f64..3.0) {
            let g = torus(24);
            let e = Exponents::new(r).unwrap();
            let w = weight_from_rho(|x| 1.0 + 0.6 * (2.0 * PI * x).cos(), &g, &e, 0.0).unwrap();
            let f = Density::new(f, &g).unwrap();
            let a = functional_gq(-r, &w, &f).unwrap();
            let b = functional_f(&w, &f, &e);
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }

        #[test]
        fn steady_state_minimises_gq(f in arb_cells(24), q in 1.1f64..6.0) {
            let g = interval(24);
            let e = Exponents::new(1.0).unwrap();
            let w = weight_from_rho(|x| (-2.0 * x).exp(), &g, &e, 0.0).unwrap();
            let f = Density::new(f, &g).unwrap().with_mass(1.3, &g).unwrap();
            let s = steady_state(&w, 1.3).unwrap();
            prop_assert!(functional_gq(q, &w, &f).unwrap() >= functional_gq(q, &w, &s).unwrap() - 1e-12);
        }

        #[test]
        fn bv_is_a_seminorm(u in prop::collection::vec(-2.0f64..2.0, 20),
                            v in prop::collection::vec(-2.0f64..2.0, 20),
                            c in -3.0f64..3.0) {
            let g = torus(20);
            let e = Exponents::new(1.0).unwrap();
            let w = weight_from_rho(|x| 1.0 + 0.5 * (2.0 * PI * x).sin(), &g, &e, 0.0).unwrap();
            let cu: Vec<f64> = u.iter().map(|x| c * x).collect();
            prop_assert!((weighted_bv_norm(&cu, &w) - c.abs() * weighted_bv_norm(&u, &w)).abs() < 1e-12);
            let s: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + b).collect();
            prop_assert!(weighted_bv_norm(&s, &w) <= weighted_bv_norm(&u, &w) + weighted_bv_norm(&v, &w) + 1e-12);
            let tv = total_variation(&u, true);
            let bv = weighted_bv_norm(&u, &w);
            prop_assert!(w.lambda() * tv <= bv + 1e-12 && bv <= tv / w.lambda() + 1e-12);
        }

        #[test]
        fn integrate_is_linear(u in prop::collection::vec(-5.0f64..5.0, 12),
                               v in prop::collection::vec(-5.0f64..5.0, 12),
                               a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let g = interval(12);
            let lin: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
            let lhs = g.integrate(&lin).unwrap();
            let rhs = a * g.integrate(&u).unwrap() + b * g.integrate(&v).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-12);
            let pos: Vec<f64> = u.iter().map(|x| x.abs()).collect();
            prop_assert!(g.integrate(&pos).unwrap() >= 0.0);
        }

        #[test]
        fn u_round_trip(f in arb_cells(16)) {
            let g = torus(16);
            let e = Exponents::new(1.0).unwrap();
            let w = weight_from_rho(|x| 1.0 + 0.5 * (2.0 * PI * x).cos(), &g, &e, 0.0).unwrap();
            let d = Density::new(f, &g).unwrap();
            let back = to_f(&to_u(&d, &w), &w).unwrap();
            for (a, b) in back.values().iter().zip(d.values()) {
                prop_assert!((a - b).abs() <= 1e-14 * b.abs().max(1.0));
            }
        }
    }
}
