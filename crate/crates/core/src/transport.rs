//! Exact quadratic optimal transport between cellwise-constant densities in 1-D.
//!
//! A cellwise-constant density has a piecewise-linear CDF and therefore a
//! piecewise-linear quantile function `X(s)`, `s ∈ [0, M]`. The squared
//! distance `∫ |X_f - X_g|²` is a piecewise quadratic in `s` and is integrated
//! exactly on the merged breakpoints. On the torus the cost is minimised over a
//! shift `θ` of the mass coordinate of the target, `∫ |X_f(s) - X̃_g(s + θ)|²`,
//! where `X̃_g` is the periodic lift `X̃_g(s + M) = X̃_g(s) + L`; that objective
//! is convex in `θ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Domain, Grid};
use crate::measures::Density;

/// Relative tolerance on equality of masses.
const MASS_TOL: f64 = 1e-10;

/// Piecewise-linear quantile function of a cellwise-constant density.
#[derive(Debug, Clone)]
pub(crate) struct Quantile {
    x0: f64,
    h: f64,
    length: f64,
    /// Cumulative mass at the cell edges, `cum[0] = 0`, `cum[n] = M`.
    cum: Vec<f64>,
}

impl Quantile {
    pub(crate) fn from_density(f: &Density, grid: &Grid) -> Result<Self> {
        grid.check_len(f.len())?;
        if let Some(i) = f.values().iter().position(|&v| v <= 0.0) {
            return Err(Error::DegenerateCdf(i));
        }
        let mut cum = Vec::with_capacity(f.len() + 1);
        cum.push(0.0);
        let mut acc = 0.0;
        for &v in f.values() {
            acc += grid.h() * v;
            cum.push(acc);
        }
        Ok(Self::from_cumulative(cum, grid))
    }

    pub(crate) fn from_cumulative(cum: Vec<f64>, grid: &Grid) -> Self {
        Quantile { x0: grid.domain().start(), h: grid.h(), length: grid.length(), cum }
    }

    pub(crate) fn mass(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    pub(crate) fn cumulative(&self) -> &[f64] {
        &self.cum
    }

    fn n(&self) -> usize {
        self.cum.len() - 1
    }

    /// Index of the piece containing `s ∈ [0, M]`, taking the rightmost piece on ties.
    fn piece(&self, s: f64) -> usize {
        let k = self.cum.partition_point(|&c| c <= s);
        k.saturating_sub(1).min(self.n() - 1)
    }

    /// `X(s)` for `s ∈ [0, M]` (clamped), right-continuous.
    pub(crate) fn eval(&self, s: f64) -> f64 {
        self.eval_side(s, true)
    }

    /// One-sided limit of `X` at `s`. The two differ only across cells lighter
    /// than one ulp of the cumulative mass, where `X` jumps.
    pub(crate) fn eval_side(&self, s: f64, right: bool) -> f64 {
        let s = s.clamp(0.0, self.mass());
        let k = if right {
            self.piece(s)
        } else {
            self.cum.partition_point(|&c| c < s).saturating_sub(1).min(self.n() - 1)
        };
        let (a, b) = (self.cum[k], self.cum[k + 1]);
        let frac = if b > a {
            (s - a) / (b - a)
        } else if right {
            1.0
        } else {
            0.0
        };
        self.x0 + self.h * (k as f64 + frac)
    }

    /// Periodic lift `X̃(s + jM) = X(s) + jL`, one-sided as in [`Self::eval_side`].
    pub(crate) fn eval_lifted_side(&self, s: f64, right: bool) -> f64 {
        let m = self.mass();
        let mut j = (s / m).floor();
        let mut r = s - j * m;
        if !right && r <= 0.0 {
            j -= 1.0;
            r = m;
        }
        self.eval_side(r, right) + j * self.length
    }

    /// `X̃'(s)` on the piece to the right of `s`.
    pub(crate) fn slope_lifted(&self, s: f64) -> f64 {
        let m = self.mass();
        let r = s - (s / m).floor() * m;
        let k = self.piece(r);
        let w = self.cum[k + 1] - self.cum[k];
        if w > 0.0 {
            self.h / w
        } else {
            0.0
        }
    }

    /// `F(x)` for `x` in the fundamental domain.
    pub(crate) fn cdf(&self, x: f64) -> f64 {
        let t = ((x - self.x0) / self.h).clamp(0.0, self.n() as f64);
        let k = (t.floor() as usize).min(self.n() - 1);
        let (a, b) = (self.cum[k], self.cum[k + 1]);
        a + (b - a) * (t - k as f64)
    }

    /// Lifted breakpoints `cum[j] + l M` lying in the open window `(lo, hi)`.
    pub(crate) fn lifted_breaks_in(&self, lo: f64, hi: f64, out: &mut Vec<f64>) {
        let m = self.mass();
        let l0 = (lo / m).floor() as i64 - 1;
        let l1 = (hi / m).ceil() as i64 + 1;
        for l in l0..=l1 {
            let off = l as f64 * m;
            for &c in &self.cum {
                let v = c + off;
                if v > lo && v < hi {
                    out.push(v);
                }
            }
        }
    }
}

fn sort_dedup(v: &mut Vec<f64>) {
    v.sort_by(f64::total_cmp);
    v.dedup();
}

impl Quantile {
    /// `X` on piece `k` at `s`, with the fraction clamped to the piece.
    fn eval_in(&self, k: usize, s: f64) -> f64 {
        let (a, b) = (self.cum[k], self.cum[k + 1]);
        let frac = if b > a { ((s - a) / (b - a)).clamp(0.0, 1.0) } else { 0.0 };
        self.x0 + self.h * (k as f64 + frac)
    }
}

/// Walks `[0, M]` through the common refinement of the pieces of `X_f` and of
/// `s ↦ X̃_g(s + θ)`, calling `visit(s0, s1, [d(s0+), d(mid), d(s1-)], X̃_g')` with
/// `d = X_f - X̃_g(· + θ)`. Piece indices are tracked directly, so sub-ulp pieces
/// never get evaluated on the wrong side of a jump.
fn sweep(qf: &Quantile, qg: &Quantile, theta: f64, periodic: bool, mut visit: impl FnMut(f64, f64, [f64; 3], f64)) {
    let m = qf.mass();
    let (nf, ng) = (qf.n() as i64, qg.n() as i64);
    let end_g = |big: i64| {
        let (l, k) = (big.div_euclid(ng), big.rem_euclid(ng) as usize);
        qg.cum[k + 1] + l as f64 * m - theta
    };
    let mut big = if periodic { ((theta / m).floor() as i64 - 1) * ng } else { 0 };
    while end_g(big) <= 0.0 && (periodic || big < ng - 1) {
        big += 1;
    }
    let mut kf = 0usize;
    let mut s0 = 0.0;
    while (kf as i64) < nf && s0 < m {
        let (l, kg) = (big.div_euclid(ng), big.rem_euclid(ng) as usize);
        let shift = l as f64 * m - theta;
        let next_f = qf.cum[kf + 1];
        let next_g = end_g(big);
        let s1 = next_f.min(next_g).min(m);
        if s1 > s0 {
            let d = |s: f64| qf.eval_in(kf, s) - (qg.eval_in(kg, s - shift) + l as f64 * qg.length);
            let sm = 0.5 * (s0 + s1);
            let (ga, gb) = (qg.cum[kg], qg.cum[kg + 1]);
            let slope = if gb > ga { qg.h / (gb - ga) } else { 0.0 };
            visit(s0, s1, [d(s0), d(sm), d(s1)], slope);
            s0 = s1;
        }
        if next_f <= s1 {
            kf += 1;
        }
        if next_g <= s1 && (periodic || big < ng - 1) {
            big += 1;
        }
        if next_f > s1 && next_g > s1 {
            break;
        }
    }
}

/// `∫₀^M |X_f(s) - X̃_g(s + θ)|² ds`, exact for cellwise-constant densities.
pub(crate) fn shift_cost(qf: &Quantile, qg: &Quantile, theta: f64, periodic: bool) -> f64 {
    let mut total = 0.0;
    sweep(qf, qg, theta, periodic, |s0, s1, [d0, dm, d1], _| {
        total += (s1 - s0) / 6.0 * (d0 * d0 + 4.0 * dm * dm + d1 * d1);
    });
    total
}

/// First and (generalised) second derivative of the shift cost in `θ`.
fn shift_cost_derivatives(qf: &Quantile, qg: &Quantile, theta: f64) -> (f64, f64) {
    let (mut g1, mut g2) = (0.0, 0.0);
    sweep(qf, qg, theta, true, |s0, s1, [_, dm, _], slope| {
        g1 += -2.0 * (s1 - s0) * dm * slope;
        g2 += 2.0 * (s1 - s0) * slope * slope;
    });
    (g1, g2)
}

/// Minimises the torus shift cost: golden section on `[-M, M]` followed by a
/// safeguarded Newton polish.
pub(crate) fn optimal_shift(qf: &Quantile, qg: &Quantile) -> (f64, f64) {
    let m = qf.mass();
    let cost = |t: f64| shift_cost(qf, qg, t, true);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (-m, m);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (cost(c), cost(d));
    let tol = 1e-10 * m.max(1.0);
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = cost(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = cost(d);
        }
    }
    let mut theta = 0.5 * (a + b);
    let mut best = cost(theta);
    let (mut g, mut h) = shift_cost_derivatives(qf, qg, theta);
    // The polish can step across a kink of C (near-atomic data), so it must not raise the cost.
    for _ in 0..5 {
        if !(h > 0.0) || g == 0.0 {
            break;
        }
        let cand = theta - g / h;
        let (g2, h2) = shift_cost_derivatives(qf, qg, cand);
        let c2 = cost(cand);
        if g2.abs() >= g.abs() || c2 > best + 1e-12 * best.max(f64::MIN_POSITIVE) {
            break;
        }
        theta = cand;
        best = c2;
        g = g2;
        h = h2;
    }
    (theta, best)
}

/// Map at the cell centres, the potential at the centres and its exact cell means.
struct PotentialData {
    map: Vec<f64>,
    phi: Vec<f64>,
    phi_mean: Vec<f64>,
}

fn potential(qf: &Quantile, qg: &Quantile, grid: &Grid, theta: f64, periodic: bool) -> PotentialData {
    let n = grid.n();
    let m = qf.mass();
    let map_at = |x: f64, right: bool| {
        let s = qf.cdf(x) + theta;
        if periodic {
            qg.eval_lifted_side(s, right)
        } else {
            qg.eval_side(s, right)
        }
    };
    let dphi = |x: f64, right: bool| x - map_at(x, right);

    // Breakpoints of φ' in x: cell edges, centres, and preimages of target breakpoints.
    let mut xs: Vec<f64> = (0..=n).map(|i| grid.edge(i)).collect();
    xs.extend_from_slice(grid.centers());
    let mut gb = Vec::new();
    qg.lifted_breaks_in(theta, m + theta, &mut gb);
    xs.extend(gb.into_iter().map(|b| qf.eval(b - theta)));
    let (lo, hi) = (grid.edge(0), grid.edge(n));
    xs.retain(|&x| x >= lo && x <= hi);
    sort_dedup(&mut xs);

    // One-sided values: φ' jumps where the target quantile does.
    let dp_r: Vec<f64> = xs.iter().map(|&x| dphi(x, true)).collect();
    let dp_l: Vec<f64> = xs.iter().map(|&x| dphi(x, false)).collect();
    let mut phi = vec![0.0; xs.len()];
    for k in 1..xs.len() {
        phi[k] = phi[k - 1] + 0.5 * (xs[k] - xs[k - 1]) * (dp_l[k] + dp_r[k - 1]);
    }

    let mut phi_c = vec![0.0; n];
    let mut mean = vec![0.0; n];
    let mut cell = 0;
    for k in 0..xs.len() - 1 {
        let (x0, x1) = (xs[k], xs[k + 1]);
        let mid = 0.5 * (x0 + x1);
        while cell + 1 < n && mid > grid.edge(cell + 1) {
            cell += 1;
        }
        let w = x1 - x0;
        let dmid = 0.5 * (dp_r[k] + dp_l[k + 1]);
        let phi_mid = phi[k] + 0.25 * w * (dp_r[k] + dmid);
        mean[cell] += w / 6.0 * (phi[k] + 4.0 * phi_mid + phi[k + 1]);
    }
    for (i, &c) in grid.centers().iter().enumerate() {
        let k = xs.partition_point(|&x| x < c);
        phi_c[i] = phi[k];
    }
    let base = phi_c[0];
    let h = grid.h();
    PotentialData {
        map: grid.centers().iter().map(|&x| map_at(x, true)).collect(),
        phi: phi_c.iter().map(|p| p - base).collect(),
        phi_mean: mean.iter().map(|v| v / h - base).collect(),
    }
}

/// Monotone quantile positions at `N + 1` equispaced mass levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileMap {
    pub s_nodes: Vec<f64>,
    /// Positions; on the torus these are measured from the cut at 0, so `X(M) = X(0) + L`.
    pub x: Vec<f64>,
}

pub fn quantiles(f: &Density, grid: &Grid, n_nodes: usize) -> Result<QuantileMap> {
    if n_nodes < 2 {
        return Err(Error::InvalidResolution(n_nodes));
    }
    let q = Quantile::from_density(f, grid)?;
    let m = q.mass();
    let s_nodes: Vec<f64> = (0..=n_nodes).map(|j| m * j as f64 / n_nodes as f64).collect();
    let mut x: Vec<f64> = s_nodes.iter().map(|&s| q.eval(s)).collect();
    // Pin the endpoints exactly.
    x[0] = grid.edge(0);
    x[n_nodes] = grid.edge(grid.n());
    Ok(QuantileMap { s_nodes, x })
}

/// Optimal transport between two densities of equal mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportResult {
    pub w2: f64,
    /// Optimal map `T` from the first density to the second at the cell centres (lifted on the torus).
    pub map_t: Vec<f64>,
    /// Kantorovich potential at the cell centres, `φ' = x - T(x)`, `φ(x₀) = 0`.
    pub potential_phi: Vec<f64>,
    /// Exact cell averages of the same potential.
    pub potential_cell_mean: Vec<f64>,
    /// Optimal shift of the target's mass coordinate (torus only).
    pub shift: Option<f64>,
}

fn check_masses(f: &Density, g: &Density) -> Result<()> {
    if (f.mass() - g.mass()).abs() > MASS_TOL * f.mass().max(g.mass()) {
        return Err(Error::MassMismatch(f.mass(), g.mass()));
    }
    Ok(())
}

/// Rescales the cumulative masses of `g` so both quantile maps share the exact same total.
fn matched_quantiles(f: &Density, g: &Density, grid: &Grid) -> Result<(Quantile, Quantile)> {
    check_masses(f, g)?;
    let qf = Quantile::from_density(f, grid)?;
    let qg = Quantile::from_density(g, grid)?;
    let scale = qf.mass() / qg.mass();
    let cum = qg.cum.iter().map(|c| c * scale).collect();
    Ok((qf, Quantile::from_cumulative(cum, grid)))
}

pub fn w2_interval(f: &Density, g: &Density, grid: &Grid) -> Result<TransportResult> {
    let (qf, qg) = matched_quantiles(f, g, grid)?;
    let cost = shift_cost(&qf, &qg, 0.0, false);
    let p = potential(&qf, &qg, grid, 0.0, false);
    Ok(TransportResult {
        w2: cost.max(0.0).sqrt(),
        map_t: p.map,
        potential_phi: p.phi,
        potential_cell_mean: p.phi_mean,
        shift: None,
    })
}

pub fn w2_torus(f: &Density, g: &Density, grid: &Grid) -> Result<TransportResult> {
    if !grid.is_periodic() {
        return Err(Error::InvalidDomain("w2_torus needs a periodic grid".into()));
    }
    let (qf, qg) = matched_quantiles(f, g, grid)?;
    let (theta, cost) = optimal_shift(&qf, &qg);
    let p = potential(&qf, &qg, grid, theta, true);
    Ok(TransportResult {
        w2: cost.max(0.0).sqrt(),
        map_t: p.map,
        potential_phi: p.phi,
        potential_cell_mean: p.phi_mean,
        shift: Some(theta),
    })
}

/// Dispatches on the grid's domain.
pub fn w2(f: &Density, g: &Density, grid: &Grid) -> Result<TransportResult> {
    if grid.is_periodic() {
        w2_torus(f, g, grid)
    } else {
        w2_interval(f, g, grid)
    }
}

/// Torus shift objective at a given `θ` (exposed for diagnostics).
pub fn torus_shift_cost(f: &Density, g: &Density, grid: &Grid, theta: f64) -> Result<f64> {
    let (qf, qg) = matched_quantiles(f, g, grid)?;
    Ok(shift_cost(&qf, &qg, theta, true))
}

/// Weighted point mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub x: f64,
    pub w: f64,
}

/// Exhaustive minimum over all matchings of two equal-weight atom sets.
pub fn w2_bruteforce(atoms_f: &[Atom], atoms_g: &[Atom], domain: &Domain) -> Result<f64> {
    let n = atoms_f.len();
    if n > 8 || atoms_g.len() > 8 {
        return Err(Error::TooManyAtoms(n.max(atoms_g.len())));
    }
    if n != atoms_g.len() || n == 0 {
        return Err(Error::UnequalAtoms);
    }
    let w = atoms_f[0].w;
    if atoms_f.iter().chain(atoms_g).any(|a| (a.w - w).abs() > 1e-12 * w.abs()) {
        return Err(Error::UnequalAtoms);
    }
    let cost: Vec<Vec<f64>> =
        atoms_f.iter().map(|a| atoms_g.iter().map(|b| w * domain.distance(a.x, b.x).powi(2)).collect()).collect();

    // Heap's algorithm over target labels.
    let mut perm: Vec<usize> = (0..n).collect();
    let eval = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| cost[i][j]).sum::<f64>();
    let mut best = eval(&perm);
    let mut c = vec![0usize; n];
    let mut i = 1;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(eval(&perm));
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(best.sqrt())
}
