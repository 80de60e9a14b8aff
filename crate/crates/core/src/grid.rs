//! One-dimensional domains and uniform cell-centred grids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spatial domain: a periodic circle or a bounded interval with no-flux ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    Torus { length: f64 },
    Interval { a: f64, b: f64 },
}

impl Domain {
    pub fn torus(length: f64) -> Result<Self> {
        let d = Domain::Torus { length };
        d.validate()?;
        Ok(d)
    }

    pub fn interval(a: f64, b: f64) -> Result<Self> {
        let d = Domain::Interval { a, b };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Domain::Torus { length } if !(length > 0.0 && length.is_finite()) => {
                Err(Error::InvalidDomain(format!("torus length must be positive, got {length}")))
            }
            Domain::Interval { a, b } if !(b > a && a.is_finite() && b.is_finite()) => {
                Err(Error::InvalidDomain(format!("interval needs a < b, got [{a}, {b}]")))
            }
            _ => Ok(()),
        }
    }

    /// |Ω|
    pub fn length(&self) -> f64 {
        match *self {
            Domain::Torus { length } => length,
            Domain::Interval { a, b } => b - a,
        }
    }

    /// Left end of the fundamental cell (0 for the torus).
    pub fn start(&self) -> f64 {
        match *self {
            Domain::Torus { .. } => 0.0,
            Domain::Interval { a, .. } => a,
        }
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self, Domain::Torus { .. })
    }

    /// Geodesic distance: circle metric on the torus, absolute difference otherwise.
    pub fn distance(&self, x: f64, y: f64) -> f64 {
        match *self {
            Domain::Torus { length } => {
                let d = (x - y).rem_euclid(length);
                d.min(length - d)
            }
            Domain::Interval { .. } => (x - y).abs(),
        }
    }
}

/// Uniform partition of a [`Domain`] into `n` cells with midpoint quadrature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    domain: Domain,
    n: usize,
    h: f64,
    centers: Vec<f64>,
}

impl Grid {
    pub fn new(domain: Domain, n: usize) -> Result<Self> {
        make_grid(domain, n)
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    /// Position of cell edge `i`, `0 <= i <= n`.
    pub fn edge(&self, i: usize) -> f64 {
        self.domain.start() + i as f64 * self.h
    }

    pub fn length(&self) -> f64 {
        self.domain.length()
    }

    pub fn is_periodic(&self) -> bool {
        self.domain.is_periodic()
    }

    pub fn integrate(&self, values: &[f64]) -> Result<f64> {
        integrate(values, self)
    }

    /// Samples a pointwise function at the cell centres.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.centers.iter().map(|&x| f(x)).collect()
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n {
            return Err(Error::Shape { expected: self.n, got: len });
        }
        Ok(())
    }
}

pub fn make_grid(domain: Domain, n: usize) -> Result<Grid> {
    domain.validate()?;
    if n < 2 {
        return Err(Error::InvalidResolution(n));
    }
    let h = domain.length() / n as f64;
    let x0 = domain.start();
    let centers = (0..n).map(|i| x0 + (i as f64 + 0.5) * h).collect();
    Ok(Grid { domain, n, h, centers })
}

/// Midpoint rule: `h * Σ values`.
pub fn integrate(values: &[f64], grid: &Grid) -> Result<f64> {
    grid.check_len(values.len())?;
    Ok(grid.h * values.iter().sum::<f64>())
}
