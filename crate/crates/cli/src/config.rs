//! Experiment configuration: a versioned JSON document.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use ufd_core::{make_grid, steady_state, Density, Domain, Exponents, Grid, JkoParams, PdeParams, Scheme, Weight};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub domain: DomainSpec,
    pub n: usize,
    pub r: f64,
    pub rho: RhoSpec,
    /// Bound on `(log m)''`; estimated from the samples of `m` when absent.
    #[serde(rename = "Lambda", default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub f0: InitialSpec,
    #[serde(default = "unit")]
    pub mass: f64,
    pub solver: SolverSpec,
    pub horizon: f64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub diagnostics: DiagnosticsSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSpec {
    Torus { length: f64 },
    Interval { a: f64, b: f64 },
}

/// `ρ` presets, as functions of the offset `y = x − start` and domain length `L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum RhoSpec {
    Uniform,
    /// `1 + a cos(2πy/L)`
    Cosine {
        amplitude: f64,
    },
    /// `exp(s y)`
    ExpTilt {
        slope: f64,
    },
    /// Column `rho` of a CSV with one row per cell.
    Csv {
        path: PathBuf,
    },
}

/// Initial data. Presets are perturbations of the weight, `f0 ∝ m (1 + p)`,
/// rescaled to the configured mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    /// `M γ m`
    Steady,
    /// `p = a sin(2πy/L)`
    SinePerturbed { amplitude: f64 },
    /// Gaussian bump `p = height · exp(−((x − centre)/width)²)` at the domain centre.
    Spike { height: f64, width: f64 },
    /// Random Fourier modes `1..=modes` with decaying amplitudes, scaled so `max |p| = amplitude`.
    Random {
        seed: u64,
        amplitude: f64,
        #[serde(default = "default_modes")]
        modes: usize,
    },
    /// Column `f` of a CSV with one row per cell.
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SolverSpec {
    Jko {
        tau: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        newton_tol: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        newton_max_iter: Option<usize>,
    },
    Pde {
        dt: f64,
        #[serde(default = "default_scheme")]
        scheme: Scheme,
    },
    /// JKO at each `τ` against an implicit PDE reference with step `reference_dt`.
    CrossValidation { taus: Vec<f64>, reference_dt: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Mass,
    Energy,
    MaxPrinciple,
    LqMonotone,
    Harnack,
    Bv,
}

impl Check {
    pub const ALL: [Check; 6] =
        [Check::Mass, Check::Energy, Check::MaxPrinciple, Check::LqMonotone, Check::Harnack, Check::Bv];

    pub fn name(self) -> &'static str {
        match self {
            Check::Mass => "mass",
            Check::Energy => "energy",
            Check::MaxPrinciple => "max_principle",
            Check::LqMonotone => "lq_monotone",
            Check::Harnack => "harnack",
            Check::Bv => "bv",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSpec {
    #[serde(default = "default_q_list")]
    pub q_list: Vec<f64>,
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default = "default_checks")]
    pub checks: Vec<Check>,
    /// Fail unless the terminal `‖f − Mγm‖_{L²}` is at most this.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l2_tolerance: Option<f64>,
    /// PDE runs: record `W₂` between consecutive samples.
    #[serde(default)]
    pub record_w2: bool,
}

impl Default for DiagnosticsSpec {
    fn default() -> Self {
        DiagnosticsSpec {
            q_list: default_q_list(),
            stride: default_stride(),
            checks: default_checks(),
            l2_tolerance: None,
            record_w2: false,
        }
    }
}

fn unit() -> f64 {
    1.0
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_modes() -> usize {
    4
}
fn default_scheme() -> Scheme {
    Scheme::ImplicitNewton
}
fn default_q_list() -> Vec<f64> {
    vec![2.0]
}
fn default_stride() -> usize {
    1
}
/// Everything except `harnack`: the per-sample `max(max f, 1/min f)` may rise while
/// the data relax toward a non-constant steady state, so it is opt-in.
fn default_checks() -> Vec<Check> {
    Check::ALL.into_iter().filter(|c| *c != Check::Harnack).collect()
}

/// Grid, weight and initial data built from a config.
#[derive(Debug, Clone)]
pub struct Setup {
    pub grid: Grid,
    pub exps: Exponents,
    pub weight: Weight,
    pub f0: Density,
}

impl ExperimentConfig {
    /// Reads a config; relative CSV paths are resolved against the config's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let RhoSpec::Csv { path } = &mut cfg.rho {
            resolve(path);
        }
        if let InitialSpec::Csv { path } = &mut cfg.f0 {
            resolve(path);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("unsupported schema_version {} (expected {SCHEMA_VERSION})", self.schema_version));
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon must be nonnegative, got {}", self.horizon));
        }
        if self.diagnostics.stride == 0 {
            return bad("stride must be at least 1".into());
        }
        match &self.rho {
            RhoSpec::Cosine { amplitude } if !(amplitude.abs() < 1.0) => {
                return bad(format!("cosine amplitude must lie in (-1, 1), got {amplitude}"))
            }
            RhoSpec::ExpTilt { slope } if !slope.is_finite() => return bad("exp_tilt slope must be finite".into()),
            _ => {}
        }
        match &self.f0 {
            InitialSpec::SinePerturbed { amplitude } | InitialSpec::Random { amplitude, .. }
                if !(*amplitude >= 0.0 && *amplitude < 1.0) =>
            {
                return bad(format!("perturbation amplitude must lie in [0, 1), got {amplitude}"))
            }
            InitialSpec::Random { modes: 0, .. } => return bad("random preset needs at least one mode".into()),
            InitialSpec::Spike { height, width } if !(*height >= 0.0 && *width > 0.0) => {
                return bad(format!("spike needs height >= 0 and width > 0, got {height}, {width}"))
            }
            _ => {}
        }
        match &self.solver {
            SolverSpec::Jko { tau, .. } => self.steps_for(*tau).map(|_| ()),
            SolverSpec::Pde { .. } => Ok(()),
            SolverSpec::CrossValidation { taus, .. } => {
                if taus.len() < 2 {
                    return bad("cross_validation needs at least two values of tau".into());
                }
                taus.iter().try_for_each(|&t| self.steps_for(t).map(|_| ()))
            }
        }?;
        self.jko_params()?;
        self.pde_params()?;
        Ok(())
    }

    /// Number of JKO steps of size `tau` covering the horizon exactly.
    pub fn steps_for(&self, tau: f64) -> Result<usize, CliError> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(CliError::Config(format!("tau must be positive, got {tau}")));
        }
        let steps = (self.horizon / tau).round();
        if (steps * tau - self.horizon).abs() > 1e-9 * self.horizon.max(tau) {
            return Err(CliError::Config(format!("tau {tau} does not divide the horizon {}", self.horizon)));
        }
        Ok(steps as usize)
    }

    pub fn jko_params(&self) -> Result<Option<JkoParams>, CliError> {
        let SolverSpec::Jko { tau, newton_tol, newton_max_iter } = &self.solver else {
            return Ok(None);
        };
        let mut p = JkoParams::new(*tau).map_err(config_err)?;
        if let Some(t) = newton_tol {
            p.newton_tol = *t;
        }
        if let Some(k) = newton_max_iter {
            p.newton_max_iter = *k;
        }
        p.validate().map_err(config_err)?;
        Ok(Some(p))
    }

    pub fn pde_params(&self) -> Result<Option<PdeParams>, CliError> {
        let (dt, scheme) = match &self.solver {
            SolverSpec::Pde { dt, scheme } => (*dt, *scheme),
            SolverSpec::CrossValidation { reference_dt, .. } => (*reference_dt, Scheme::ImplicitNewton),
            SolverSpec::Jko { .. } => return Ok(None),
        };
        let p = match scheme {
            Scheme::ImplicitNewton => PdeParams::implicit(dt),
            Scheme::ExplicitAdaptive => PdeParams::explicit(dt),
        };
        p.map(Some).map_err(config_err)
    }

    pub fn build(&self) -> Result<Setup, CliError> {
        let domain = match self.domain {
            DomainSpec::Torus { length } => Domain::torus(length),
            DomainSpec::Interval { a, b } => Domain::interval(a, b),
        }
        .map_err(config_err)?;
        let grid = make_grid(domain, self.n).map_err(config_err)?;
        let exps = Exponents::new(self.r).map_err(config_err)?;
        let (start, len) = (grid.domain().start(), grid.length());
        let rho = match &self.rho {
            RhoSpec::Uniform => vec![1.0; grid.n()],
            RhoSpec::Cosine { amplitude } => grid.sample(|x| 1.0 + amplitude * (2.0 * PI * (x - start) / len).cos()),
            RhoSpec::ExpTilt { slope } => grid.sample(|x| (slope * (x - start)).exp()),
            RhoSpec::Csv { path } => read_column(path, "rho")?,
        };
        let lambda = match self.lambda {
            Some(l) => l,
            None => estimate_semiconcavity(&rho, &grid, &exps),
        };
        let weight = Weight::from_samples(&grid, rho, &exps, lambda).map_err(config_err)?;
        let f0 = self.initial(&grid, &weight)?;
        Ok(Setup { grid, exps, weight, f0 })
    }

    fn initial(&self, grid: &Grid, w: &Weight) -> Result<Density, CliError> {
        let (start, len) = (grid.domain().start(), grid.length());
        let perturbed = |p: Vec<f64>| {
            let f: Vec<f64> = w.m().iter().zip(&p).map(|(m, p)| m * (1.0 + p)).collect();
            Density::new(f, grid).and_then(|d| d.with_mass(self.mass, grid))
        };
        match &self.f0 {
            InitialSpec::Steady => steady_state(w, self.mass),
            InitialSpec::SinePerturbed { amplitude } => {
                perturbed(grid.sample(|x| amplitude * (2.0 * PI * (x - start) / len).sin()))
            }
            InitialSpec::Spike { height, width } => {
                let c = start + 0.5 * len;
                perturbed(grid.sample(|x| height * (-((x - c) / width).powi(2)).exp()))
            }
            InitialSpec::Random { seed, amplitude, modes } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let coeffs: Vec<(f64, f64)> = (1..=*modes)
                    .map(|k| (rng.gen_range(-1.0..1.0) / k as f64, rng.gen_range(-1.0..1.0) / k as f64))
                    .collect();
                let p = grid.sample(|x| {
                    let y = 2.0 * PI * (x - start) / len;
                    coeffs
                        .iter()
                        .enumerate()
                        .map(|(k, (a, b))| {
                            let kk = (k + 1) as f64;
                            a * (kk * y).cos() + b * (kk * y).sin()
                        })
                        .sum()
                });
                let peak = p.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
                let scale = if peak > 0.0 { amplitude / peak } else { 0.0 };
                perturbed(p.into_iter().map(|v| v * scale).collect())
            }
            InitialSpec::Csv { path } => {
                Density::new(read_column(path, "f")?, grid).and_then(|d| d.with_mass(self.mass, grid))
            }
        }
        .map_err(config_err)
    }
}

fn config_err(e: ufd_core::Error) -> CliError {
    CliError::Config(e.to_string())
}

/// Largest discrete second difference of `log m` (interior cells on an interval).
/// Roundoff-sized curvature (below 1e-8) is treated as zero.
fn estimate_semiconcavity(rho: &[f64], grid: &Grid, exps: &Exponents) -> f64 {
    let n = rho.len();
    let lm: Vec<f64> = rho.iter().map(|v| v.ln() / exps.sigma()).collect();
    let h2 = grid.h() * grid.h();
    let range = if grid.is_periodic() { 0..n } else { 1..n.saturating_sub(1) };
    range
        .map(|i| (lm[(i + n - 1) % n] - 2.0 * lm[i] + lm[(i + 1) % n]) / h2)
        .filter(|v| v.abs() >= 1e-8)
        .fold(0.0, f64::max)
}

/// Reads the named column from a CSV with a header row.
pub fn read_column(path: &Path, column: &str) -> Result<Vec<f64>, CliError> {
    let err = |e: String| CliError::Config(format!("{}: {e}", path.display()));
    let mut rd = csv::Reader::from_path(path).map_err(|e| err(e.to_string()))?;
    let idx = rd
        .headers()
        .map_err(|e| err(e.to_string()))?
        .iter()
        .position(|h| h.trim() == column)
        .ok_or_else(|| err(format!("no column named '{column}'")))?;
    rd.records()
        .map(|rec| {
            let rec = rec.map_err(|e| err(e.to_string()))?;
            let cell = rec.get(idx).ok_or_else(|| err("short row".into()))?;
            cell.trim().parse::<f64>().map_err(|e| err(format!("'{cell}': {e}")))
        })
        .collect()
}
