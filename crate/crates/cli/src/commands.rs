//! The `run`, `compare` and `moser` subcommands.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::json;
use ufd_core::analysis::{contraction_report, cross_validation, moser_schedule, CrossValidationSpec, MoserSchedule};
use ufd_core::{jko_run_with, pde_solve_with, DiagnosticsConfig, Exponents, Interrupted, Trajectory};

use crate::config::{ExperimentConfig, InitialSpec, Setup, SolverSpec};
use crate::error::CliError;
use crate::output::{emit, write_json, write_rows, write_trajectory};
use crate::report::{all_pass, l2_fit, trajectory_checks, CheckResult, Diagnostics, Summary};

/// Command-line settings that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub stride: Option<usize>,
    /// Replaces the seed of a `random` initial-data preset.
    pub seed: Option<u64>,
}

impl Overrides {
    fn apply(&self, cfg: &mut ExperimentConfig) -> Result<(), CliError> {
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if let Some(s) = self.stride {
            cfg.diagnostics.stride = s;
        }
        if let (Some(s), InitialSpec::Random { seed, .. }) = (self.seed, &mut cfg.f0) {
            *seed = s;
        }
        cfg.validate()
    }
}

/// What a finished command reports back to `main`.
#[derive(Debug, Clone)]
pub struct Completed {
    pub diagnostics: Diagnostics,
    pub output_dir: PathBuf,
}

impl Completed {
    pub fn exit_code(&self) -> i32 {
        if self.diagnostics.summary.all_checks_pass {
            0
        } else {
            1
        }
    }
}

fn diag_config(cfg: &ExperimentConfig) -> DiagnosticsConfig {
    DiagnosticsConfig {
        q_list: cfg.diagnostics.q_list.clone(),
        stride: cfg.diagnostics.stride,
        record_w2: cfg.diagnostics.record_w2,
    }
}

fn evolve(cfg: &ExperimentConfig, s: &Setup) -> Result<Trajectory, Interrupted> {
    let dc = diag_config(cfg);
    match &cfg.solver {
        SolverSpec::Jko { tau, .. } => {
            let params = cfg.jko_params().ok().flatten().expect("validated");
            let steps = cfg.steps_for(*tau).expect("validated");
            jko_run_with(&s.f0, &s.weight, &s.exps, &params, steps, &dc)
        }
        SolverSpec::Pde { .. } => {
            let params = cfg.pde_params().ok().flatten().expect("validated");
            pde_solve_with(&s.f0, &s.weight, &s.exps, &params, cfg.horizon, &dc)
        }
        SolverSpec::CrossValidation { .. } => unreachable!("handled separately"),
    }
}

fn load(path: &Path, ov: &Overrides) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::load(path)?;
    ov.apply(&mut cfg)?;
    Ok(cfg)
}

pub fn run(config_path: &Path, ov: &Overrides) -> Result<Completed, CliError> {
    let cfg = load(config_path, ov)?;
    let setup = cfg.build()?;
    let dir = cfg.output_dir.clone();
    if let SolverSpec::CrossValidation { taus, .. } = &cfg.solver {
        return run_cross_validation(&cfg, &setup, taus.clone());
    }
    let (traj, failure) = match evolve(&cfg, &setup) {
        Ok(t) => (t, None),
        Err(Interrupted { error, partial }) => (*partial, Some(error.to_string())),
    };
    write_trajectory(&dir, "", &traj, &setup.weight)?;
    let checks = trajectory_checks(&traj, &setup.weight, &cfg.diagnostics.checks, cfg.diagnostics.l2_tolerance);
    let summary = Summary {
        l2_error: traj.last().map(|s| s.diagnostics.l2_steady),
        fit: l2_fit(&traj),
        samples: traj.len(),
        all_checks_pass: all_pass(&checks),
    };
    let report = json!({ "config": cfg, "lambda": setup.weight.lambda(), "Lambda": setup.weight.semiconcavity() });
    let mut diagnostics = Diagnostics::new("run", checks, summary, report);
    if let Some(e) = &failure {
        diagnostics = diagnostics.failed(e.clone());
    }
    write_json(&dir.join("diagnostics.json"), &diagnostics)?;
    emit(&diagnostics.summary_line());
    match failure {
        Some(e) => Err(CliError::Solver(e)),
        None => Ok(Completed { diagnostics, output_dir: dir }),
    }
}

fn run_cross_validation(cfg: &ExperimentConfig, s: &Setup, taus: Vec<f64>) -> Result<Completed, CliError> {
    let reference = cfg.pde_params()?.expect("cross-validation has a reference");
    let spec = CrossValidationSpec { taus, t_end: cfg.horizon, reference };
    let dir = &cfg.output_dir;
    let cv = match cross_validation(&s.f0, &s.weight, &s.exps, &spec) {
        Ok(cv) => cv,
        Err(e) => {
            let summary = Summary { l2_error: None, fit: None, samples: 0, all_checks_pass: false };
            let d = Diagnostics::new("run", Vec::new(), summary, json!({ "config": cfg })).failed(e.to_string());
            write_json(&dir.join("diagnostics.json"), &d)?;
            emit(&d.summary_line());
            return Err(CliError::Solver(e.to_string()));
        }
    };
    write_rows(
        &dir.join("cross_validation.csv"),
        &["tau", "L1_gap"],
        cv.taus.iter().zip(&cv.gaps).map(|(t, g)| vec![*t, *g]),
    )?;
    let worst = cv.gaps.windows(2).map(|g| g[1] / g[0]).fold(0.0, f64::max);
    let checks = vec![CheckResult::new(
        "gaps_decrease",
        cv.monotone,
        worst,
        format!("fitted order {:.3}, largest gap ratio {worst:.3}", cv.fitted_order),
    )];
    let summary = Summary { l2_error: None, fit: None, samples: cv.taus.len(), all_checks_pass: all_pass(&checks) };
    let pairs: Vec<_> = cv.taus.iter().zip(&cv.gaps).map(|(t, g)| json!({ "tau": t, "l1_gap": g })).collect();
    let report = json!({ "config": cfg, "gaps": pairs, "orders": cv.orders, "fitted_order": cv.fitted_order });
    let diagnostics = Diagnostics::new("run", checks, summary, report);
    write_json(&dir.join("diagnostics.json"), &diagnostics)?;
    emit(&diagnostics.summary_line());
    Ok(Completed { diagnostics, output_dir: dir.clone() })
}

/// Fields that must agree for two runs to be compared; the initial data and mass may differ.
fn compatible(a: &ExperimentConfig, b: &ExperimentConfig) -> Result<(), String> {
    let mismatch = |what: &str| Err(format!("configs differ in {what}"));
    if a.domain != b.domain || a.n != b.n {
        return mismatch("domain or resolution");
    }
    if a.r != b.r || a.rho != b.rho || a.lambda != b.lambda {
        return mismatch("r, rho or Lambda");
    }
    if a.horizon != b.horizon {
        return mismatch("horizon");
    }
    if a.solver != b.solver || a.diagnostics.stride != b.diagnostics.stride {
        return mismatch("solver or stride");
    }
    if matches!(a.solver, SolverSpec::CrossValidation { .. }) {
        return Err("compare needs a jko or pde solver".into());
    }
    Ok(())
}

pub fn compare(path_a: &Path, path_b: &Path, ov: &Overrides) -> Result<Completed, CliError> {
    let a = load(path_a, ov)?;
    let b = load(path_b, ov)?;
    compatible(&a, &b).map_err(CliError::Config)?;
    let (sa, sb) = (a.build()?, b.build()?);
    let dir = a.output_dir.clone();
    let (ra, rb) = rayon::join(|| evolve(&a, &sa), || evolve(&b, &sb));
    let mut failure = None;
    let mut unwrap = |r: Result<Trajectory, Interrupted>| match r {
        Ok(t) => t,
        Err(Interrupted { error, partial }) => {
            failure.get_or_insert(error.to_string());
            *partial
        }
    };
    let (ta, tb) = (unwrap(ra), unwrap(rb));
    write_trajectory(&dir, "a_", &ta, &sa.weight)?;
    write_trajectory(&dir, "b_", &tb, &sb.weight)?;

    // On failure the partial trajectories may have different lengths; compare the common prefix.
    let k = ta.len().min(tb.len());
    let trim = |t: &Trajectory| Trajectory { q_list: t.q_list.clone(), samples: t.samples[..k].to_vec() };
    let report = contraction_report(&trim(&ta), &trim(&tb), &sa.weight).map_err(|e| CliError::Config(e.to_string()))?;
    write_rows(
        &dir.join("contraction.csv"),
        &["t", "positive", "negative", "total"],
        (0..report.times.len()).map(|i| vec![report.times[i], report.positive[i], report.negative[i], report.total[i]]),
    )?;
    let worst = report.worst_increase.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let worst = if worst.is_finite() { worst } else { 0.0 };
    let checks = vec![CheckResult::new(
        "l1_contraction",
        report.nonincreasing || report.times.len() < 2,
        worst,
        format!("max increase of (f-g)+, (f-g)-, |f-g| integrals {worst:.3e}"),
    )];
    let summary = Summary { l2_error: None, fit: None, samples: k, all_checks_pass: all_pass(&checks) };
    let body = json!({ "config_a": a, "config_b": b, "contraction": report });
    let mut diagnostics = Diagnostics::new("compare", checks, summary, body);
    if let Some(e) = &failure {
        diagnostics = diagnostics.failed(e.clone());
    }
    write_json(&dir.join("diagnostics.json"), &diagnostics)?;
    emit(&diagnostics.summary_line());
    match failure {
        Some(e) => Err(CliError::Solver(e)),
        None => Ok(Completed { diagnostics, output_dir: dir }),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MoserArgs {
    pub d: u32,
    pub r: f64,
    pub q0: f64,
    pub p_star: Option<f64>,
    pub tail_tol: f64,
}

pub fn moser(args: &MoserArgs, out: Option<&Path>) -> Result<MoserSchedule, CliError> {
    let exps = Exponents::with_dimension(args.r, args.d).map_err(|e| CliError::Config(e.to_string()))?;
    if args.d <= 2 && args.p_star.is_none() {
        return Err(CliError::Config("--p-star is required for d <= 2".into()));
    }
    let s = moser_schedule(args.q0, &exps, args.d, args.p_star.unwrap_or(f64::NAN), args.tail_tol)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let mut t = String::new();
    let _ = writeln!(t, "d = {}, r = {}, sigma = {}, theta = {}, K = {}", s.d, args.r, s.sigma, s.theta, s.k);
    let _ = writeln!(t, "{:>4} {:>16} {:>16} {:>16} {:>16}", "i", "q_i", "qbar_i", "A_i", "B_i");
    for i in 0..s.q_seq.len() {
        let a = if i == 0 { 0.0 } else { s.a_partial[i - 1] };
        let _ =
            writeln!(t, "{i:>4} {:>16.8e} {:>16.8e} {a:>16.12} {:>16.12}", s.q_seq[i], s.qbar_seq[i], s.b_partial[i]);
    }
    let _ = writeln!(t, "A_inf in [{:.12}, {:.12}]", s.a_inf.lower, s.a_inf.upper);
    let _ = writeln!(t, "B_inf in [{:.12}, {:.12}]", s.b_inf.lower, s.b_inf.upper);
    let _ = write!(t, "alpha = {:.12}, beta = {:.12}", s.alpha, s.beta);
    emit(&t);
    if let Some(dir) = out {
        let summary = Summary { l2_error: None, fit: None, samples: s.q_seq.len(), all_checks_pass: true };
        let d = Diagnostics::new("moser", Vec::new(), summary, serde_json::to_value(&s).expect("plain data"));
        write_json(&dir.join("diagnostics.json"), &d)?;
    }
    Ok(s)
}
