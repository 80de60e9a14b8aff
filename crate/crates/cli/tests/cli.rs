use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use proptest::prelude::*;
use serde_json::{json, Value};
use tempfile::TempDir;
use ufd_cli::config::{Check, DiagnosticsSpec, DomainSpec, ExperimentConfig, InitialSpec, RhoSpec, SolverSpec};
use ufd_core::Scheme;

fn ufd(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ufd")).args(args).current_dir(cwd).output().expect("spawn ufd")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    p
}

fn base(f0: Value, solver: Value, out: &str) -> Value {
    json!({
        "schema_version": 1,
        "domain": {"kind": "torus", "length": 1.0},
        "n": 48,
        "r": 1.0,
        "rho": {"preset": "uniform"},
        "f0": f0,
        "solver": solver,
        "horizon": 0.1,
        "output_dir": out,
    })
}

fn diagnostics(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("diagnostics.json")).unwrap()).unwrap()
}

fn csv_column(path: &Path, col: &str) -> Vec<f64> {
    ufd_cli::config::read_column(path, col).unwrap()
}

#[test]
fn steady_state_run_passes_all_checks() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = base(json!({"preset": "steady"}), json!({"kind": "jko", "tau": 0.01}), "out");
    cfg["rho"] = json!({"preset": "cosine", "amplitude": 0.3});
    cfg["diagnostics"] = json!({"l2_tolerance": 1e-10});
    write_config(tmp.path(), "steady.json", &cfg);
    let o = ufd(&["run", "steady.json"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let line = stdout(&o);
    assert!(line.contains("all checks pass"), "{line}");
    let d = diagnostics(&tmp.path().join("out"));
    assert_eq!(d["status"], "ok");
    assert!(d["summary"]["l2_error"].as_f64().unwrap() <= 1e-10);
    assert!(tmp.path().join("out/trajectory.csv").exists());
    assert!(tmp.path().join("out/density_000010.csv").exists());
}

#[test]
fn pde_run_writes_artifacts_and_respects_stride() {
    let tmp = TempDir::new().unwrap();
    let cfg = base(json!({"preset": "sine_perturbed", "amplitude": 0.4}), json!({"kind": "pde", "dt": 0.005}), "out");
    write_config(tmp.path(), "pde.json", &cfg);
    let o = ufd(&["run", "pde.json", "--stride", "5"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let steps = csv_column(&tmp.path().join("out/trajectory.csv"), "step");
    assert_eq!(steps, vec![0.0, 5.0, 10.0, 15.0, 20.0]);
    let f = csv_column(&tmp.path().join("out/density_000020.csv"), "f");
    assert_eq!(f.len(), 48);
}

#[test]
fn cross_validation_gaps_decrease() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = base(
        json!({"preset": "sine_perturbed", "amplitude": 0.5}),
        json!({"kind": "cross_validation", "taus": [0.004, 0.002, 0.001, 0.0005], "reference_dt": 2e-5}),
        "cv",
    );
    cfg["r"] = json!(0.25);
    cfg["horizon"] = json!(0.02);
    write_config(tmp.path(), "cv.json", &cfg);
    let o = ufd(&["run", "cv.json"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let d = diagnostics(&tmp.path().join("cv"));
    let gaps: Vec<f64> =
        d["report"]["gaps"].as_array().unwrap().iter().map(|p| p["l1_gap"].as_f64().unwrap()).collect();
    assert_eq!(gaps.len(), 4);
    assert!(gaps.windows(2).all(|g| g[1] < g[0]), "{gaps:?}");
}

#[test]
fn moser_table_for_three_dimensions() {
    let tmp = TempDir::new().unwrap();
    let o = ufd(&["moser", "--d", "3", "--r", "1", "--q0", "4", "--out", "m"], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("theta = 3"), "{text}");
    assert!(text.contains("beta = 4.000000000000"), "{text}");
    let d = diagnostics(&tmp.path().join("m"));
    assert_eq!(d["command"], "moser");
    let q: Vec<f64> = d["report"]["q_seq"].as_array().unwrap().iter().take(4).map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(q, vec![4.0, 6.0, 12.0, 30.0]);
}

#[test]
fn moser_rejects_subcritical_and_missing_p_star() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(ufd(&["moser", "--d", "3", "--r", "1", "--q0", "3"], tmp.path()).status.code(), Some(2));
    assert_eq!(ufd(&["moser", "--d", "1", "--r", "1", "--q0", "9"], tmp.path()).status.code(), Some(2));
    assert_eq!(
        ufd(&["moser", "--d", "1", "--r", "1", "--q0", "9", "--p-star", "6"], tmp.path()).status.code(),
        Some(0)
    );
}

fn compare_pair(tmp: &Path, fa: Value, fb: Value, mass_a: f64) -> (Output, PathBuf) {
    let solver = json!({"kind": "pde", "dt": 0.005});
    let mut a = base(fa, solver.clone(), "cmp");
    a["mass"] = json!(mass_a);
    let b = base(fb, solver, "cmp");
    write_config(tmp, "a.json", &a);
    write_config(tmp, "b.json", &b);
    (ufd(&["compare", "a.json", "b.json"], tmp), tmp.join("cmp/contraction.csv"))
}

#[test]
fn compare_identical_configs_gives_zero_series() {
    let tmp = TempDir::new().unwrap();
    let f = json!({"preset": "random", "seed": 5, "amplitude": 0.7});
    let (o, csv) = compare_pair(tmp.path(), f.clone(), f, 1.0);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(csv_column(&csv, "total").iter().all(|v| *v == 0.0));
}

#[test]
fn compare_ordered_data_has_zero_negative_part() {
    let tmp = TempDir::new().unwrap();
    let (o, csv) = compare_pair(
        tmp.path(),
        json!({"preset": "steady"}),
        json!({"preset": "sine_perturbed", "amplitude": 0.3}),
        1.5,
    );
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(csv_column(&csv, "negative").iter().all(|v| *v == 0.0));
    assert!(csv_column(&csv, "positive").iter().all(|v| *v > 0.0));
}

#[test]
fn compare_random_pair_contracts() {
    let tmp = TempDir::new().unwrap();
    let (o, csv) = compare_pair(
        tmp.path(),
        json!({"preset": "random", "seed": 1, "amplitude": 0.8}),
        json!({"preset": "random", "seed": 2, "amplitude": 0.8}),
        1.0,
    );
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let total = csv_column(&csv, "total");
    assert!(total[0] > 0.0);
    assert!(total.windows(2).all(|p| p[1] <= p[0] + 1e-12), "{total:?}");
}

#[test]
fn compare_rejects_incompatible_configs() {
    let tmp = TempDir::new().unwrap();
    let a = base(json!({"preset": "steady"}), json!({"kind": "pde", "dt": 0.005}), "x");
    let mut b = a.clone();
    b["r"] = json!(2.0);
    write_config(tmp.path(), "a.json", &a);
    write_config(tmp.path(), "b.json", &b);
    assert_eq!(ufd(&["compare", "a.json", "b.json"], tmp.path()).status.code(), Some(2));
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("broken.json"), "{ \"schema_version\": 1").unwrap();
    assert_eq!(ufd(&["run", "broken.json"], tmp.path()).status.code(), Some(2));
    assert_eq!(ufd(&["run", "missing.json"], tmp.path()).status.code(), Some(2));

    let mut unknown = base(json!({"preset": "steady"}), json!({"kind": "jko", "tau": 0.01}), "x");
    unknown["colour"] = json!("blue");
    write_config(tmp.path(), "unknown.json", &unknown);
    assert_eq!(ufd(&["run", "unknown.json"], tmp.path()).status.code(), Some(2));

    let indivisible = base(json!({"preset": "steady"}), json!({"kind": "jko", "tau": 0.03}), "x");
    write_config(tmp.path(), "tau.json", &indivisible);
    assert_eq!(ufd(&["run", "tau.json"], tmp.path()).status.code(), Some(2));

    let mut version = base(json!({"preset": "steady"}), json!({"kind": "jko", "tau": 0.01}), "x");
    version["schema_version"] = json!(2);
    write_config(tmp.path(), "version.json", &version);
    assert_eq!(ufd(&["run", "version.json"], tmp.path()).status.code(), Some(2));
}

#[test]
fn solver_failure_exits_with_three_and_keeps_partial_artifacts() {
    let tmp = TempDir::new().unwrap();
    let cfg = base(
        json!({"preset": "spike", "height": 40.0, "width": 0.03}),
        json!({"kind": "jko", "tau": 0.01, "newton_max_iter": 2}),
        "fail",
    );
    write_config(tmp.path(), "fail.json", &cfg);
    let o = ufd(&["run", "fail.json"], tmp.path());
    assert_eq!(o.status.code(), Some(3));
    let d = diagnostics(&tmp.path().join("fail"));
    assert_eq!(d["status"], "solver_failure");
    assert!(d["error"].as_str().unwrap().contains("did not converge"));
    assert_eq!(csv_column(&tmp.path().join("fail/trajectory.csv"), "step"), vec![0.0]);
}

#[test]
fn failing_check_exits_with_one() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = base(json!({"preset": "sine_perturbed", "amplitude": 0.5}), json!({"kind": "jko", "tau": 0.01}), "o");
    cfg["diagnostics"] = json!({"l2_tolerance": 1e-12});
    write_config(tmp.path(), "strict.json", &cfg);
    let o = ufd(&["run", "strict.json"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("l2_tolerance=FAIL"));
}

#[test]
fn identical_config_and_seed_give_identical_files() {
    let tmp = TempDir::new().unwrap();
    let cfg = base(json!({"preset": "random", "seed": 11, "amplitude": 0.6}), json!({"kind": "jko", "tau": 0.01}), "d");
    write_config(tmp.path(), "det.json", &cfg);
    let snapshot = || -> Vec<(String, Vec<u8>)> {
        assert_eq!(ufd(&["run", "det.json", "--seed", "42"], tmp.path()).status.code(), Some(0));
        let mut files: Vec<_> = fs::read_dir(tmp.path().join("d"))
            .unwrap()
            .map(|e| e.unwrap().path())
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
            .collect();
        files.sort();
        files
    };
    let first = snapshot();
    assert_eq!(first, snapshot());
    assert!(first.iter().all(|(name, _)| !name.ends_with(".tmp")));

    // A different seed changes the initial data.
    assert_eq!(ufd(&["run", "det.json", "--seed", "43", "--out", "e"], tmp.path()).status.code(), Some(0));
    let f42 = csv_column(&tmp.path().join("d/density_000000.csv"), "f");
    let f43 = csv_column(&tmp.path().join("e/density_000000.csv"), "f");
    assert_ne!(f42, f43);
}

#[test]
fn tabulated_presets_read_density_csv() {
    let tmp = TempDir::new().unwrap();
    let mut cfg =
        base(json!({"preset": "sine_perturbed", "amplitude": 0.3}), json!({"kind": "pde", "dt": 0.01}), "src");
    cfg["rho"] = json!({"preset": "cosine", "amplitude": 0.2});
    write_config(tmp.path(), "src.json", &cfg);
    assert_eq!(ufd(&["run", "src.json"], tmp.path()).status.code(), Some(0));

    // Feed the initial density file back in as both ρ and f0.
    let mut tab = cfg.clone();
    tab["rho"] = json!({"preset": "csv", "path": "src/density_000000.csv"});
    tab["f0"] = json!({"preset": "csv", "path": "src/density_000000.csv"});
    tab["output_dir"] = json!("tab");
    write_config(tmp.path(), "tab.json", &tab);
    assert_eq!(ufd(&["run", "tab.json"], tmp.path()).status.code(), Some(0));
    let a = csv_column(&tmp.path().join("src/density_000000.csv"), "f");
    let b = csv_column(&tmp.path().join("tab/density_000000.csv"), "f");
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-12 * x, "{x} vs {y}");
    }
    let rho = csv_column(&tmp.path().join("tab/density_000000.csv"), "rho");
    let rho_src = csv_column(&tmp.path().join("src/density_000000.csv"), "rho");
    for (x, y) in rho.iter().zip(&rho_src) {
        assert!((x - y).abs() < 1e-12 * x);
    }
}

#[test]
fn example_config_round_trips() {
    let cfg = base(json!({"preset": "spike", "height": 3.0, "width": 0.05}), json!({"kind": "pde", "dt": 0.001}), "o");
    let parsed: ExperimentConfig = serde_json::from_value(cfg).unwrap();
    let text = serde_json::to_string(&parsed).unwrap();
    assert_eq!(serde_json::from_str::<ExperimentConfig>(&text).unwrap(), parsed);
    // Defaults are filled in and then written out explicitly.
    assert_eq!(parsed.mass, 1.0);
    assert_eq!(parsed.diagnostics.stride, 1);
    assert!(!parsed.diagnostics.checks.contains(&Check::Harnack));
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6..1e6f64, any::<f64>().prop_filter("finite", |v| v.is_finite())]
}

fn arb_config() -> impl Strategy<Value = ExperimentConfig> {
    let domain = prop_oneof![
        finite().prop_map(|length| DomainSpec::Torus { length }),
        (finite(), finite()).prop_map(|(a, b)| DomainSpec::Interval { a, b }),
    ];
    let rho = prop_oneof![
        Just(RhoSpec::Uniform),
        finite().prop_map(|amplitude| RhoSpec::Cosine { amplitude }),
        finite().prop_map(|slope| RhoSpec::ExpTilt { slope }),
        "[a-z/]{1,12}\\.csv".prop_map(|p| RhoSpec::Csv { path: p.into() }),
    ];
    let f0 = prop_oneof![
        Just(InitialSpec::Steady),
        finite().prop_map(|amplitude| InitialSpec::SinePerturbed { amplitude }),
        (finite(), finite()).prop_map(|(height, width)| InitialSpec::Spike { height, width }),
        (any::<u64>(), finite(), 1usize..9).prop_map(|(seed, amplitude, modes)| InitialSpec::Random {
            seed,
            amplitude,
            modes
        }),
        "[a-z]{1,8}\\.csv".prop_map(|p| InitialSpec::Csv { path: p.into() }),
    ];
    let solver = prop_oneof![
        (finite(), proptest::option::of(finite()), proptest::option::of(1usize..500))
            .prop_map(|(tau, newton_tol, newton_max_iter)| SolverSpec::Jko { tau, newton_tol, newton_max_iter }),
        (finite(), any::<bool>()).prop_map(|(dt, e)| SolverSpec::Pde {
            dt,
            scheme: if e { Scheme::ExplicitAdaptive } else { Scheme::ImplicitNewton },
        }),
        (prop::collection::vec(finite(), 0..5), finite())
            .prop_map(|(taus, reference_dt)| SolverSpec::CrossValidation { taus, reference_dt }),
    ];
    let diag = (
        prop::collection::vec(finite(), 0..4),
        1usize..100,
        prop::sample::subsequence(Check::ALL.to_vec(), 0..=6),
        proptest::option::of(finite()),
        any::<bool>(),
    )
        .prop_map(|(q_list, stride, checks, l2_tolerance, record_w2)| DiagnosticsSpec {
            q_list,
            stride,
            checks,
            l2_tolerance,
            record_w2,
        });
    (domain, 2usize..5000, finite(), rho, proptest::option::of(finite()), f0, finite(), solver, finite(), diag)
        .prop_map(|(domain, n, r, rho, lambda, f0, mass, solver, horizon, diagnostics)| ExperimentConfig {
            schema_version: 1,
            domain,
            n,
            r,
            rho,
            lambda,
            f0,
            mass,
            solver,
            horizon,
            output_dir: "out/run".into(),
            diagnostics,
        })
}

proptest! {
    #[test]
    fn config_round_trips_losslessly(cfg in arb_config()) {
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(serde_json::to_string_pretty(&back).unwrap(), text);
    }
}
