use scprop::config::{ExperimentConfig, Fault, IntegratorMode, Scenario, TGrid, KEYS};
use scprop::dynamics::{StepControl, Xi};
use scprop::experiments::{run_bvp_solve, run_kerr_purity, run_propagator, PRINTED_CUBIC_GAP};
use scprop::Error;

fn kerr_csv(cfg: &ExperimentConfig) -> String {
    let mut out = Vec::new();
    run_kerr_purity(cfg).unwrap().write_csv(&mut out).unwrap();
    String::from_utf8(out).unwrap()
}

#[test]
fn layering_prefers_environment_over_file() {
    let mut cfg = ExperimentConfig::parse("lambda = 0.3\nhbar = 2 # comment\nscenario = kerr").unwrap();
    cfg.apply_env([
        ("SCPROP_LAMBDA".to_string(), "0.5".to_string()),
        ("UNRELATED".to_string(), "x".to_string()),
    ])
    .unwrap();
    assert_eq!(cfg.lambda, 0.5);
    assert_eq!(cfg.hbar, 2.0);
    assert_eq!(cfg.scenario, Some(Scenario::Kerr));
}

#[test]
fn config_errors_name_the_line() {
    let err = ExperimentConfig::parse("hbar = 1\nbogus = 3").unwrap_err();
    assert!(matches!(&err, Error::Config(m) if m.contains('2')), "{err}");
    assert!(ExperimentConfig::parse("hbar = abc").is_err());
}

#[test]
fn empty_grid_is_a_config_error() {
    for text in ["t_count = 0", "t_start = 1\nt_stop = 1\nt_count = 3", "t_start = nan"] {
        let res = ExperimentConfig::parse(text).and_then(|c| c.validate());
        assert!(matches!(res, Err(Error::Config(_))), "{text}: {res:?}");
    }
    assert!(TGrid::new(0.0, 1.0, 0).is_err());
}

#[test]
fn every_documented_key_is_accepted() {
    for (key, _) in KEYS {
        let sample = match *key {
            "scenario" => "kerr",
            "monomial" => "1, 0, 1, 1, 0, 0",
            "z0" | "z1" | "z2" | "guess" => "1,0.5i",
            "xi" => "-1",
            "integrator" => "adaptive",
            "output" => "out.csv",
            "inject_fault" => "tangent_det",
            "n_modes" | "max_degree" | "t_count" | "steps" | "bvp_max_iter" | "n_cut" | "n_quad" | "seed"
            | "threads" | "max_steps" => "3",
            _ => "0.5",
        };
        let mut cfg = ExperimentConfig::default();
        cfg.set(key, sample).unwrap_or_else(|e| panic!("{key}: {e}"));
    }
}

#[test]
fn integrator_settings_follow_the_mode() {
    let mut cfg = ExperimentConfig::parse("integrator = fixed").unwrap();
    assert!(cfg.integrator().is_err());
    cfg.steps = Some(500);
    assert_eq!(cfg.integrator().unwrap().control, StepControl::Fixed(500));
    cfg.integrator_mode = IntegratorMode::Adaptive;
    assert!(matches!(cfg.integrator().unwrap().control, StepControl::Adaptive { .. }));
    let faulty = ExperimentConfig::parse("inject_fault = energy_drift\nxi = -1").unwrap();
    assert_eq!(faulty.fault, Fault::EnergyDrift);
    assert_eq!(faulty.xi, Xi::Minus);
}

#[test]
fn kerr_purity_csv_is_reproducible() {
    let mut cfg = ExperimentConfig::default();
    cfg.set_t_grid(TGrid::new(0.0, 30.0, 7).unwrap());
    let a = kerr_csv(&cfg);
    assert_eq!(a, kerr_csv(&cfg));
    let header = a.lines().next().unwrap();
    assert_eq!(
        header,
        "T,T_x,T_y,x,P_pipeline,P_printed,P_det_form,P_exact,S_lin,short_time_dev,printed_minus_pipeline,imag_residue,status"
    );
    assert!(a.contains("\r\n"));
    assert_eq!(a.lines().count(), 8);
}

#[test]
fn kerr_report_quantifies_the_printed_gap() {
    let mut cfg = ExperimentConfig::default();
    // x = 1e-6 .. 1 with z0 = (1, 1), Gamma = 0.1
    cfg.set_t_grid(TGrid::new(0.01, 10.0, 12).unwrap());
    let report = run_kerr_purity(&cfg).unwrap();
    assert!(report.passed());
    let d = &report.divergence;
    assert!(d.max_gap > 1e-3, "{d:?}");
    assert!(d.pipeline_vs_reduced_form < 1e-9, "{d:?}");
    let cubic = d.cubic_coefficient.unwrap();
    assert!((cubic - PRINTED_CUBIC_GAP).abs() < 0.5, "{cubic}");
    let quadratic = d.det_form_quadratic_coefficient.unwrap();
    assert!((quadratic - 1.0).abs() < 0.5, "{quadratic}");
    for row in &report.rows {
        assert!((row.scaled_x - cfg.omega_x * row.duration).abs() < 1e-15);
        assert!(row.exact > 0.0 && row.exact <= 1.0 + 1e-12);
    }
}

#[test]
fn noninteracting_kerr_rows_are_pure() {
    let mut cfg = ExperimentConfig::parse("lambda = 0").unwrap();
    cfg.set_t_grid(TGrid::new(0.0, 10.0, 21).unwrap());
    for row in run_kerr_purity(&cfg).unwrap().rows {
        assert!((row.pipeline.unwrap() - 1.0).abs() <= 1e-12);
        assert!((row.exact - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn harmonic_propagator_rows_are_exact() {
    let mut cfg = ExperimentConfig::parse("scenario = harmonic\nz1 = 0.5+0.2i\nz2 = -0.3+0.4i").unwrap();
    cfg.set_t_grid(TGrid::new(0.0, 8.0, 9).unwrap());
    let report = run_propagator(&cfg).unwrap();
    assert!(report.passed());
    for row in &report.rows {
        assert!(row.abs_error().unwrap() <= 1e-10);
        assert_eq!(row.n_solutions, 1);
    }
}

#[test]
fn bvp_solve_reports_converged_solutions() {
    let mut cfg = ExperimentConfig::parse("scenario = kerr\nz1 = 0.5,0.3i\nz2 = 0.2,0.4\nxi = -1").unwrap();
    cfg.set_t_grid(TGrid::new(0.8, 0.8, 1).unwrap());
    let report = run_bvp_solve(&cfg).unwrap();
    assert_eq!(report.xi, Xi::Minus);
    assert!(!report.solutions.is_empty());
    for s in &report.solutions {
        assert!(s.residual <= cfg.bvp_tol);
        assert!(s.jacobian_det.norm() > 1e-14);
    }
}

#[test]
fn scenario_mismatch_is_rejected() {
    let cfg = ExperimentConfig::parse("scenario = harmonic").unwrap();
    assert!(run_kerr_purity(&cfg).is_err());
}
