//! Every module invariant as one deterministic pass/fail table.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{ExperimentConfig, Fault, TGrid};
use crate::dynamics::{evolve, evolve_physical_time, tangent_vs_finite_difference, Xi};
use crate::error::{Error, Result};
use crate::experiments::{run_ho_check, run_kerr_purity};
use crate::hamiltonian::{
    build_harmonic, build_kerr_pair, phase_to_uv, uv_to_phase, CoherentLabel, HamiltonianModel, Monomial, PhasePoint,
};
use crate::oracle::{coherent_pair, evolve_kerr, kerr_exact_purity_sum, reduced_density, reduced_purity};
use crate::output::fmt17;
use crate::propagator::{conjugation_check, propagate};
use crate::purity::{gaussian_saddle_check, kerr_x, purity_semiclassical};
use crate::shooting::{
    action_derivative_identities, action_time_derivative_check, fixed_point_check, prefactor_consistency,
    shooting_jacobian_check, solve, BvpProblem, ShootingSettings,
};

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub module: &'static str,
    pub invariant: &'static str,
    /// Worst value seen; infinite when the check could not be evaluated.
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct SuiteReport {
    pub seed: u64,
    pub checks: Vec<CheckResult>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&CheckResult> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(out);
        w.write_record(["module", "invariant", "measured", "tolerance", "status", "detail"])?;
        for c in &self.checks {
            w.write_record([
                c.module.to_string(),
                c.invariant.to_string(),
                fmt17(c.measured),
                fmt17(c.tolerance),
                if c.passed { "pass" } else { "fail" }.to_string(),
                c.detail.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// One line per check, then a verdict.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            s.push_str(&format!(
                "{} {:<26} {:<44} measured {:.3e} (limit {:.1e}){}\n",
                if c.passed { "PASS" } else { "FAIL" },
                c.module,
                c.invariant,
                c.measured,
                c.tolerance,
                if c.detail.is_empty() { String::new() } else { format!("  {}", c.detail) },
            ));
        }
        let failed = self.failures().len();
        s.push_str(&format!(
            "property-suite (seed {}): {} checks, {} failed",
            self.seed,
            self.checks.len(),
            failed
        ));
        s
    }
}

type Measure = Result<(f64, String)>;

struct Check {
    module: &'static str,
    invariant: &'static str,
    tolerance: f64,
    run: fn(&mut ChaCha8Rng, &ExperimentConfig) -> Measure,
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn rand_complex(rng: &mut ChaCha8Rng, radius: f64) -> Complex64 {
    // uniform in the disc
    let r = radius * rng.gen::<f64>().sqrt();
    Complex64::from_polar(r, rng.gen_range(0.0..2.0 * PI))
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize, radius: f64) -> Vec<Complex64> {
    (0..n).map(|_| rand_complex(rng, radius)).collect()
}

/// A hermitian two-mode model with cross terms of several degrees.
pub fn mixed_test_model(hbar: f64) -> Result<HamiltonianModel> {
    HamiltonianModel::new(
        vec![
            Monomial::new(c(1.0, 0.0), [(1, 1), (0, 0)]),
            Monomial::new(c(1.4, 0.0), [(0, 0), (1, 1)]),
            Monomial::new(c(0.3, 0.1), [(2, 0), (0, 0)]),
            Monomial::new(c(0.3, -0.1), [(0, 2), (0, 0)]),
            Monomial::new(c(0.05, 0.0), [(1, 1), (1, 1)]),
            Monomial::new(c(0.0, 0.2), [(1, 0), (0, 1)]),
            Monomial::new(c(0.0, -0.2), [(0, 1), (1, 0)]),
            Monomial::new(c(0.02, 0.0), [(2, 2), (0, 0)]),
        ],
        2,
        hbar,
    )
}

fn test_models(cfg: &ExperimentConfig) -> Result<Vec<HamiltonianModel>> {
    Ok(vec![
        build_harmonic(1.3, cfg.hbar)?,
        build_kerr_pair(1.0, 1.3, 0.2, cfg.hbar)?.0,
        mixed_test_model(cfg.hbar)?,
    ])
}

fn real_start(rng: &mut ChaCha8Rng, n: usize, radius: f64) -> Result<PhasePoint> {
    PhasePoint::real(&rand_vec(rng, n, radius))
}

fn reality_of_energy(rng: &mut ChaCha8Rng, cfg: &ExperimentConfig) -> Measure {
    let mut worst: f64 = 0.0;
    for model in test_models(cfg)? {
        for _ in 0..1000 {
            let h = model.eval(&real_start(rng, model.n_modes(), 2.0)?)?;
            worst = worst.max(h.im.abs() / (1.0 + h.norm()));
        }
    }
    Ok((worst, "1000 real points per model".into()))
}

fn derivative_fd(rng: &mut ChaCha8Rng, cfg: &ExperimentConfig) -> Measure {
    const STEP: f64 = 1e-5;
    let mut worst: f64 = 0.0;
    for model in test_models(cfg)? {
        let n = model.n_modes();
        for _ in 0..100 {
            let u = rand_vec(rng, n, 2.0);
            let v = rand_vec(rng, n, 2.0);
            let at = |du: Option<usize>, dv: Option<usize>, h: f64| -> Result<PhasePoint> {
                let (mut u, mut v) = (u.clone(), v.clone());
                if let Some(r) = du {
                    u[r] += h;
                }
                if let Some(r) = dv {
                    v[r] += h;
                }
                PhasePoint::new(&u, &v)
            };
            let base = model.derivatives(&PhasePoint::new(&u, &v)?)?;
            let mut gap = |fd: Complex64, exact: Complex64| {
                worst = worst.max((fd - exact).norm() / exact.norm().max(1.0));
            };
            for r in 0..n {
                for (is_u, shift) in [(true, (Some(r), None)), (false, (None, Some(r)))] {
                    let plus = model.derivatives(&at(shift.0, shift.1, STEP)?)?;
                    let minus = model.derivatives(&at(shift.0, shift.1, -STEP)?)?;
                    let d = |a: Complex64, b: Complex64| (a - b) / (2.0 * STEP);
                    let exact_grad = if is_u { base.grad.du[r] } else { base.grad.dv[r] };
                    gap(d(plus.value, minus.value), exact_grad);
                    for s in 0..n {
                        // column r of the Hessian from the shifted gradients
                        let (hu, hv) = if is_u {
                            (base.hess.uu[s][r], base.hess.uv[r][s])
                        } else {
                            (base.hess.uv[s][r], base.hess.vv[s][r])
                        };
                        gap(d(plus.grad.du[s], minus.grad.du[s]), hu);
                        gap(d(plus.grad.dv[s], minus.grad.dv[s]), hv);
                    }
                }
            }
        }
    }
    Ok((worst, "100 complex points per model, step 1e-5".into()))
}

fn coordinate_round_trip(rng: &mut ChaCha8Rng, cfg: &ExperimentConfig) -> Measure {
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.gen_range(1..=2);
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(0.3..3.0)).collect();
        let label = CoherentLabel::with_position_widths(&vec![c(0.0, 0.0); n], &b, cfg.hbar)?;
        let q = rand_vec(rng, n, 3.0);
        let p = rand_vec(rng, n, 3.0);
        let (q2, p2) = uv_to_phase(&phase_to_uv(&q, &p, &label)?, &label)?;
        for k in 0..n {
            worst = worst.max((q2[k] - q[k]).norm() / (1.0 + q[k].norm()));
            worst = worst.max((p2[k] - p[k]).norm() / (1.0 + p[k].norm()));
        }
    }
    Ok((worst, "200 random points and widths".into()))
}

/// Real Kerr and mixed-model trajectories shared by the dynamics checks.
fn dynamics_cases(rng: &mut ChaCha8Rng, cfg: &ExperimentConfig) -> Result<Vec<(HamiltonianModel, PhasePoint, f64)>> {
    let models = test_models(cfg)?;
    let mut cases = Vec::new();
    for model in models.into_iter().skip(1) {
        for _ in 0..3 {
            let start = real_start(rng, 2, 1.2)?;
            cases.push((model.clone(), start, rng.gen_range(0.5..3.0)));
        }
    }
    Ok(cases)
}

fn trajectory_metric(
    rng: &mut ChaCha8Rng,
    cfg: &ExperimentConfig,
    metric: fn(&crate::dynamics::TrajectoryRecord, &HamiltonianModel) -> f64,
) -> Result<f64> {
    let integrator = cfg.integrator()?;
    let cases = dynamics_cases(rng, cfg)?;
    let worst = cases
        .par_iter()
        .map(|(m, s, t)| evolve(m, s, *t, Xi::Plus, &integrator).map(|r| metric(&r, m)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(worst.into_iter().fold(0.0, f64::max))
}

fn reality_preservation(rng: &mut ChaCha8Rng, cfg: &ExperimentConfig) -> Measure {
    let w = trajectory_metric(rng, cfg, |r, _| r.reality_defect())?;
    Ok((w, "6 real trajectories".into()))
}

fn energy_conservation(rng: &mut ChaCha8Rng, cfg: &ExperimentConfig) -> Measure {
    let w = trajectory_metric(rng, cfg, |r, m| r.energy_drift(m))?;
    if cfg.fault == Fault::EnergyDrift {
        return Ok((w + 1e-6, "fault injected: energy_drift".into()));
    }
    Ok((w, "relative to 1 + |H(0)|".into()))
}

fn unit_determinant(rng: &mut ChaCha8Rng, cfg: &ExperimentConfig) -> Measure {
    let w = trajectory_metric(rng, cfg, |r, _| r.det_deviation())?;
    if cfg.fault == Fault::TangentDet {
        // as if every tangent matrix were scaled by 1.001
        return Ok((w + (1.001f64.powi(4) - 1.0), "fault injected: tangent_det".into()));
    }
    Ok((w, "every sample".into()))
}

fn xi_reversal(rng: &mut ChaCha8Rng, cfg: &ExperimentConfig) -> Measure {
    let cases = dynamics_cases(rng, cfg)?;
    let mut worst: f64 = 0.0;
    for (model, start, t) in &cases {
        // both directions on one fixed grid
        let grid = cfg.integrator()?.pinned(model, start, *t);
        let forward = evolve_physical_time(model, start, *t, Xi::Plus, &grid)?;
        let end = forward[forward.len() - 1].point;
        let backward = evolve_physical_time(model, &end, *t, Xi::Minus, &grid)?;
        for (b, f) in backward.iter().zip(forward.iter().rev()) {
            let gap = b.point.u().iter().zip(f.point.u()).chain(b.point.v().iter().zip(f.point.v()));
            for (x, y) in gap {
                worst = worst.max((x - y).norm() / (1.0 + y.norm()));
            }
        }
    }
    Ok((worst, "pointwise under t -> T - t".into()))
}

fn tangent_fd(rng: &mut ChaCha8Rng, cfg: &ExperimentConfig) -> Measure {
    let integrator = cfg.integrator()?;
    let mut worst: f64 = 0.0;
    for (model, _, t) in dynamics_cases(rng, cfg)? {
        // complexified start, off the real manifold
        let start = PhasePoint::new(&rand_vec(rng, 2, 1.0), &rand_vec(rng, 2, 1.0))?;
        for xi in [Xi::Plus, Xi::Minus] {
            worst = worst.max(tangent_vs_finite_difference(&model, &start, t.min(1.5), xi, &integrator)?);
        }
    }
    Ok((worst, "complex starts, both xi".into()))
}

/// Kerr boundary-value problems near real trajectories, both `xi`.
fn bvp_cases(rng: &mut ChaCha8Rng, cfg: &ExperimentConfig) -> Result<(HamiltonianModel, Vec<(Vec<Complex64>, Vec<Complex64>, f64, Xi)>)> {
    let (model, _) = build_kerr_pair(1.0, 1.3, 0.2, cfg.hbar)?;
    let mut cases = Vec::new();
    for xi in [Xi::Plus, Xi::Minus] {
        for _ in 0..2 {
            cases.push((rand_vec(rng, 2, 1.0), rand_vec(rng, 2, 1.0), rng.gen_range(0.2..1.0), xi));
        }
    }
    Ok((model, cases))
}

fn over_bvps(
    rng: &mut ChaCha8Rng,
    cfg: &ExperimentConfig,
    metric: fn(&BvpProblem, &crate::shooting::BvpSolution, &ShootingSettings) -> Result<f64>,
) -> Measure {
    let (model, cases) = bvp_cases(rng, cfg)?;
    let settings = cfg.shooting()?;
    let values = cases
        .par_iter()
        .map(|(z1, z2c, t, xi)| -> Result<f64> {
            let problem = BvpProblem::new(&model, z1, z2c, *t, *xi)?;
            let mut worst: f64 = 0.0;
            for s in solve(&problem, &settings)? {
                worst = worst.max(metric(&problem, &s, &settings)?);
            }
            Ok(worst)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((values.into_iter().fold(0.0, f64::max), format!("{} Kerr problems, both xi", cases.len())))
}

fn prefactor_fd(rng: &mut ChaCha8Rng, cfg: &ExperimentConfig) -> Measure {
    over_bvps(rng, cfg, prefactor_consistency)
}

fn jacobian_block(rng: &mut ChaCha8Rng, cfg: &ExperimentConfig) -> Measure {
    over_bvps(rng, cfg, shooting_jacobian_check)
}

fn fixed_point(rng: &mut ChaCha8Rng, cfg: &ExperimentConfig) -> Measure {
    let (w, d) = over_bvps(rng, cfg, fixed_point_check)?;
    Ok((w / cfg.bvp_tol, format!("{d}; free-end shift in units of tol")))
}

fn action_identities(rng: &mut ChaCha8Rng, cfg: &ExperimentConfig) -> Measure {
    over_bvps(rng, cfg, |p, s, st| Ok(action_derivative_identities(p, s, st)?.worst))
}

fn action_time_derivative(rng: &mut ChaCha8Rng, cfg: &ExperimentConfig) -> Measure {
    over_bvps(rng, cfg, |p, s, _| action_time_derivative_check(&s.trajectory, p.model, 1e-5))
}

fn harmonic_exactness(_: &mut ChaCha8Rng, cfg: &ExperimentConfig) -> Measure {
    let mut sub = cfg.clone();
    sub.scenario = None;
    sub.set_t_grid(TGrid::new(0.0, 4.0 * PI / cfg.omega, 9)?);
    let report = run_ho_check(&sub)?;
    Ok((report.max_error, format!("{} grid points, both xi", report.rows.len())))
}

fn branch_continuity(_: &mut ChaCha8Rng, cfg: &ExperimentConfig) -> Measure {
    let settings = cfg.shooting()?;
    let harmonic = build_harmonic(1.0, cfg.hbar)?;
    let (kerr, _) = build_kerr_pair(1.0, 1.3, 0.1, cfg.hbar)?;
    let cases = [
        (harmonic, vec![c(0.5, 0.2)], vec![c(-0.3, 0.4)]),
        (kerr, vec![c(0.4, 0.1), c(0.2, -0.3)], vec![c(0.3, 0.0), c(0.1, 0.2)]),
    ];
    let dt = 0.05;
    let count = (4.0 * PI / dt).round() as usize;
    let mut worst: f64 = 0.0;
    for (model, z1, z2) in &cases {
        let l1 = CoherentLabel::new(z1, cfg.hbar)?;
        let l2 = CoherentLabel::new(z2, cfg.hbar)?;
        let prefactors = (0..=count)
            .into_par_iter()
            .map(|k| -> Result<Complex64> {
                let k = propagate(model, &l1, &l2, k as f64 * dt, Xi::Plus, &[], &settings)?;
                Ok(k.contributions[0].prefactor)
            })
            .collect::<Result<Vec<_>>>()?;
        for w in prefactors.windows(2) {
            worst = worst.max((w[1] / w[0]).arg().abs());
        }
    }
    Ok((worst, format!("phase step per dT = {dt} over [0, 4 pi]")))
}

fn decoupled_factorization(rng: &mut ChaCha8Rng, cfg: &ExperimentConfig) -> Measure {
    let settings = cfg.shooting()?;
    let (pair, kerr) = build_kerr_pair(1.0, 1.7, 0.0, cfg.hbar)?;
    let hx = build_harmonic(kerr.omega_x, cfg.hbar)?;
    let hy = build_harmonic(kerr.omega_y, cfg.hbar)?;
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let (z1, z2) = (rand_vec(rng, 2, 1.0), rand_vec(rng, 2, 1.0));
        let t = rng.gen_range(0.0..6.0);
        let xi = if rng.gen::<bool>() { Xi::Plus } else { Xi::Minus };
        let label = |z: &[Complex64]| CoherentLabel::new(z, cfg.hbar);
        let both = propagate(&pair, &label(&z1)?, &label(&z2)?, t, xi, &[], &settings)?.amplitude;
        let kx = propagate(&hx, &label(&z1[..1])?, &label(&z2[..1])?, t, xi, &[], &settings)?.amplitude;
        let ky = propagate(&hy, &label(&z1[1..])?, &label(&z2[1..])?, t, xi, &[], &settings)?.amplitude;
        worst = worst.max((both - kx * ky).norm());
    }
    Ok((worst, "10 random two-mode cases".into()))
}

fn conjugation(rng: &mut ChaCha8Rng, cfg: &ExperimentConfig, kerr: bool) -> Measure {
    let settings = cfg.shooting()?;
    let (model, n) = if kerr {
        (build_kerr_pair(1.0, 1.3, 0.2, cfg.hbar)?.0, 2)
    } else {
        (build_harmonic(1.3, cfg.hbar)?, 1)
    };
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let l1 = CoherentLabel::new(&rand_vec(rng, n, 1.0), cfg.hbar)?;
        let l2 = CoherentLabel::new(&rand_vec(rng, n, 1.0), cfg.hbar)?;
        // Gamma = 0.26 here, so T <= 3.8 keeps Gamma T <= 1
        let t = rng.gen_range(0.0..3.8);
        worst = worst.max(conjugation_check(&model, &l1, &l2, t, &settings)?);
    }
    Ok((worst, "10 random cases".into()))
}

fn conjugation_harmonic(rng: &mut ChaCha8Rng, cfg: &ExperimentConfig) -> Measure {
    conjugation(rng, cfg, false)
}

fn conjugation_kerr(rng: &mut ChaCha8Rng, cfg: &ExperimentConfig) -> Measure {
    conjugation(rng, cfg, true)
}

fn decoupled_purity(_: &mut ChaCha8Rng, cfg: &ExperimentConfig) -> Measure {
    let integrator = cfg.integrator()?;
    let anharmonic = HamiltonianModel::new(
        vec![
            Monomial::new(c(1.0, 0.0), [(1, 1), (0, 0)]),
            Monomial::new(c(0.1, 0.0), [(2, 2), (0, 0)]),
            Monomial::new(c(1.3, 0.0), [(0, 0), (1, 1)]),
            Monomial::new(c(0.05, 0.0), [(0, 0), (2, 2)]),
        ],
        2,
        cfg.hbar,
    )?;
    let models = [build_kerr_pair(1.0, 1.3, 0.0, cfg.hbar)?.0, anharmonic];
    let label = CoherentLabel::new(&[c(1.0, 0.3), c(-0.5, 0.8)], cfg.hbar)?;
    let mut worst: f64 = 0.0;
    for model in &models {
        for k in 0..=10 {
            let p = purity_semiclassical(model, &label, k as f64, &integrator)?.p;
            worst = worst.max((p - 1.0).abs());
        }
    }
    Ok((worst, "T = 0..10, Kerr at lambda = 0 and a decoupled quartic".into()))
}

fn purity_cases(rng: &mut ChaCha8Rng, cfg: &ExperimentConfig) -> Result<Vec<(HamiltonianModel, CoherentLabel, f64)>> {
    let mut out = Vec::new();
    let models = [build_kerr_pair(1.0, 1.3, 0.2, cfg.hbar)?.0, mixed_test_model(cfg.hbar)?];
    for model in models {
        for _ in 0..3 {
            let label = CoherentLabel::new(&rand_vec(rng, 2, 1.0), cfg.hbar)?;
            out.push((model.clone(), label, rng.gen_range(0.1..2.0)));
        }
    }
    Ok(out)
}

fn hessian_symmetry(rng: &mut ChaCha8Rng, cfg: &ExperimentConfig) -> Measure {
    let integrator = cfg.integrator()?;
    let mut worst: f64 = 0.0;
    for (model, label, t) in purity_cases(rng, cfg)? {
        worst = worst.max(purity_semiclassical(&model, &label, t, &integrator)?.asymmetry());
    }
    Ok((worst, "|a - a^T|, |b - b^T|".into()))
}

fn purity_bounds(rng: &mut ChaCha8Rng, cfg: &ExperimentConfig) -> Measure {
    let integrator = cfg.integrator()?;
    let mut worst: f64 = 0.0;
    for (model, label, t) in purity_cases(rng, cfg)? {
        let b = purity_semiclassical(&model, &label, t, &integrator)?;
        if !(b.p > 0.0) {
            return Ok((f64::INFINITY, format!("P = {} at T = {t}", b.p)));
        }
        worst = worst.max(b.p - 1.0).max((b.s_lin - (1.0 - b.p)).abs());
    }
    Ok((worst, "excess of P over 1".into()))
}

fn short_time_law(_: &mut ChaCha8Rng, cfg: &ExperimentConfig) -> Measure {
    let integrator = cfg.integrator()?;
    let (model, kerr) = build_kerr_pair(1.0, 1.0, 0.1, cfg.hbar)?;
    let mut worst: f64 = 0.0;
    let mut at = String::new();
    for z0 in [[c(1.0, 0.0), c(1.0, 0.0)], [c(0.5, 0.5), c(1.0, -0.5)], [c(1.5, 0.0), c(0.0, 0.7)]] {
        let label = CoherentLabel::new(&z0, cfg.hbar)?;
        let scale = kerr_x(&z0, kerr.gamma, 1.0);
        for x in [1e-5, 1e-4, 1e-3] {
            let t = (x / scale).sqrt();
            let p = purity_semiclassical(&model, &label, t, &integrator)?.p;
            let ratio = (p - (1.0 - 2.0 * x)).abs() / (x * x);
            if ratio > worst {
                worst = ratio;
                at = format!("worst at x = {x:e}; measured in units of x^2");
            }
        }
    }
    Ok((worst, at))
}

fn mode_swap(rng: &mut ChaCha8Rng, cfg: &ExperimentConfig) -> Measure {
    let integrator = cfg.integrator()?;
    let mut worst: f64 = 0.0;
    for (model, label, t) in purity_cases(rng, cfg)? {
        let swapped_label = CoherentLabel::new(&[label.z()[1], label.z()[0]], cfg.hbar)?;
        let p = purity_semiclassical(&model, &label, t, &integrator)?.p;
        let q = purity_semiclassical(&model.mode_swapped(), &swapped_label, t, &integrator)?.p;
        worst = worst.max((p - q).abs());
    }
    Ok((worst, "x <-> y relabelling".into()))
}

fn saddle_quadrature(_: &mut ChaCha8Rng, cfg: &ExperimentConfig) -> Measure {
    let integrator = cfg.integrator()?;
    let (model, _) = build_kerr_pair(1.0, 1.0, 0.1, cfg.hbar)?;
    let start = PhasePoint::real(&[c(0.6, 0.0), c(0.5, 0.2)])?;
    let mut worst: f64 = 0.0;
    for t in [0.5, 1.0, 2.0] {
        let rec = evolve(&model, &start, t, Xi::Plus, &integrator)?;
        worst = worst.max(gaussian_saddle_check(&rec.tangent, cfg.n_quad)?.worst());
    }
    Ok((worst, format!("3 Kerr tangents, {} nodes per axis", cfg.n_quad)))
}

fn oracle_routes(_: &mut ChaCha8Rng, cfg: &ExperimentConfig) -> Measure {
    let mut worst: f64 = 0.0;
    for z0 in [[c(1.0, 0.0), c(1.0, 0.0)], [c(0.5, 0.5), c(-0.8, 0.3)]] {
        for gamma in [0.1, 0.5] {
            for t in [0.7, 3.0, 11.0] {
                let kerr = crate::hamiltonian::KerrPairModel::new(1.0, 1.0, gamma, cfg.hbar)?;
                let state = evolve_kerr(&coherent_pair(&z0, None)?, &kerr, t)?;
                let sum = kerr_exact_purity_sum(z0[0], z0[1], kerr.gamma, t, None)?;
                worst = worst.max((reduced_purity(&state)? - sum).abs());
            }
        }
    }
    Ok((worst, "state route against the closed sum".into()))
}

fn oracle_periodicity(rng: &mut ChaCha8Rng, _: &ExperimentConfig) -> Measure {
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let (zx, zy) = (rand_complex(rng, 1.5), rand_complex(rng, 1.5));
        let gamma = rng.gen_range(0.05..1.0);
        let t = rng.gen_range(0.0..20.0);
        let a = kerr_exact_purity_sum(zx, zy, gamma, t, None)?;
        let b = kerr_exact_purity_sum(zx, zy, gamma, t + 2.0 * PI / gamma, None)?;
        worst = worst.max((a - b).abs());
    }
    Ok((worst, "P(T) against P(T + 2 pi / Gamma)".into()))
}

fn oracle_cutoff(rng: &mut ChaCha8Rng, _: &ExperimentConfig) -> Measure {
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let (zx, zy) = (rand_complex(rng, 1.5), rand_complex(rng, 1.5));
        let (gamma, t) = (rng.gen_range(0.05..1.0), rng.gen_range(0.0..20.0));
        let n = crate::oracle::default_cutoff(zx.norm_sqr());
        let a = kerr_exact_purity_sum(zx, zy, gamma, t, Some(n))?;
        let b = kerr_exact_purity_sum(zx, zy, gamma, t, Some(n + 5))?;
        worst = worst.max((a - b).abs());
    }
    Ok((worst, "N_cut against N_cut + 5".into()))
}

fn reduced_state(rng: &mut ChaCha8Rng, cfg: &ExperimentConfig) -> Measure {
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let z0 = rand_vec(rng, 2, 1.2);
        let kerr = crate::hamiltonian::KerrPairModel::new(1.0, 1.0, rng.gen_range(0.05..0.5), cfg.hbar)?;
        let rho = reduced_density(&evolve_kerr(&coherent_pair(&z0, None)?, &kerr, rng.gen_range(0.0..10.0))?)?;
        let eig = rho.eigenvalues();
        let negative = eig.iter().fold(0.0f64, |m, &e| m.max(-e));
        worst = worst.max(rho.hermiticity_defect()).max((rho.trace() - 1.0).norm()).max(negative);
    }
    Ok((worst, "hermiticity, unit trace, positivity".into()))
}

fn csv_determinism(_: &mut ChaCha8Rng, cfg: &ExperimentConfig) -> Measure {
    let mut sub = ExperimentConfig::default();
    sub.hbar = cfg.hbar;
    sub.set_t_grid(TGrid::new(0.0, 20.0, 5)?);
    let render = || -> Result<Vec<u8>> {
        let mut out = Vec::new();
        run_kerr_purity(&sub)?.write_csv(&mut out)?;
        Ok(out)
    };
    let (a, b) = (render()?, render()?);
    Ok((if a == b { 0.0 } else { 1.0 }, "two kerr-purity runs compared byte for byte".into()))
}

fn empty_grid_rejected(_: &mut ChaCha8Rng, _: &ExperimentConfig) -> Measure {
    let rejected = matches!(
        ExperimentConfig::parse("t_count = 0").and_then(|c| c.validate()),
        Err(Error::Config(_))
    );
    Ok((if rejected { 0.0 } else { 1.0 }, "t_count = 0 must be a config error".into()))
}

fn checks() -> Vec<Check> {
    let s = |module, invariant, tolerance, run| Check {
        module,
        invariant,
        tolerance,
        run,
    };
    vec![
        s("hamiltonian_model", "energy real on real points", 1e-12, reality_of_energy as fn(&mut ChaCha8Rng, &ExperimentConfig) -> Measure),
        s("hamiltonian_model", "gradient and hessian match differences", 1e-6, derivative_fd),
        s("hamiltonian_model", "phase_to_uv round trip", 1e-12, coordinate_round_trip),
        s("complex_dynamics", "reality preservation", 1e-10, reality_preservation),
        s("complex_dynamics", "energy conservation", 1e-10, energy_conservation),
        s("complex_dynamics", "det tangent = 1", 1e-9, unit_determinant),
        s("complex_dynamics", "xi-reversal retraces trajectory", 1e-9, xi_reversal),
        s("complex_dynamics", "tangent matches finite differences", 1e-6, tangent_fd),
        s("complex_dynamics", "dS/dT = -xi H", 1e-6, action_time_derivative),
        s("boundary_shooting", "prefactor consistency", 1e-4, prefactor_fd),
        s("boundary_shooting", "jacobian equals tangent block", 1e-8, jacobian_block),
        s("boundary_shooting", "solutions are fixed points", 1.0, fixed_point),
        s("boundary_shooting", "action-derivative identities", 1e-5, action_identities),
        s("semiclassical_propagator", "harmonic exactness", 1e-10, harmonic_exactness),
        s("semiclassical_propagator", "branch continuity", PI / 2.0, branch_continuity),
        s("semiclassical_propagator", "decoupled factorization", 1e-10, decoupled_factorization),
        s("semiclassical_propagator", "conjugation (harmonic)", 1e-9, conjugation_harmonic),
        s("semiclassical_propagator", "conjugation (Kerr)", 1e-7, conjugation_kerr),
        s("entanglement_purity", "decoupled purity = 1", 1e-12, decoupled_purity),
        s("entanglement_purity", "a and b symmetric", 1e-9, hessian_symmetry),
        s("entanglement_purity", "0 < P <= 1 and S_lin = 1 - P", 1e-9, purity_bounds),
        s("entanglement_purity", "short-time law |P - (1-2x)| <= 5x^2", 5.0, short_time_law),
        s("entanglement_purity", "mode-swap symmetry", 1e-10, mode_swap),
        s("entanglement_purity", "gaussian saddle quadrature", 1e-6, saddle_quadrature),
        s("quantum_oracle", "state route equals closed sum", 1e-8, oracle_routes),
        s("quantum_oracle", "periodicity in 2 pi / Gamma", 1e-8, oracle_periodicity),
        s("quantum_oracle", "cutoff robustness", 1e-9, oracle_cutoff),
        s("quantum_oracle", "reduced density is a state", 1e-12, reduced_state),
        s("experiment_cli", "bit-identical csv", 0.0, csv_determinism),
        s("experiment_cli", "empty T grid rejected", 0.0, empty_grid_rejected),
    ]
}

/// Runs every check with its own generator seeded from `cfg.seed` and the
/// check's position, so one check's draws never shift another's.
pub fn run_property_suite(cfg: &ExperimentConfig) -> Result<SuiteReport> {
    cfg.validate()?;
    let checks = checks()
        .into_iter()
        .enumerate()
        .map(|(k, check)| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(k as u64));
            let (measured, detail) = match (check.run)(&mut rng, cfg) {
                Ok(m) => m,
                Err(e) => (f64::INFINITY, format!("error: {e}")),
            };
            CheckResult {
                module: check.module,
                invariant: check.invariant,
                measured,
                tolerance: check.tolerance,
                passed: measured.is_finite() && measured <= check.tolerance,
                detail,
            }
        })
        .collect();
    Ok(SuiteReport { seed: cfg.seed, checks })
}
