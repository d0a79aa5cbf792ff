//! End-to-end runs behind the command-line subcommands. Grid points are
//! evaluated on the rayon pool and reported in grid order.

use std::f64::consts::PI;
use std::io::Write;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::config::{ExperimentConfig, Scenario, TGrid};
use crate::dynamics::Xi;
use crate::error::{Error, Result};
use crate::hamiltonian::{build_harmonic, CoherentLabel, HamiltonianModel, KerrPairModel};
use crate::oracle::{exact_diagonal_propagator, kerr_exact_purity_sum};
use crate::output::fmt17;
use crate::propagator::{exact_ho_propagator, propagate};
use crate::purity::{kerr_closed_form_at, kerr_x, linear_entropy, purity_determinant_form, purity_semiclassical};
use crate::shooting::{solve, BvpProblem};

/// Sizes the global worker pool; only the first call can take effect.
pub fn configure_threads(n: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

pub const HO_TOLERANCE: f64 = 1e-10;
pub const HO_GRID_POINTS: usize = 33;

/// `{0, +-0.5, +-1, +-0.5i}`.
pub fn ho_amplitudes() -> [Complex64; 7] {
    let c = Complex64::new;
    [c(0.0, 0.0), c(0.5, 0.0), c(-0.5, 0.0), c(1.0, 0.0), c(-1.0, 0.0), c(0.0, 0.5), c(0.0, -0.5)]
}

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(out)
}

fn opt17(x: Option<f64>) -> String {
    x.map(fmt17).unwrap_or_default()
}

#[derive(Clone, Debug)]
pub struct HoRow {
    pub z1: Complex64,
    pub z2: Complex64,
    pub duration: f64,
    pub xi: Xi,
    pub semiclassical: Complex64,
    pub exact: Complex64,
    pub error: f64,
}

#[derive(Clone, Debug)]
pub struct HoCheckReport {
    pub rows: Vec<HoRow>,
    pub max_error: f64,
    pub elapsed: Duration,
}

impl HoCheckReport {
    pub fn passed(&self) -> bool {
        self.max_error <= HO_TOLERANCE
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv_writer(out);
        w.write_record([
            "z1_re", "z1_im", "z2_re", "z2_im", "T", "xi", "K_semi_re", "K_semi_im", "K_exact_re", "K_exact_im",
            "abs_error",
        ])?;
        for r in &self.rows {
            w.write_record([
                fmt17(r.z1.re),
                fmt17(r.z1.im),
                fmt17(r.z2.re),
                fmt17(r.z2.im),
                fmt17(r.duration),
                format!("{}", r.xi.sign() as i32),
                fmt17(r.semiclassical.re),
                fmt17(r.semiclassical.im),
                fmt17(r.exact.re),
                fmt17(r.exact.im),
                fmt17(r.error),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary(&self) -> String {
        format!(
            "ho-check: {} points, max |K_semi - K_exact| = {:.3e} (limit {:.0e}) -> {}",
            self.rows.len(),
            self.max_error,
            HO_TOLERANCE,
            if self.passed() { "PASS" } else { "FAIL" }
        )
    }
}

/// Semiclassical against closed-form harmonic propagators over every
/// `(z1, z2)` pair of [`ho_amplitudes`], the T grid (default: 33 points with
/// `omega T` in `[0, 4 pi]`) and both `xi`.
pub fn run_ho_check(cfg: &ExperimentConfig) -> Result<HoCheckReport> {
    cfg.require_scenario(&[Scenario::Harmonic])?;
    cfg.validate()?;
    let clock = Instant::now();
    let model = build_harmonic(cfg.omega, cfg.hbar)?;
    let settings = cfg.shooting()?;
    let grid = cfg.t_grid(TGrid::new(0.0, 4.0 * PI / cfg.omega, HO_GRID_POINTS)?)?.values();
    let amps = ho_amplitudes();
    let mut tasks = Vec::with_capacity(amps.len() * amps.len() * grid.len() * 2);
    for &z1 in &amps {
        for &z2 in &amps {
            for &t in &grid {
                for xi in [Xi::Plus, Xi::Minus] {
                    tasks.push((z1, z2, t, xi));
                }
            }
        }
    }
    let rows = tasks
        .par_iter()
        .map(|&(z1, z2, t, xi)| -> Result<HoRow> {
            let l1 = CoherentLabel::new(&[z1], cfg.hbar)?;
            let l2 = CoherentLabel::new(&[z2], cfg.hbar)?;
            let semiclassical = propagate(&model, &l1, &l2, t, xi, &cfg.guesses, &settings)?.amplitude;
            let exact = exact_ho_propagator(cfg.omega, &l1, &l2, t, xi)?;
            Ok(HoRow {
                z1,
                z2,
                duration: t,
                xi,
                semiclassical,
                exact,
                error: (semiclassical - exact).norm(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let max_error = rows.iter().map(|r| r.error).fold(0.0, f64::max);
    Ok(HoCheckReport {
        rows,
        max_error,
        elapsed: clock.elapsed(),
    })
}

#[derive(Clone, Debug)]
pub struct KerrRow {
    pub duration: f64,
    /// `omega_x T`
    pub scaled_x: f64,
    /// `omega_y T`
    pub scaled_y: f64,
    pub x: f64,
    pub pipeline: Option<f64>,
    pub printed: f64,
    pub det_form: Option<f64>,
    pub exact: f64,
    pub imag_residue: Option<f64>,
    /// `ok` or the error kind that stopped the semiclassical evaluation.
    pub status: String,
}

impl KerrRow {
    pub fn s_lin(&self) -> Option<f64> {
        self.pipeline.map(linear_entropy)
    }

    /// `|P_pipeline - (1 - 2x)|`.
    pub fn short_time_deviation(&self) -> Option<f64> {
        self.pipeline.map(|p| (p - (1.0 - 2.0 * self.x)).abs())
    }

    /// `P_printed - P_pipeline`.
    pub fn divergence(&self) -> Option<f64> {
        self.pipeline.map(|p| self.printed - p)
    }
}

/// How far the printed closed form departs from the pipeline. Both share
/// `1 - 2x + 6x^2`; the gap opens at third order.
#[derive(Clone, Debug, PartialEq)]
pub struct DivergenceSummary {
    /// Largest `|P_printed - P_pipeline|` over the rows.
    pub max_gap: f64,
    pub max_gap_x: f64,
    /// `(P_printed - P_pipeline) / x^3` at the smallest `x >= SERIES_MIN_X`.
    pub cubic_coefficient: Option<f64>,
    /// `(P_det_form - P_pipeline) / x^2` at the smallest `x >= SERIES_MIN_X`.
    pub det_form_quadratic_coefficient: Option<f64>,
    /// Largest `|P_pipeline - 1/sqrt(1 + 4x)|`.
    pub pipeline_vs_reduced_form: f64,
}

/// Series coefficient of `x^3` in `P_printed - 1/sqrt(1 + 4x)`.
pub const PRINTED_CUBIC_GAP: f64 = -4.0;
/// Below this the cubic gap drowns in rounding.
pub const SERIES_MIN_X: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct KerrReport {
    pub rows: Vec<KerrRow>,
    pub divergence: DivergenceSummary,
}

impl KerrReport {
    pub fn failed_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.status != "ok").count()
    }

    pub fn passed(&self) -> bool {
        self.failed_rows() == 0
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv_writer(out);
        w.write_record([
            "T",
            "T_x",
            "T_y",
            "x",
            "P_pipeline",
            "P_printed",
            "P_det_form",
            "P_exact",
            "S_lin",
            "short_time_dev",
            "printed_minus_pipeline",
            "imag_residue",
            "status",
        ])?;
        for r in &self.rows {
            w.write_record([
                fmt17(r.duration),
                fmt17(r.scaled_x),
                fmt17(r.scaled_y),
                fmt17(r.x),
                opt17(r.pipeline),
                fmt17(r.printed),
                opt17(r.det_form),
                fmt17(r.exact),
                opt17(r.s_lin()),
                opt17(r.short_time_deviation()),
                opt17(r.divergence()),
                opt17(r.imag_residue),
                r.status.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary(&self) -> String {
        let d = &self.divergence;
        let coeff = |c: Option<f64>| c.map(|v| format!("{v:.6}")).unwrap_or_else(|| "n/a".into());
        format!(
            "kerr-purity: {} rows, {} failed\n\
             printed vs pipeline: max |gap| = {:.6e} at x = {:.6e}; gap/x^3 at smallest x = {} (series value {})\n\
             determinant form vs pipeline: gap/x^2 at smallest x = {}\n\
             pipeline vs 1/sqrt(1+4x): max |gap| = {:.3e}",
            self.rows.len(),
            self.failed_rows(),
            d.max_gap,
            d.max_gap_x,
            coeff(d.cubic_coefficient),
            PRINTED_CUBIC_GAP,
            coeff(d.det_form_quadratic_coefficient),
            d.pipeline_vs_reduced_form,
        )
    }
}

fn kerr_row(model: &HamiltonianModel, kerr: &KerrPairModel, cfg: &ExperimentConfig, t: f64) -> Result<KerrRow> {
    let z0 = &cfg.z0;
    let x = kerr_x(z0, kerr.gamma, t);
    let exact = kerr_exact_purity_sum(z0[0], z0[1], kerr.gamma, t, cfg.n_cut)?;
    let mut row = KerrRow {
        duration: t,
        scaled_x: kerr.omega_x * t,
        scaled_y: kerr.omega_y * t,
        x,
        pipeline: None,
        printed: kerr_closed_form_at(x).printed,
        det_form: None,
        exact,
        imag_residue: None,
        status: "ok".into(),
    };
    let label = CoherentLabel::new(z0, cfg.hbar)?;
    match purity_semiclassical(model, &label, t, &cfg.integrator()?) {
        Ok(b) => {
            row.pipeline = Some(b.p);
            row.imag_residue = Some(b.imag_residue);
            match purity_determinant_form(&b.tangent) {
                Ok(f) => row.det_form = Some(f.p_det),
                Err(e) => row.status = format!("det_form_{}", e.kind()),
            }
        }
        Err(e) => row.status = e.kind().to_string(),
    }
    Ok(row)
}

fn divergence_summary(rows: &[KerrRow]) -> DivergenceSummary {
    let mut max_gap = 0.0;
    let mut max_gap_x = 0.0;
    let mut reduced = 0.0f64;
    for r in rows {
        if let (Some(gap), Some(p)) = (r.divergence(), r.pipeline) {
            if gap.abs() > max_gap {
                max_gap = gap.abs();
                max_gap_x = r.x;
            }
            reduced = reduced.max((p - kerr_closed_form_at(r.x).pipeline).abs());
        }
    }
    let smallest = rows
        .iter()
        .filter(|r| r.x >= SERIES_MIN_X && r.pipeline.is_some())
        .min_by(|a, b| a.x.total_cmp(&b.x));
    DivergenceSummary {
        max_gap,
        max_gap_x,
        cubic_coefficient: smallest.and_then(|r| r.divergence().map(|g| g / r.x.powi(3))),
        det_form_quadratic_coefficient: smallest
            .and_then(|r| Some((r.det_form? - r.pipeline?) / r.x.powi(2))),
        pipeline_vs_reduced_form: reduced,
    }
}

/// Purity of mode `x` along the T grid (default: 41 points over one
/// recoherence period `2 pi / Gamma`).
pub fn run_kerr_purity(cfg: &ExperimentConfig) -> Result<KerrReport> {
    cfg.require_scenario(&[Scenario::Kerr])?;
    cfg.validate()?;
    if cfg.z0.len() != 2 {
        return Err(Error::Config(format!("z0 needs two amplitudes, got {}", cfg.z0.len())));
    }
    let kerr = cfg.kerr()?;
    let model = kerr.model();
    let period = if kerr.gamma != 0.0 { 2.0 * PI / kerr.gamma.abs() } else { 10.0 };
    let grid = cfg.t_grid(TGrid::new(0.0, period, 41)?)?.values();
    let rows = grid
        .par_iter()
        .map(|&t| kerr_row(&model, &kerr, cfg, t))
        .collect::<Result<Vec<_>>>()?;
    let divergence = divergence_summary(&rows);
    Ok(KerrReport { rows, divergence })
}

#[derive(Clone, Debug)]
pub struct PropagatorRow {
    pub duration: f64,
    pub semiclassical: Option<Complex64>,
    pub exact: Option<Complex64>,
    pub n_solutions: usize,
    /// Branch index of the leading contribution.
    pub branch_index: Option<i64>,
    pub status: String,
}

impl PropagatorRow {
    pub fn abs_error(&self) -> Option<f64> {
        Some((self.semiclassical? - self.exact?).norm())
    }
}

#[derive(Clone, Debug)]
pub struct PropagatorReport {
    pub rows: Vec<PropagatorRow>,
}

impl PropagatorReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.status == "ok")
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv_writer(out);
        w.write_record([
            "T", "K_semi_re", "K_semi_im", "K_exact_re", "K_exact_im", "abs_error", "solutions", "branch_index", "status",
        ])?;
        for r in &self.rows {
            w.write_record([
                fmt17(r.duration),
                opt17(r.semiclassical.map(|k| k.re)),
                opt17(r.semiclassical.map(|k| k.im)),
                opt17(r.exact.map(|k| k.re)),
                opt17(r.exact.map(|k| k.im)),
                opt17(r.abs_error()),
                r.n_solutions.to_string(),
                r.branch_index.map(|b| b.to_string()).unwrap_or_default(),
                r.status.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn default_amplitudes(given: &Option<Vec<Complex64>>, n_modes: usize) -> Result<Vec<Complex64>> {
    let z = given.clone().unwrap_or_else(|| vec![Complex64::new(0.5, 0.0); n_modes]);
    if z.len() != n_modes {
        return Err(Error::ModeMismatch { expected: n_modes, got: z.len() });
    }
    Ok(z)
}

/// `K_xi(z2*, z1, T)` along the T grid (default: 17 points over `2 pi / omega`),
/// with the exact value where a diagonal spectrum is known.
pub fn run_propagator(cfg: &ExperimentConfig) -> Result<PropagatorReport> {
    cfg.validate()?;
    let (model, kerr) = cfg.model(Scenario::Harmonic)?;
    let scenario = cfg.scenario.unwrap_or(Scenario::Harmonic);
    let n = model.n_modes();
    let l1 = CoherentLabel::new(&default_amplitudes(&cfg.z1, n)?, cfg.hbar)?;
    let l2 = CoherentLabel::new(&default_amplitudes(&cfg.z2, n)?, cfg.hbar)?;
    let reference = match scenario {
        Scenario::Kerr => cfg.omega_x,
        _ => cfg.omega,
    };
    let grid = cfg.t_grid(TGrid::new(0.0, 2.0 * PI / reference.abs().max(1e-12), 17)?)?.values();
    let settings = cfg.shooting()?;
    let exact_at = |t: f64| -> Result<Option<Complex64>> {
        match (scenario, &kerr) {
            (Scenario::Harmonic, _) => Ok(Some(exact_ho_propagator(cfg.omega, &l1, &l2, t, cfg.xi)?)),
            (Scenario::Kerr, Some(k)) => Ok(Some(exact_diagonal_propagator(
                |a, b| k.level(a, b),
                &l1,
                &l2,
                t,
                cfg.xi,
                cfg.n_cut,
            )?)),
            _ => Ok(None),
        }
    };
    let rows = grid
        .par_iter()
        .map(|&t| -> Result<PropagatorRow> {
            let exact = exact_at(t)?;
            Ok(match propagate(&model, &l1, &l2, t, cfg.xi, &cfg.guesses, &settings) {
                Ok(k) => PropagatorRow {
                    duration: t,
                    semiclassical: Some(k.amplitude),
                    exact,
                    n_solutions: k.contributions.len(),
                    branch_index: k.contributions.first().map(|c| c.branch_index),
                    status: "ok".into(),
                },
                Err(e) => PropagatorRow {
                    duration: t,
                    semiclassical: None,
                    exact,
                    n_solutions: 0,
                    branch_index: None,
                    status: e.kind().into(),
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PropagatorReport { rows })
}

#[derive(Clone, Debug)]
pub struct BvpRow {
    pub guess: Vec<Complex64>,
    pub free_end: Vec<Complex64>,
    pub residual: f64,
    pub evaluations: usize,
    pub newton_steps: usize,
    pub action: Complex64,
    pub correction: Complex64,
    /// Determinant of the shooting Jacobian at the solution.
    pub jacobian_det: Complex64,
}

#[derive(Clone, Debug)]
pub struct BvpReport {
    pub duration: f64,
    pub xi: Xi,
    pub solutions: Vec<BvpRow>,
}

impl BvpReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv_writer(out);
        let n = self.solutions.first().map_or(0, |s| s.free_end.len());
        let mut header = vec!["solution".to_string()];
        for prefix in ["guess", "free_end"] {
            for r in 0..n {
                header.push(format!("{prefix}{r}_re"));
                header.push(format!("{prefix}{r}_im"));
            }
        }
        header.extend(
            [
                "residual", "evaluations", "newton_steps", "S_re", "S_im", "G_re", "G_im", "det_jacobian_re",
                "det_jacobian_im",
            ]
            .map(String::from),
        );
        w.write_record(&header)?;
        for (k, s) in self.solutions.iter().enumerate() {
            let mut rec = vec![k.to_string()];
            for z in s.guess.iter().chain(&s.free_end) {
                rec.push(fmt17(z.re));
                rec.push(fmt17(z.im));
            }
            rec.extend([
                fmt17(s.residual),
                s.evaluations.to_string(),
                s.newton_steps.to_string(),
                fmt17(s.action.re),
                fmt17(s.action.im),
                fmt17(s.correction.re),
                fmt17(s.correction.im),
                fmt17(s.jacobian_det.re),
                fmt17(s.jacobian_det.im),
            ]);
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Solves the boundary-value problem at the first T of the grid.
pub fn run_bvp_solve(cfg: &ExperimentConfig) -> Result<BvpReport> {
    cfg.validate()?;
    let (model, _) = cfg.model(Scenario::Harmonic)?;
    let n = model.n_modes();
    let z1 = default_amplitudes(&cfg.z1, n)?;
    let z2_conj: Vec<Complex64> = default_amplitudes(&cfg.z2, n)?.iter().map(|z| z.conj()).collect();
    let t = cfg.t_grid(TGrid::new(1.0, 1.0, 1)?)?.start;
    let problem = BvpProblem::new(&model, &z1, &z2_conj, t, cfg.xi)?.with_guesses(cfg.guesses.clone());
    let block = problem.jacobian_block();
    let solutions = solve(&problem, &cfg.shooting()?)?
        .into_iter()
        .map(|s| BvpRow {
            jacobian_det: s.trajectory.tangent.block_det(block),
            action: s.trajectory.action,
            correction: s.trajectory.correction,
            guess: s.guess_used,
            free_end: s.free_end,
            residual: s.residual,
            evaluations: s.iterations,
            newton_steps: s.newton_steps,
        })
        .collect();
    Ok(BvpReport {
        duration: t,
        xi: cfg.xi,
        solutions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> ExperimentConfig {
        ExperimentConfig::parse(text).unwrap()
    }

    #[test]
    fn small_ho_grid_is_exact() {
        let report = run_ho_check(&cfg("t_start = 0\nt_stop = 3\nt_count = 3")).unwrap();
        assert_eq!(report.rows.len(), 49 * 3 * 2);
        assert!(report.passed(), "{}", report.summary());
        let zero = report.rows.iter().filter(|r| r.duration == 0.0).map(|r| r.error).fold(0.0, f64::max);
        assert!(zero < 1e-15);
    }

    #[test]
    fn ho_check_rejects_kerr_scenario() {
        assert!(matches!(run_ho_check(&cfg("scenario = kerr")), Err(Error::Config(_))));
    }

    #[test]
    fn kerr_rows_and_csv_are_deterministic() {
        let c = cfg("t_start = 0\nt_stop = 10\nt_count = 4\nlambda = 0.05");
        let a = run_kerr_purity(&c).unwrap();
        let b = run_kerr_purity(&c).unwrap();
        let (mut sa, mut sb) = (Vec::new(), Vec::new());
        a.write_csv(&mut sa).unwrap();
        b.write_csv(&mut sb).unwrap();
        assert_eq!(sa, sb);
        let text = String::from_utf8(sa).unwrap();
        assert!(text.starts_with("T,T_x,T_y,x,P_pipeline,P_printed"));
        assert_eq!(text.lines().count(), 5);
        assert!(a.passed());
        let first = &a.rows[0];
        assert_eq!(first.pipeline, Some(1.0));
        assert_eq!(first.exact, 1.0);
    }

    #[test]
    fn noninteracting_kerr_is_pure() {
        let report = run_kerr_purity(&cfg("lambda = 0\nt_start = 0\nt_stop = 10\nt_count = 5")).unwrap();
        for r in &report.rows {
            assert!((r.pipeline.unwrap() - 1.0).abs() <= 1e-12);
            assert!((r.exact - 1.0).abs() <= 1e-12);
            assert_eq!(r.printed, 1.0);
        }
    }

    #[test]
    fn recoherence_row_separates_exact_and_pipeline() {
        let report = run_kerr_purity(&cfg("t_count = 41")).unwrap();
        let last = report.rows.last().unwrap();
        assert!((last.exact - 1.0).abs() < 1e-8);
        assert!(last.pipeline.unwrap() < 1.0);
    }

    #[test]
    fn harmonic_propagator_rows_match_exact() {
        let report = run_propagator(&cfg("z1 = 0.5+0.5i\nz2 = -0.3\nt_count = 5")).unwrap();
        assert!(report.passed());
        for r in &report.rows {
            assert!(r.abs_error().unwrap() < 1e-10);
        }
    }

    #[test]
    fn bvp_solve_reports_every_solution() {
        let report = run_bvp_solve(&cfg("z1 = 0.5\nz2 = 0.5i\nt_start = 1.2\nguess = 1\nguess = -1")).unwrap();
        assert_eq!(report.solutions.len(), 1);
        assert!(report.solutions[0].residual <= 1e-10);
        let mut out = Vec::new();
        report.write_csv(&mut out).unwrap();
        assert!(String::from_utf8(out).unwrap().starts_with("solution,guess0_re,guess0_im,free_end0_re"));
    }
}
