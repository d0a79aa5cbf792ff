//! Newton shooting for the mixed two-point boundary conditions of the
//! coherent-state propagator.
//!
//! For `xi = +1` the start value `u(0) = z1` is fixed and the free `v(0)` is
//! adjusted until `v(T) = conj(z2)`, with Jacobian `M_vv`. For `xi = -1` the
//! roles swap: `v(0) = conj(z2)` is fixed and the free `u(0)` is adjusted until
//! `u(T) = z1`, with Jacobian `M_uu`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::dynamics::{evolve, Block, IntegratorSettings, TrajectoryRecord, Xi};
use crate::error::{Error, Result};
use crate::hamiltonian::{HamiltonianModel, PhasePoint};

/// Free-end values closer than this are the same solution.
pub const DEDUP_DISTANCE: f64 = 1e-8;
/// Below this `|det|` the shooting Jacobian counts as singular.
pub const FOCAL_THRESHOLD: f64 = 1e-14;
const MAX_HALVINGS: u32 = 20;

#[derive(Clone, Debug)]
pub struct BvpProblem<'a> {
    pub model: &'a HamiltonianModel,
    pub z1: Vec<Complex64>,
    /// `conj(z2)`.
    pub z2_conj: Vec<Complex64>,
    pub duration: f64,
    pub xi: Xi,
    /// Guesses for the free end; the default guess is always tried as well.
    pub initial_guesses: Vec<Vec<Complex64>>,
}

impl<'a> BvpProblem<'a> {
    pub fn new(
        model: &'a HamiltonianModel,
        z1: &[Complex64],
        z2_conj: &[Complex64],
        duration: f64,
        xi: Xi,
    ) -> Result<Self> {
        let n = model.n_modes();
        if z1.len() != n || z2_conj.len() != n {
            return Err(Error::ModeMismatch {
                expected: n,
                got: if z1.len() != n { z1.len() } else { z2_conj.len() },
            });
        }
        if !z1.iter().chain(z2_conj).all(|c| c.is_finite()) {
            return Err(Error::InvalidParameter("boundary data must be finite".into()));
        }
        if !(duration >= 0.0 && duration.is_finite()) {
            return Err(Error::InvalidParameter(format!("duration must be >= 0, got {duration}")));
        }
        Ok(BvpProblem {
            model,
            z1: z1.to_vec(),
            z2_conj: z2_conj.to_vec(),
            duration,
            xi,
            initial_guesses: Vec::new(),
        })
    }

    pub fn with_guesses(mut self, guesses: Vec<Vec<Complex64>>) -> Self {
        self.initial_guesses = guesses;
        self
    }

    /// Same boundary data at another duration.
    pub fn at_duration(&self, duration: f64) -> Self {
        BvpProblem {
            duration,
            ..self.clone()
        }
    }

    fn start_point(&self, free: &[Complex64]) -> Result<PhasePoint> {
        match self.xi {
            Xi::Plus => PhasePoint::new(&self.z1, free),
            Xi::Minus => PhasePoint::new(free, &self.z2_conj),
        }
    }

    fn mismatch(&self, rec: &TrajectoryRecord) -> Vec<Complex64> {
        let end = rec.end();
        match self.xi {
            Xi::Plus => end.v().iter().zip(&self.z2_conj).map(|(a, b)| a - b).collect(),
            Xi::Minus => end.u().iter().zip(&self.z1).map(|(a, b)| a - b).collect(),
        }
    }

    /// Tangent block that is the Jacobian of the shooting map.
    pub fn jacobian_block(&self) -> Block {
        match self.xi {
            Xi::Plus => Block::VV,
            Xi::Minus => Block::UU,
        }
    }
}

/// Free-end guess: `conj(z2)` for `xi = +1`, `z1` for `xi = -1`.
pub fn default_guess(problem: &BvpProblem) -> Vec<Complex64> {
    match problem.xi {
        Xi::Plus => problem.z2_conj.clone(),
        Xi::Minus => problem.z1.clone(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShootingSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub integrator: IntegratorSettings,
}

impl Default for ShootingSettings {
    fn default() -> Self {
        ShootingSettings {
            tol: 1e-10,
            max_iter: 50,
            integrator: IntegratorSettings::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BvpSolution {
    pub trajectory: TrajectoryRecord,
    /// Euclidean norm of the boundary mismatch at `t_xi = T`.
    pub residual: f64,
    /// Number of trajectory evaluations, including the one at the guess.
    pub iterations: usize,
    pub newton_steps: usize,
    pub guess_used: Vec<Complex64>,
    /// Converged value of the free end at `t_xi = 0`.
    pub free_end: Vec<Complex64>,
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

fn newton(
    problem: &BvpProblem,
    guess: &[Complex64],
    settings: &ShootingSettings,
    integrator: &IntegratorSettings,
) -> Result<BvpSolution> {
    let n = problem.model.n_modes();
    let run = |free: &[Complex64]| -> Result<(TrajectoryRecord, Vec<Complex64>)> {
        let start = problem.start_point(free)?;
        let rec = evolve(problem.model, &start, problem.duration, problem.xi, integrator)?;
        let f = problem.mismatch(&rec);
        Ok((rec, f))
    };
    let mut free = guess.to_vec();
    let (mut rec, mut f) = run(&free)?;
    let mut residual = norm(&f);
    let mut evaluations = 1;
    let mut steps = 0;
    while residual > settings.tol {
        if steps >= settings.max_iter {
            return Err(Error::NoConvergence { best_residual: residual });
        }
        let block = rec.tangent.block(problem.jacobian_block());
        let det = block.determinant();
        if det.norm() < FOCAL_THRESHOLD {
            return Err(Error::FocalPoint { det: det.norm() });
        }
        let rhs = DMatrix::from_column_slice(n, 1, &f);
        let delta = block
            .lu()
            .solve(&rhs)
            .ok_or(Error::FocalPoint { det: det.norm() })?;
        steps += 1;
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let trial: Vec<Complex64> = free.iter().enumerate().map(|(r, w)| w - delta[r] * scale).collect();
            evaluations += 1;
            match run(&trial) {
                Ok((trial_rec, trial_f)) => {
                    let trial_res = norm(&trial_f);
                    if trial_res < residual {
                        free = trial;
                        rec = trial_rec;
                        f = trial_f;
                        residual = trial_res;
                        accepted = true;
                        break;
                    }
                }
                Err(Error::Escape { .. } | Error::NonFinite { .. }) => {}
                Err(e) => return Err(e),
            }
            scale *= 0.5;
        }
        if !accepted {
            return Err(Error::NoConvergence { best_residual: residual });
        }
    }
    Ok(BvpSolution {
        trajectory: rec,
        residual,
        iterations: evaluations,
        newton_steps: steps,
        guess_used: guess.to_vec(),
        free_end: free,
    })
}

fn lexicographic(a: &[Complex64], b: &[Complex64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        let o = x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im));
        if o.is_ne() {
            return o;
        }
    }
    std::cmp::Ordering::Equal
}

/// Multi-start Newton shooting. Returns every distinct converged solution,
/// sorted by residual and then by guess.
pub fn solve(problem: &BvpProblem, settings: &ShootingSettings) -> Result<Vec<BvpSolution>> {
    if !(settings.tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tol must be positive, got {}", settings.tol)));
    }
    let n = problem.model.n_modes();
    let mut guesses = problem.initial_guesses.clone();
    if guesses.iter().any(|g| g.len() != n) {
        return Err(Error::InvalidParameter(format!("every guess needs {n} components")));
    }
    let fallback = default_guess(problem);
    if !guesses.contains(&fallback) {
        guesses.push(fallback.clone());
    }
    // one grid for every guess keeps the shooting map identical across starts
    let integrator = settings
        .integrator
        .pinned(problem.model, &problem.start_point(&fallback)?, problem.duration);

    let outcomes: Vec<Result<BvpSolution>> = guesses
        .par_iter()
        .map(|g| newton(problem, g, settings, &integrator))
        .collect();

    let mut found = Vec::new();
    let mut best_residual = f64::INFINITY;
    let mut focal = None;
    for outcome in outcomes {
        match outcome {
            Ok(s) => found.push(s),
            Err(Error::NoConvergence { best_residual: r }) => best_residual = best_residual.min(r),
            Err(e @ Error::FocalPoint { .. }) => focal = Some(e),
            Err(Error::Escape { .. } | Error::NonFinite { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    if found.is_empty() {
        return Err(match focal {
            Some(e) if best_residual.is_infinite() => e,
            _ => Error::NoConvergence { best_residual },
        });
    }
    found.sort_by(|a, b| {
        a.residual
            .total_cmp(&b.residual)
            .then_with(|| lexicographic(&a.guess_used, &b.guess_used))
    });
    let mut distinct: Vec<BvpSolution> = Vec::new();
    for s in found {
        let duplicate = distinct.iter().any(|d| {
            let gap: Vec<Complex64> = d.free_end.iter().zip(&s.free_end).map(|(a, b)| a - b).collect();
            norm(&gap) < DEDUP_DISTANCE
        });
        if !duplicate {
            distinct.push(s);
        }
    }
    Ok(distinct)
}

/// Boundary tolerance used when the action is differentiated numerically.
const FD_TOL: f64 = 1e-13;

fn fd_settings(problem: &BvpProblem, solution: &BvpSolution, settings: &ShootingSettings) -> Result<ShootingSettings> {
    let start = problem.start_point(&solution.free_end)?;
    Ok(ShootingSettings {
        tol: settings.tol.min(FD_TOL),
        max_iter: settings.max_iter.max(50),
        integrator: settings.integrator.pinned(problem.model, &start, problem.duration),
    })
}

fn resolve_near(problem: BvpProblem, near: &[Complex64], settings: &ShootingSettings) -> Result<BvpSolution> {
    let problem = problem.with_guesses(vec![near.to_vec()]);
    let solutions = solve(&problem, settings)?;
    // the branch continued from `near`, not whatever the fallback found
    solutions
        .into_iter()
        .min_by(|a, b| {
            let da: f64 = a.free_end.iter().zip(near).map(|(x, y)| (x - y).norm()).sum();
            let db: f64 = b.free_end.iter().zip(near).map(|(x, y)| (x - y).norm()).sum();
            da.total_cmp(&db)
        })
        .ok_or(Error::NoConvergence { best_residual: f64::INFINITY })
}

/// Residuals of the four action-derivative identities, each relative to
/// `max(1, |expected|)`.
#[derive(Clone, Debug, PartialEq)]
pub struct IdentityReport {
    /// Endpoint conjugate to `z2*` against `(i/hbar) dS/dz2*`.
    pub d_z2_conj: f64,
    /// Endpoint conjugate to `z1` against `(i/hbar) dS/dz1`.
    pub d_z1: f64,
    pub worst: f64,
}

/// Checks `u'' = (i/hbar) dS_+/dz2*`, `v' = (i/hbar) dS_+/dz1` (and for
/// `xi = -1`: `u' = (i/hbar) dS_-/dz2*`, `v'' = (i/hbar) dS_-/dz1`) by central
/// differences of the action with step `1e-6`, re-solving the boundary value
/// problem for every perturbed argument.
pub fn action_derivative_identities(
    problem: &BvpProblem,
    solution: &BvpSolution,
    settings: &ShootingSettings,
) -> Result<IdentityReport> {
    const STEP: f64 = 1e-6;
    let fd = fd_settings(problem, solution, settings)?;
    let n = problem.model.n_modes();
    let i_over_hbar = Complex64::new(0.0, 1.0 / problem.model.hbar());
    let rec = &solution.trajectory;
    let (conj_z2, conj_z1) = match problem.xi {
        Xi::Plus => (rec.end().u().to_vec(), rec.start().v().to_vec()),
        Xi::Minus => (rec.start().u().to_vec(), rec.end().v().to_vec()),
    };
    let action_at = |z1: &[Complex64], z2c: &[Complex64]| -> Result<Complex64> {
        let p = BvpProblem::new(problem.model, z1, z2c, problem.duration, problem.xi)?;
        Ok(resolve_near(p, &solution.free_end, &fd)?.trajectory.action)
    };
    let mut d_z2 = 0.0f64;
    let mut d_z1 = 0.0f64;
    for r in 0..n {
        let shift = |v: &[Complex64], h: f64| -> Vec<Complex64> {
            let mut out = v.to_vec();
            out[r] += h;
            out
        };
        let ds_dz2 = (action_at(&problem.z1, &shift(&problem.z2_conj, STEP))?
            - action_at(&problem.z1, &shift(&problem.z2_conj, -STEP))?)
            / (2.0 * STEP);
        let ds_dz1 = (action_at(&shift(&problem.z1, STEP), &problem.z2_conj)?
            - action_at(&shift(&problem.z1, -STEP), &problem.z2_conj)?)
            / (2.0 * STEP);
        d_z2 = d_z2.max((i_over_hbar * ds_dz2 - conj_z2[r]).norm() / conj_z2[r].norm().max(1.0));
        d_z1 = d_z1.max((i_over_hbar * ds_dz1 - conj_z1[r]).norm() / conj_z1[r].norm().max(1.0));
    }
    Ok(IdentityReport {
        d_z2_conj: d_z2,
        d_z1,
        worst: d_z2.max(d_z1),
    })
}

/// Relative gap between `det[(i/hbar) d2S/dz2* dz1]`, obtained by differencing
/// the conjugate endpoint over re-solved problems, and `1/det M_vv`
/// (`1/det M_uu` for `xi = -1`).
pub fn prefactor_consistency(
    problem: &BvpProblem,
    solution: &BvpSolution,
    settings: &ShootingSettings,
) -> Result<f64> {
    const STEP: f64 = 1e-6;
    let fd = fd_settings(problem, solution, settings)?;
    let n = problem.model.n_modes();
    // (i/hbar) dS/dz1 is the free-end value, so its z2* derivative is the mixed Hessian
    let mut mixed = DMatrix::<Complex64>::zeros(n, n);
    for s in 0..n {
        let free_at = |h: f64| -> Result<Vec<Complex64>> {
            let (mut z1, mut z2c) = (problem.z1.clone(), problem.z2_conj.clone());
            match problem.xi {
                Xi::Plus => z2c[s] += h,
                Xi::Minus => z1[s] += h,
            }
            let p = BvpProblem::new(problem.model, &z1, &z2c, problem.duration, problem.xi)?;
            Ok(resolve_near(p, &solution.free_end, &fd)?.free_end)
        };
        let plus = free_at(STEP)?;
        let minus = free_at(-STEP)?;
        for r in 0..n {
            mixed[(r, s)] = (plus[r] - minus[r]) / (2.0 * STEP);
        }
    }
    let expected = 1.0 / solution.trajectory.tangent.block_det(problem.jacobian_block());
    let got = mixed.determinant();
    Ok((got - expected).norm() / expected.norm())
}

/// `|dS/dT + xi H| / (1 + |H|)` from re-solving at `T +- delta` with the same
/// boundary data (one-sided second-order difference when `T < delta`).
pub fn action_time_derivative_check(
    record: &TrajectoryRecord,
    model: &HamiltonianModel,
    delta: f64,
) -> Result<f64> {
    let (z1, z2c, free) = match record.xi {
        Xi::Plus => (record.start().u().to_vec(), record.end().v().to_vec(), record.start().v().to_vec()),
        Xi::Minus => (record.end().u().to_vec(), record.start().v().to_vec(), record.start().u().to_vec()),
    };
    let t = record.duration;
    let base = BvpProblem::new(model, &z1, &z2c, t, record.xi)?;
    let start = record.start();
    let span = t + 2.0 * delta;
    let steps = match IntegratorSettings::default().pinned(model, &start, span).control {
        crate::dynamics::StepControl::Fixed(k) => k,
        _ => unreachable!(),
    };
    // the step size is held fixed so the truncation error varies smoothly with T
    let action_at = |duration: f64| -> Result<Complex64> {
        let count = ((steps as f64 * duration / span).round() as usize).max(1);
        let settings = ShootingSettings {
            tol: FD_TOL,
            max_iter: 50,
            integrator: IntegratorSettings::fixed(count),
        };
        Ok(resolve_near(base.at_duration(duration), &free, &settings)?.trajectory.action)
    };
    let derivative = if t >= delta {
        (action_at(t + delta)? - action_at(t - delta)?) / (2.0 * delta)
    } else {
        let s0 = action_at(t)?;
        (-3.0 * s0 + 4.0 * action_at(t + delta)? - action_at(t + 2.0 * delta)?) / (2.0 * delta)
    };
    let energy = record.energy;
    Ok((derivative + energy * record.xi.sign()).norm() / (1.0 + energy.norm()))
}

/// Largest entry gap, relative to `max(1, |M|)`, between central differences
/// of the boundary mismatch in the free end (step `1e-6`, same grid) and the
/// tangent block used as the Newton Jacobian.
pub fn shooting_jacobian_check(
    problem: &BvpProblem,
    solution: &BvpSolution,
    settings: &ShootingSettings,
) -> Result<f64> {
    const STEP: f64 = 1e-6;
    let fd = fd_settings(problem, solution, settings)?;
    let n = problem.model.n_modes();
    let mismatch_at = |free: &[Complex64]| -> Result<Vec<Complex64>> {
        let rec = evolve(problem.model, &problem.start_point(free)?, problem.duration, problem.xi, &fd.integrator)?;
        Ok(problem.mismatch(&rec))
    };
    let rec = evolve(
        problem.model,
        &problem.start_point(&solution.free_end)?,
        problem.duration,
        problem.xi,
        &fd.integrator,
    )?;
    let block = rec.tangent.block(problem.jacobian_block());
    let scale = block.iter().map(|c| c.norm()).fold(1.0, f64::max);
    let mut worst: f64 = 0.0;
    for s in 0..n {
        let shifted = |h: f64| {
            let mut f = solution.free_end.clone();
            f[s] += h;
            f
        };
        let plus = mismatch_at(&shifted(STEP))?;
        let minus = mismatch_at(&shifted(-STEP))?;
        for r in 0..n {
            let column = (plus[r] - minus[r]) / (2.0 * STEP);
            worst = worst.max((column - block[(r, s)]).norm() / scale);
        }
    }
    Ok(worst)
}

/// Distance moved by the free end when Newton restarts from a converged
/// solution.
pub fn fixed_point_check(problem: &BvpProblem, solution: &BvpSolution, settings: &ShootingSettings) -> Result<f64> {
    let integrator = settings
        .integrator
        .pinned(problem.model, &problem.start_point(&default_guess(problem))?, problem.duration);
    let again = newton(problem, &solution.free_end, settings, &integrator)?;
    let gap: Vec<Complex64> = again.free_end.iter().zip(&solution.free_end).map(|(a, b)| a - b).collect();
    Ok(norm(&gap))
}
