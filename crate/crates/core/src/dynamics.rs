//! Complexified Hamilton equations on the generalized-time axis.
//!
//! Every record lives on `t_xi in [0, T]`, where the equations of motion
//! `du/dt_xi = -(i/hbar) dH/dv`, `dv/dt_xi = (i/hbar) dH/du` take the same form
//! for both values of `xi`. The tangent matrix, the action integral and the
//! `G` integral are carried as extra components of the RK4 state, so all of
//! them share one grid and one set of derivative evaluations (the RK4
//! weights reduce to Simpson's rule on the quadrature components).

use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hamiltonian::{HamiltonianModel, PhasePoint, MAX_MODES};
use crate::linalg::{det2, Mat2};
use crate::output::fmt17;

const DIM: usize = 2 * MAX_MODES;
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };
const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Selects the propagator (`Plus`) or its complex conjugate (`Minus`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Xi {
    Plus,
    Minus,
}

impl Xi {
    pub fn sign(self) -> f64 {
        match self {
            Xi::Plus => 1.0,
            Xi::Minus => -1.0,
        }
    }

    pub fn from_sign(s: i32) -> Result<Self> {
        match s {
            1 => Ok(Xi::Plus),
            -1 => Ok(Xi::Minus),
            _ => Err(Error::InvalidParameter(format!("xi must be +1 or -1, got {s}"))),
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Xi::Plus => Xi::Minus,
            Xi::Minus => Xi::Plus,
        }
    }

    /// Generalized time `t_xi = xi t + (1 - xi) T/2`; an involution.
    pub fn generalized_time(self, t: f64, duration: f64) -> f64 {
        match self {
            Xi::Plus => t,
            Xi::Minus => duration - t,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Block {
    UU,
    UV,
    VU,
    VV,
}

/// Linearised flow `(du'', dv'') = M (du', dv')`, stored as a `2n x 2n`
/// matrix ordered `(u_x, u_y, v_x, v_y)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TangentMatrix {
    n: usize,
    m: [[Complex64; DIM]; DIM],
}

impl TangentMatrix {
    pub fn identity(n_modes: usize) -> Self {
        let mut m = [[ZERO; DIM]; DIM];
        for (k, row) in m.iter_mut().enumerate().take(2 * n_modes) {
            row[k] = ONE;
        }
        TangentMatrix { n: n_modes, m }
    }

    pub fn from_full(full: &DMatrix<Complex64>) -> Result<Self> {
        let d = full.nrows();
        if d != full.ncols() || !(d == 2 || d == 4) {
            return Err(Error::InvalidParameter(format!(
                "tangent matrix must be 2x2 or 4x4, got {}x{}",
                full.nrows(),
                full.ncols()
            )));
        }
        let mut m = [[ZERO; DIM]; DIM];
        for (i, row) in m.iter_mut().enumerate().take(d) {
            for (j, e) in row.iter_mut().enumerate().take(d) {
                *e = full[(i, j)];
            }
        }
        Ok(TangentMatrix { n: d / 2, m })
    }

    pub fn from_blocks(
        uu: &DMatrix<Complex64>,
        uv: &DMatrix<Complex64>,
        vu: &DMatrix<Complex64>,
        vv: &DMatrix<Complex64>,
    ) -> Result<Self> {
        let n = uu.nrows();
        for b in [uu, uv, vu, vv] {
            if b.nrows() != n || b.ncols() != n {
                return Err(Error::InvalidParameter("tangent blocks must share one square size".into()));
            }
        }
        let mut full = DMatrix::zeros(2 * n, 2 * n);
        full.view_mut((0, 0), (n, n)).copy_from(uu);
        full.view_mut((0, n), (n, n)).copy_from(uv);
        full.view_mut((n, 0), (n, n)).copy_from(vu);
        full.view_mut((n, n), (n, n)).copy_from(vv);
        Self::from_full(&full)
    }

    pub fn n_modes(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        assert!(i < 2 * self.n && j < 2 * self.n, "tangent index out of range");
        self.m[i][j]
    }

    pub fn full(&self) -> DMatrix<Complex64> {
        let d = 2 * self.n;
        DMatrix::from_fn(d, d, |i, j| self.m[i][j])
    }

    fn offsets(&self, b: Block) -> (usize, usize) {
        let n = self.n;
        match b {
            Block::UU => (0, 0),
            Block::UV => (0, n),
            Block::VU => (n, 0),
            Block::VV => (n, n),
        }
    }

    pub fn block(&self, b: Block) -> DMatrix<Complex64> {
        let (r0, c0) = self.offsets(b);
        DMatrix::from_fn(self.n, self.n, |i, j| self.m[r0 + i][c0 + j])
    }

    /// A block of a two-mode tangent matrix.
    pub fn block2(&self, b: Block) -> Mat2 {
        assert_eq!(self.n, 2, "block2 needs a two-mode tangent matrix");
        let (r0, c0) = self.offsets(b);
        Mat2::new(
            self.m[r0][c0],
            self.m[r0][c0 + 1],
            self.m[r0 + 1][c0],
            self.m[r0 + 1][c0 + 1],
        )
    }

    pub fn block_det(&self, b: Block) -> Complex64 {
        let (r0, c0) = self.offsets(b);
        match self.n {
            1 => self.m[r0][c0],
            _ => det2(&self.block2(b)),
        }
    }

    pub fn det(&self) -> Complex64 {
        self.full().determinant()
    }

    pub fn mul(&self, other: &TangentMatrix) -> TangentMatrix {
        assert_eq!(self.n, other.n);
        let d = 2 * self.n;
        let mut m = [[ZERO; DIM]; DIM];
        for (i, row) in m.iter_mut().enumerate().take(d) {
            for (j, e) in row.iter_mut().enumerate().take(d) {
                *e = (0..d).map(|k| self.m[i][k] * other.m[k][j]).sum();
            }
        }
        TangentMatrix { n: self.n, m }
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        let d = 2 * self.n;
        self.m[..d]
            .iter()
            .flat_map(|row| row[..d].iter())
            .map(|c| c.norm())
            .fold(0.0, f64::max)
    }
}

/// Default bound on `nu * h` for [`StepControl::Auto`].
pub const DEFAULT_MAX_PHASE_STEP: f64 = 0.003;

/// How the integration grid is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepControl {
    /// Exactly this many RK4 steps.
    Fixed(usize),
    /// Fixed RK4 steps with `nu * h <= max_phase_step`, where `nu` is the
    /// frequency scale of the linearised flow at the start point.
    Auto { max_phase_step: f64 },
    /// RK4 with step-doubling error control.
    Adaptive { tol: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegratorSettings {
    pub control: StepControl,
    pub escape_bound: f64,
    pub max_steps: usize,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        IntegratorSettings {
            control: StepControl::Auto { max_phase_step: DEFAULT_MAX_PHASE_STEP },
            escape_bound: 1e6,
            max_steps: 10_000_000,
        }
    }
}

impl IntegratorSettings {
    pub fn fixed(steps: usize) -> Self {
        IntegratorSettings {
            control: StepControl::Fixed(steps),
            ..Default::default()
        }
    }

    pub fn adaptive(tol: f64) -> Self {
        IntegratorSettings {
            control: StepControl::Adaptive { tol },
            ..Default::default()
        }
    }

    /// Replaces `Auto` by the `Fixed` step count it would use for this start
    /// point, so that nearby trajectories can share one grid.
    pub fn pinned(&self, model: &HamiltonianModel, start: &PhasePoint, duration: f64) -> Self {
        match self.control {
            StepControl::Auto { max_phase_step } => {
                let nu = model.frequency_scale(start);
                let steps = ((nu * duration / max_phase_step).ceil() as usize).max(1);
                IntegratorSettings {
                    control: StepControl::Fixed(steps),
                    ..*self
                }
            }
            _ => *self,
        }
    }

    /// Same control with the step count (or tolerance) refined by `factor`.
    pub fn refined(&self, factor: usize) -> Self {
        let control = match self.control {
            StepControl::Fixed(n) => StepControl::Fixed(n * factor),
            StepControl::Auto { max_phase_step } => StepControl::Auto {
                max_phase_step: max_phase_step / factor as f64,
            },
            StepControl::Adaptive { tol } => StepControl::Adaptive {
                tol: tol / (factor as f64).powi(4),
            },
        };
        IntegratorSettings { control, ..*self }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub point: PhasePoint,
}

/// A propagated trajectory on the generalized-time axis.
#[derive(Clone, Debug)]
pub struct TrajectoryRecord {
    pub xi: Xi,
    pub duration: f64,
    pub samples: Vec<Sample>,
    /// Tangent matrix at every sample.
    pub tangents: Vec<TangentMatrix>,
    /// `H` at the start point.
    pub energy: Complex64,
    /// `S_xi`, including the boundary term.
    pub action: Complex64,
    /// `Lambda_xi = (i hbar / 2)(u'' v'' + u' v')`.
    pub boundary_term: Complex64,
    /// `G_xi`.
    pub correction: Complex64,
    /// Tangent matrix at `t_xi = T`.
    pub tangent: TangentMatrix,
    pub step_count: usize,
}

impl TrajectoryRecord {
    pub fn n_modes(&self) -> usize {
        self.samples[0].point.n_modes()
    }

    pub fn start(&self) -> PhasePoint {
        self.samples[0].point
    }

    pub fn end(&self) -> PhasePoint {
        self.samples[self.samples.len() - 1].point
    }

    /// Samples on the physical time axis, in increasing physical time.
    pub fn physical_samples(&self) -> Vec<Sample> {
        let mut out: Vec<Sample> = self
            .samples
            .iter()
            .map(|s| Sample {
                t: self.xi.generalized_time(s.t, self.duration),
                point: s.point,
            })
            .collect();
        if self.xi == Xi::Minus {
            out.reverse();
        }
        out
    }

    /// `max_t |H(t) - H(0)| / (1 + |H(0)|)`.
    pub fn energy_drift(&self, model: &HamiltonianModel) -> f64 {
        self.samples
            .iter()
            .map(|s| (model.value_unchecked(&s.point) - self.energy).norm())
            .fold(0.0, f64::max)
            / (1.0 + self.energy.norm())
    }

    /// `max_t |det M(t) - 1|`.
    pub fn det_deviation(&self) -> f64 {
        self.tangents
            .iter()
            .map(|m| (m.det() - 1.0).norm())
            .fold(0.0, f64::max)
    }

    /// `max_t max_r |v_r(t) - conj(u_r(t))|`.
    pub fn reality_defect(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.point.reality_defect())
            .fold(0.0, f64::max)
    }

    /// Writes `t, Re u_x, Im u_x, [Re u_y, Im u_y,] Re v_x, Im v_x, ...`
    /// on the physical time axis.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let n = self.n_modes();
        let names = ["x", "y"];
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        for letter in ["u", "v"] {
            for name in names.iter().take(n) {
                header.push(format!("re_{letter}_{name}"));
                header.push(format!("im_{letter}_{name}"));
            }
        }
        w.write_record(&header)?;
        for s in self.physical_samples() {
            let mut row = vec![fmt17(s.t)];
            for c in s.point.u().iter().chain(s.point.v()) {
                row.push(fmt17(c.re));
                row.push(fmt17(c.im));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Full integration state over `D = 2n` phase-space components: phase point,
/// tangent matrix and the two quadrature accumulators.
#[derive(Clone, Copy)]
struct State<const D: usize> {
    z: [Complex64; D],
    m: [[Complex64; D]; D],
    action: Complex64,
    mixed: Complex64,
}

impl<const D: usize> State<D> {
    const N: usize = D / 2;

    fn axpy(&self, h: f64, k: &Self) -> Self {
        let mut out = *self;
        for i in 0..D {
            out.z[i] += k.z[i] * h;
            for j in 0..D {
                out.m[i][j] += k.m[i][j] * h;
            }
        }
        out.action += k.action * h;
        out.mixed += k.mixed * h;
        out
    }

    fn point(&self) -> PhasePoint {
        let mut u = [ZERO; MAX_MODES];
        let mut v = [ZERO; MAX_MODES];
        u[..Self::N].copy_from_slice(&self.z[..Self::N]);
        v[..Self::N].copy_from_slice(&self.z[Self::N..]);
        PhasePoint::from_arrays(Self::N, u, v)
    }

    fn tangent(&self) -> TangentMatrix {
        let mut m = [[ZERO; DIM]; DIM];
        for i in 0..D {
            m[i][..D].copy_from_slice(&self.m[i]);
        }
        TangentMatrix { n: Self::N, m }
    }

    fn max_abs(&self) -> f64 {
        self.z.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    fn tangent_scale(&self) -> f64 {
        self.m.iter().flatten().map(|c| c.norm()).fold(0.0, f64::max)
    }

    fn distance(&self, other: &Self) -> f64 {
        let mut e: f64 = 0.0;
        for i in 0..D {
            e = e.max((self.z[i] - other.z[i]).norm());
            for j in 0..D {
                e = e.max((self.m[i][j] - other.m[i][j]).norm());
            }
        }
        e
    }

    fn is_finite(&self) -> bool {
        self.z.iter().all(|c| c.is_finite())
            && self.m.iter().flatten().all(|c| c.is_finite())
            && self.action.is_finite()
    }
}

struct Flow<'a> {
    model: &'a HamiltonianModel,
    /// `+1` integrates along `t_xi`; `-1` runs the same equations backwards.
    direction: f64,
}

impl Flow<'_> {
    fn rates<const D: usize>(&self, s: &State<D>) -> State<D> {
        let n = State::<D>::N;
        let der = self.model.derivatives_unchecked(&s.point());
        let k = I * (self.direction / self.model.hbar());
        let mut out = State {
            z: [ZERO; D],
            m: [[ZERO; D]; D],
            action: ZERO,
            mixed: ZERO,
        };
        // generator of the variational system
        let mut jac = [[ZERO; D]; D];
        for r in 0..n {
            out.z[r] = -k * der.grad.dv[r];
            out.z[n + r] = k * der.grad.du[r];
            for q in 0..n {
                jac[r][q] = -k * der.hess.uv[q][r];
                jac[r][n + q] = -k * der.hess.vv[r][q];
                jac[n + r][q] = k * der.hess.uu[r][q];
                jac[n + r][n + q] = k * der.hess.uv[r][q];
            }
        }
        for i in 0..D {
            for j in 0..D {
                let mut acc = ZERO;
                for q in 0..D {
                    acc += jac[i][q] * s.m[q][j];
                }
                out.m[i][j] = acc;
            }
        }
        let half_ih = I * (0.5 * self.model.hbar());
        let mut kinetic = ZERO;
        let mut mixed = ZERO;
        for r in 0..n {
            kinetic += out.z[r] * s.z[n + r] - s.z[r] * out.z[n + r];
            mixed += der.hess.uv[r][r];
        }
        // the quadratures are only read back for forward integration
        out.action = half_ih * kinetic - der.value;
        out.mixed = mixed;
        out
    }

    fn rk4<const D: usize>(&self, s: &State<D>, t: f64, h: f64) -> Result<State<D>> {
        let k1 = self.rates(s);
        let k2 = self.rates(&s.axpy(h / 2.0, &k1));
        let k3 = self.rates(&s.axpy(h / 2.0, &k2));
        let k4 = self.rates(&s.axpy(h, &k3));
        let mut out = *s;
        let w = h / 6.0;
        for i in 0..D {
            out.z[i] += (k1.z[i] + (k2.z[i] + k3.z[i]) * 2.0 + k4.z[i]) * w;
            for j in 0..D {
                out.m[i][j] += (k1.m[i][j] + (k2.m[i][j] + k3.m[i][j]) * 2.0 + k4.m[i][j]) * w;
            }
        }
        out.action += (k1.action + (k2.action + k3.action) * 2.0 + k4.action) * w;
        out.mixed += (k1.mixed + (k2.mixed + k3.mixed) * 2.0 + k4.mixed) * w;
        // a non-finite rate anywhere in the step propagates into the result
        if !out.is_finite() {
            return Err(Error::NonFinite { t });
        }
        Ok(out)
    }
}

struct RawPath {
    samples: Vec<Sample>,
    tangents: Vec<TangentMatrix>,
    action_integral: Complex64,
    mixed_integral: Complex64,
    steps: usize,
}

fn integrate(
    model: &HamiltonianModel,
    start: &PhasePoint,
    duration: f64,
    settings: &IntegratorSettings,
    direction: f64,
) -> Result<RawPath> {
    if start.n_modes() != model.n_modes() {
        return Err(Error::ModeMismatch {
            expected: model.n_modes(),
            got: start.n_modes(),
        });
    }
    if !(duration >= 0.0 && duration.is_finite()) {
        return Err(Error::InvalidParameter(format!("duration must be >= 0, got {duration}")));
    }
    if !start.is_finite() {
        return Err(Error::InvalidParameter("start point is not finite".into()));
    }
    match model.n_modes() {
        1 => integrate_in::<2>(model, start, duration, settings, direction),
        _ => integrate_in::<4>(model, start, duration, settings, direction),
    }
}

fn integrate_in<const D: usize>(
    model: &HamiltonianModel,
    start: &PhasePoint,
    duration: f64,
    settings: &IntegratorSettings,
    direction: f64,
) -> Result<RawPath> {
    let n = D / 2;
    let flow = Flow { model, direction };
    let mut z = [ZERO; D];
    z[..n].copy_from_slice(start.u());
    z[n..].copy_from_slice(start.v());
    let mut m = [[ZERO; D]; D];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = ONE;
    }
    let mut state = State {
        z,
        m,
        action: ZERO,
        mixed: ZERO,
    };
    let mut samples = vec![Sample { t: 0.0, point: *start }];
    let mut tangents = vec![state.tangent()];
    let escape = |s: &State<D>, t: f64| -> Result<()> {
        let mag = s.max_abs();
        if !(mag <= settings.escape_bound) {
            return Err(Error::Escape { t, magnitude: mag });
        }
        Ok(())
    };

    let mut steps = 0usize;
    if duration > 0.0 {
        match settings.pinned(model, start, duration).control {
            StepControl::Fixed(count) => {
                check_count(count, settings)?;
                let h = duration / count as f64;
                samples.reserve(count);
                tangents.reserve(count);
                for k in 0..count {
                    let t = k as f64 * h;
                    state = flow.rk4(&state, t, h)?;
                    let t_next = if k + 1 == count { duration } else { (k + 1) as f64 * h };
                    escape(&state, t_next)?;
                    samples.push(Sample { t: t_next, point: state.point() });
                    tangents.push(state.tangent());
                }
                steps = count;
            }
            StepControl::Adaptive { tol } => {
                let nu = model.frequency_scale(start).max(1e-3);
                let mut h = (0.01 / nu).min(duration);
                let mut t = 0.0;
                while t < duration {
                    if steps >= settings.max_steps {
                        return Err(Error::MaxSteps { max_steps: settings.max_steps });
                    }
                    let last = t + h >= duration * (1.0 - 1e-14);
                    if last {
                        h = duration - t;
                    }
                    let full = flow.rk4(&state, t, h)?;
                    let mid = flow.rk4(&state, t, h / 2.0)?;
                    let half = flow.rk4(&mid, t + h / 2.0, h / 2.0)?;
                    let scale = 1.0 + half.max_abs().max(half.tangent_scale());
                    let err = full.distance(&half) / scale;
                    if err <= tol || h < 1e-14 * duration.max(1.0) {
                        state = half;
                        t = if last { duration } else { t + h };
                        steps += 1;
                        escape(&state, t)?;
                        samples.push(Sample { t, point: state.point() });
                        tangents.push(state.tangent());
                    }
                    let factor = if err == 0.0 { 5.0 } else { (0.9 * (tol / err).powf(0.2)).clamp(0.2, 5.0) };
                    h *= factor;
                }
            }
            StepControl::Auto { .. } => unreachable!("pinned settings are fixed or adaptive"),
        }
    }
    Ok(RawPath {
        samples,
        tangents,
        action_integral: state.action,
        mixed_integral: state.mixed,
        steps,
    })
}

fn check_count(count: usize, settings: &IntegratorSettings) -> Result<()> {
    if count == 0 {
        return Err(Error::InvalidParameter("step count must be positive".into()));
    }
    if count > settings.max_steps {
        return Err(Error::MaxSteps { max_steps: settings.max_steps });
    }
    Ok(())
}

/// Integrates from `start` (the state at `t_xi = 0`) to `t_xi = T`, carrying
/// the tangent matrix, `S_xi` and `G_xi`.
pub fn evolve(
    model: &HamiltonianModel,
    start: &PhasePoint,
    duration: f64,
    xi: Xi,
    settings: &IntegratorSettings,
) -> Result<TrajectoryRecord> {
    let raw = integrate(model, start, duration, settings, 1.0)?;
    let sign = xi.sign();
    let hbar = model.hbar();
    let first = raw.samples[0].point;
    let last = raw.samples[raw.samples.len() - 1].point;
    let uv = |p: &PhasePoint| -> Complex64 { p.u().iter().zip(p.v()).map(|(u, v)| u * v).sum() };
    let boundary_term = I * (0.5 * hbar) * (uv(&last) + uv(&first));
    let tangent = raw.tangents[raw.tangents.len() - 1];
    Ok(TrajectoryRecord {
        xi,
        duration,
        energy: model.value_unchecked(&first),
        action: raw.action_integral * sign - boundary_term,
        boundary_term,
        correction: raw.mixed_integral * (0.5 * sign),
        tangent,
        step_count: raw.steps,
        samples: raw.samples,
        tangents: raw.tangents,
    })
}

/// Integrates the physical-time equations `du/dt = -(i xi/hbar) dH/dv`,
/// `dv/dt = (i xi/hbar) dH/du` from `start` at `t = 0`.
pub fn evolve_physical_time(
    model: &HamiltonianModel,
    start: &PhasePoint,
    duration: f64,
    xi: Xi,
    settings: &IntegratorSettings,
) -> Result<Vec<Sample>> {
    Ok(integrate(model, start, duration, settings, xi.sign())?.samples)
}

/// Perturbs each start component by `+-1e-6`, re-evolves on the same grid and
/// compares the central-difference columns with the propagated tangent
/// matrix. Returns the largest entry error relative to `max(1, |M|)`.
pub fn tangent_vs_finite_difference(
    model: &HamiltonianModel,
    start: &PhasePoint,
    duration: f64,
    xi: Xi,
    settings: &IntegratorSettings,
) -> Result<f64> {
    const STEP: f64 = 1e-6;
    let settings = settings.pinned(model, start, duration);
    if let StepControl::Adaptive { .. } = settings.control {
        return Err(Error::InvalidParameter(
            "finite-difference tangent check needs a fixed grid".into(),
        ));
    }
    let base = evolve(model, start, duration, xi, &settings)?;
    let n = model.n_modes();
    let scale = base.tangent.max_abs().max(1.0);
    let mut worst: f64 = 0.0;
    for col in 0..2 * n {
        let shifted = |delta: f64| -> Result<PhasePoint> {
            let mut u = start.u().to_vec();
            let mut v = start.v().to_vec();
            if col < n {
                u[col] += delta;
            } else {
                v[col - n] += delta;
            }
            let p = PhasePoint::new(&u, &v)?;
            Ok(evolve(model, &p, duration, xi, &settings)?.end())
        };
        let plus = shifted(STEP)?;
        let minus = shifted(-STEP)?;
        let diff: Vec<Complex64> = plus
            .u()
            .iter()
            .chain(plus.v())
            .zip(minus.u().iter().chain(minus.v()))
            .map(|(a, b)| (a - b) / (2.0 * STEP))
            .collect();
        for (row, fd) in diff.iter().enumerate() {
            worst = worst.max((fd - base.tangent.get(row, col)).norm() / scale);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{build_harmonic, build_kerr_pair};
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn harmonic_matches_analytic_solution() {
        let h = build_harmonic(1.0, 1.0).unwrap();
        let (z1, v0) = (c(0.7, -0.2), c(0.3, 0.9));
        let start = PhasePoint::new(&[z1], &[v0]).unwrap();
        let t = 2.3;
        for xi in [Xi::Plus, Xi::Minus] {
            let rec = evolve(&h, &start, t, xi, &IntegratorSettings::default()).unwrap();
            let end = rec.end();
            let eu = z1 * Complex64::from_polar(1.0, -t);
            let ev = v0 * Complex64::from_polar(1.0, t);
            assert_relative_eq!((end.u()[0] - eu).norm(), 0.0, epsilon = 1e-11);
            assert_relative_eq!((end.v()[0] - ev).norm(), 0.0, epsilon = 1e-11);
            let m = rec.tangent;
            assert_relative_eq!((m.get(0, 0) - Complex64::from_polar(1.0, -t)).norm(), 0.0, epsilon = 1e-11);
            assert_relative_eq!((m.get(1, 1) - Complex64::from_polar(1.0, t)).norm(), 0.0, epsilon = 1e-11);
            assert!(m.get(0, 1).norm() < 1e-15 && m.get(1, 0).norm() < 1e-15);
            // G = xi*hbar*omega*T/2
            assert_relative_eq!(rec.correction.re, xi.sign() * t / 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_duration_is_identity() {
        let h = build_harmonic(1.0, 1.0).unwrap();
        let start = PhasePoint::new(&[c(1.0, 0.5)], &[c(-0.2, 0.3)]).unwrap();
        let rec = evolve(&h, &start, 0.0, Xi::Plus, &IntegratorSettings::default()).unwrap();
        assert_eq!(rec.step_count, 0);
        assert_eq!(rec.samples.len(), 1);
        assert_eq!(rec.tangent, TangentMatrix::identity(1));
        assert_eq!(rec.correction, ZERO);
        let uv = start.u()[0] * start.v()[0];
        assert_relative_eq!((rec.action + I * uv).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn adaptive_reaches_endpoint_accurately() {
        let h = build_harmonic(2.0, 1.0).unwrap();
        let start = PhasePoint::new(&[c(1.0, 0.0)], &[c(1.0, 0.0)]).unwrap();
        let rec = evolve(&h, &start, 3.0, Xi::Plus, &IntegratorSettings::adaptive(1e-10)).unwrap();
        assert_eq!(rec.samples.last().unwrap().t, 3.0);
        let eu = Complex64::from_polar(1.0, -6.0);
        assert!((rec.end().u()[0] - eu).norm() < 1e-8);
        assert!(rec.samples.windows(2).all(|w| w[1].t > w[0].t));
    }

    #[test]
    fn escape_is_reported() {
        let h = build_harmonic(1.0, 1.0).unwrap();
        let start = PhasePoint::new(&[c(2e6, 0.0)], &[c(0.0, 0.0)]).unwrap();
        let err = evolve(&h, &start, 1.0, Xi::Plus, &IntegratorSettings::default()).unwrap_err();
        assert!(matches!(err, Error::Escape { .. }));
    }

    #[test]
    fn kerr_tangent_matches_finite_differences() {
        let (h, _) = build_kerr_pair(1.0, 1.0, 0.1, 1.0).unwrap();
        let start = PhasePoint::real(&[c(1.0, 0.0), c(1.0, 0.0)]).unwrap();
        // Gamma*T = 0.3
        let err = tangent_vs_finite_difference(&h, &start, 3.0, Xi::Plus, &IntegratorSettings::default()).unwrap();
        assert!(err <= 1e-6, "err = {err:e}");
        let zero = tangent_vs_finite_difference(&h, &start, 0.0, Xi::Plus, &IntegratorSettings::default()).unwrap();
        assert!(zero < 1e-9, "T=0 err = {zero:e}");
    }

    #[test]
    fn physical_samples_reverse_for_minus() {
        let h = build_harmonic(1.0, 1.0).unwrap();
        let start = PhasePoint::new(&[c(1.0, 0.0)], &[c(0.5, 0.0)]).unwrap();
        let rec = evolve(&h, &start, 1.0, Xi::Minus, &IntegratorSettings::fixed(10)).unwrap();
        let phys = rec.physical_samples();
        assert_eq!(phys[0].t, 0.0);
        assert_eq!(phys[0].point, rec.end());
        assert_eq!(phys.last().unwrap().point, rec.start());
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let (h, _) = build_kerr_pair(1.0, 1.0, 0.1, 1.0).unwrap();
        let start = PhasePoint::real(&[c(1.0, 0.0), c(0.0, 1.0)]).unwrap();
        let rec = evolve(&h, &start, 0.5, Xi::Plus, &IntegratorSettings::fixed(5)).unwrap();
        let mut buf = Vec::new();
        rec.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,re_u_x,im_u_x,re_u_y,im_u_y,re_v_x,im_v_x,re_v_y,im_v_y");
        assert_eq!(lines.len(), 7);
    }
}
