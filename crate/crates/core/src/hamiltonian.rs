//! Classical Hamiltonians `H(v, u)` on the complexified phase space.
//!
//! A model is a list of normal-ordered monomials `coeff * prod_r v_r^m_r u_r^n_r`
//! for one or two modes. Values, gradients and Hessians are obtained by exact
//! monomial differentiation, so the tangent-matrix equations see no
//! finite-difference noise.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Largest number of modes supported.
pub const MAX_MODES: usize = 2;

/// Default bound on the total degree of a monomial.
pub const DEFAULT_MAX_DEGREE: u32 = 8;

/// Largest exponent held in the per-call power tables.
const POW_TABLE: usize = 17;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

fn check_modes(n: usize) -> Result<()> {
    if n == 0 || n > MAX_MODES {
        return Err(Error::InvalidParameter(format!(
            "number of modes must be 1 or 2, got {n}"
        )));
    }
    Ok(())
}

/// A point `(u, v)` of the complexified phase space.
///
/// Real phase-space points are the ones with `v = conj(u)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhasePoint {
    n_modes: usize,
    u: [Complex64; MAX_MODES],
    v: [Complex64; MAX_MODES],
}

impl PhasePoint {
    pub fn new(u: &[Complex64], v: &[Complex64]) -> Result<Self> {
        check_modes(u.len())?;
        if u.len() != v.len() {
            return Err(Error::InvalidParameter(format!(
                "u has {} components but v has {}",
                u.len(),
                v.len()
            )));
        }
        let mut p = PhasePoint {
            n_modes: u.len(),
            u: [ZERO; MAX_MODES],
            v: [ZERO; MAX_MODES],
        };
        p.u[..u.len()].copy_from_slice(u);
        p.v[..v.len()].copy_from_slice(v);
        if !p.is_finite() {
            return Err(Error::InvalidParameter("phase point is not finite".into()));
        }
        Ok(p)
    }

    /// The real phase-space point with `u = z`, `v = conj(z)`.
    pub fn real(z: &[Complex64]) -> Result<Self> {
        let v: Vec<Complex64> = z.iter().map(|c| c.conj()).collect();
        Self::new(z, &v)
    }

    pub(crate) fn from_arrays(n_modes: usize, u: [Complex64; 2], v: [Complex64; 2]) -> Self {
        PhasePoint { n_modes, u, v }
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn u(&self) -> &[Complex64] {
        &self.u[..self.n_modes]
    }

    pub fn v(&self) -> &[Complex64] {
        &self.v[..self.n_modes]
    }

    pub fn is_finite(&self) -> bool {
        self.u().iter().chain(self.v()).all(|c| c.is_finite())
    }

    /// Largest modulus among all components.
    pub fn max_abs(&self) -> f64 {
        self.u()
            .iter()
            .chain(self.v())
            .map(|c| c.norm())
            .fold(0.0, f64::max)
    }

    /// `max_r |v_r - conj(u_r)|`, zero exactly on the real phase space.
    pub fn reality_defect(&self) -> f64 {
        self.u()
            .iter()
            .zip(self.v())
            .map(|(u, v)| (v - u.conj()).norm())
            .fold(0.0, f64::max)
    }

    /// Swaps the two modes of a two-mode point.
    pub fn mode_swapped(&self) -> Self {
        let mut p = *self;
        if self.n_modes == 2 {
            p.u.swap(0, 1);
            p.v.swap(0, 1);
        }
        p
    }
}

/// Coherent-state label: amplitude, widths and ħ for each mode.
#[derive(Clone, Debug, PartialEq)]
pub struct CoherentLabel {
    z: Vec<Complex64>,
    b: Vec<f64>,
    c: Vec<f64>,
    hbar: f64,
}

impl CoherentLabel {
    /// Symmetric widths `b = c = sqrt(hbar)` for every mode.
    pub fn new(z: &[Complex64], hbar: f64) -> Result<Self> {
        let w = vec![hbar.sqrt(); z.len()];
        Self::with_position_widths(z, &w, hbar)
    }

    /// Position widths `b_r`; momentum widths follow from `b_r c_r = hbar`.
    pub fn with_position_widths(z: &[Complex64], b: &[f64], hbar: f64) -> Result<Self> {
        let c: Vec<f64> = b.iter().map(|b| hbar / b).collect();
        Self::from_widths(z, b, &c, hbar)
    }

    pub fn from_widths(z: &[Complex64], b: &[f64], c: &[f64], hbar: f64) -> Result<Self> {
        check_modes(z.len())?;
        if !(hbar > 0.0 && hbar.is_finite()) {
            return Err(Error::InvalidParameter(format!("hbar must be positive, got {hbar}")));
        }
        if b.len() != z.len() || c.len() != z.len() {
            return Err(Error::InvalidParameter("width arrays must match mode count".into()));
        }
        for (r, (&br, &cr)) in b.iter().zip(c).enumerate() {
            if !(br > 0.0 && cr > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "widths of mode {r} must be positive (b = {br}, c = {cr})"
                )));
            }
            if ((br * cr - hbar) / hbar).abs() > 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "widths of mode {r} violate b*c = hbar: {br} * {cr} != {hbar}"
                )));
            }
        }
        if z.iter().any(|z| !z.is_finite()) {
            return Err(Error::InvalidParameter("coherent amplitude is not finite".into()));
        }
        Ok(CoherentLabel {
            z: z.to_vec(),
            b: b.to_vec(),
            c: c.to_vec(),
            hbar,
        })
    }

    pub fn z(&self) -> &[Complex64] {
        &self.z
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn n_modes(&self) -> usize {
        self.z.len()
    }

    /// `sum_r |z_r|^2`.
    pub fn norm_sqr(&self) -> f64 {
        self.z.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Same widths and ħ as `other`.
    pub fn compatible_with(&self, other: &CoherentLabel) -> bool {
        let close = |a: &[f64], b: &[f64]| {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12 * x.abs())
        };
        (self.hbar - other.hbar).abs() <= 1e-12 * self.hbar
            && close(&self.b, &other.b)
            && close(&self.c, &other.c)
    }
}

/// `u = (q/b + i p/c)/sqrt(2)`, `v = (q/b - i p/c)/sqrt(2)` per mode.
pub fn phase_to_uv(q: &[Complex64], p: &[Complex64], label: &CoherentLabel) -> Result<PhasePoint> {
    let n = label.n_modes();
    if q.len() != n || p.len() != n {
        return Err(Error::ModeMismatch {
            expected: n,
            got: q.len().max(p.len()),
        });
    }
    let mut u = [ZERO; MAX_MODES];
    let mut v = [ZERO; MAX_MODES];
    for r in 0..n {
        let a = q[r] / label.b[r];
        let b = Complex64::i() * p[r] / label.c[r];
        u[r] = (a + b) * FRAC_1_SQRT_2;
        v[r] = (a - b) * FRAC_1_SQRT_2;
    }
    Ok(PhasePoint::from_arrays(n, u, v))
}

/// Inverse of [`phase_to_uv`]: returns `(q, p)`.
pub fn uv_to_phase(point: &PhasePoint, label: &CoherentLabel) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    let n = label.n_modes();
    if point.n_modes() != n {
        return Err(Error::ModeMismatch {
            expected: n,
            got: point.n_modes(),
        });
    }
    let mut q = Vec::with_capacity(n);
    let mut p = Vec::with_capacity(n);
    for r in 0..n {
        let (u, v) = (point.u[r], point.v[r]);
        q.push((u + v) * FRAC_1_SQRT_2 * label.b[r]);
        p.push((u - v) * FRAC_1_SQRT_2 * label.c[r] / Complex64::i());
    }
    Ok((q, p))
}

/// One term `coeff * prod_r v_r^{m_r} u_r^{n_r}`; `powers[r] = (m_r, n_r)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Monomial {
    pub coeff: Complex64,
    pub powers: [(u32, u32); MAX_MODES],
}

impl Monomial {
    pub fn new(coeff: Complex64, powers: [(u32, u32); MAX_MODES]) -> Self {
        Monomial { coeff, powers }
    }

    pub fn constant(coeff: Complex64) -> Self {
        Monomial::new(coeff, [(0, 0); MAX_MODES])
    }

    pub fn degree(&self) -> u32 {
        self.powers.iter().map(|(m, n)| m + n).sum()
    }

    /// True when the monomial involves both modes.
    pub fn couples_modes(&self) -> bool {
        let [(mx, nx), (my, ny)] = self.powers;
        mx + nx > 0 && my + ny > 0
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Gradient {
    /// `dH/du_r`
    pub du: [Complex64; MAX_MODES],
    /// `dH/dv_r`
    pub dv: [Complex64; MAX_MODES],
}

/// Second partials. `uv[r][s]` is `d2H/du_r dv_s`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Hessian {
    pub uu: [[Complex64; MAX_MODES]; MAX_MODES],
    pub uv: [[Complex64; MAX_MODES]; MAX_MODES],
    pub vv: [[Complex64; MAX_MODES]; MAX_MODES],
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Derivatives {
    pub value: Complex64,
    pub grad: Gradient,
    pub hess: Hessian,
}

/// Per-mode factors of one monomial: value and its u/v derivatives up to order 2.
#[derive(Clone, Copy, Default)]
struct ModeFactors {
    f: Complex64,
    fu: Complex64,
    fv: Complex64,
    fuu: Complex64,
    fuv: Complex64,
    fvv: Complex64,
}

fn pow(x: Complex64, k: u32) -> Complex64 {
    match k {
        0 => ONE,
        1 => x,
        2 => x * x,
        _ => x.powu(k),
    }
}

/// Normal-ordered polynomial Hamiltonian `H(v, u)`.
#[derive(Clone, Debug, PartialEq)]
pub struct HamiltonianModel {
    monomials: Vec<Monomial>,
    hbar: f64,
    n_modes: usize,
    max_degree: u32,
    /// Largest single exponent over all monomials and modes.
    top_power: usize,
}

impl HamiltonianModel {
    pub fn new(monomials: Vec<Monomial>, n_modes: usize, hbar: f64) -> Result<Self> {
        Self::with_max_degree(monomials, n_modes, hbar, DEFAULT_MAX_DEGREE)
    }

    pub fn with_max_degree(
        monomials: Vec<Monomial>,
        n_modes: usize,
        hbar: f64,
        max_degree: u32,
    ) -> Result<Self> {
        check_modes(n_modes)?;
        if max_degree as usize >= POW_TABLE {
            return Err(Error::InvalidParameter(format!(
                "max_degree must be below {POW_TABLE}, got {max_degree}"
            )));
        }
        if !(hbar > 0.0 && hbar.is_finite()) {
            return Err(Error::InvalidParameter(format!("hbar must be positive, got {hbar}")));
        }
        for (k, mono) in monomials.iter().enumerate() {
            if !mono.coeff.is_finite() {
                return Err(Error::InvalidParameter(format!("monomial {k} has non-finite coefficient")));
            }
            if mono.degree() > max_degree {
                return Err(Error::InvalidParameter(format!(
                    "monomial {k} has degree {} > max_degree {max_degree}",
                    mono.degree()
                )));
            }
            if n_modes == 1 && mono.powers[1] != (0, 0) {
                return Err(Error::InvalidParameter(format!(
                    "monomial {k} uses mode y in a one-mode model"
                )));
            }
        }
        let top_power = monomials
            .iter()
            .flat_map(|m| m.powers.iter().flat_map(|&(a, b)| [a, b]))
            .max()
            .unwrap_or(0) as usize;
        Ok(HamiltonianModel {
            monomials,
            hbar,
            n_modes,
            max_degree,
            top_power,
        })
    }

    pub fn monomials(&self) -> &[Monomial] {
        &self.monomials
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn max_degree(&self) -> u32 {
        self.max_degree
    }

    fn check_point(&self, p: &PhasePoint) -> Result<()> {
        if p.n_modes() != self.n_modes {
            return Err(Error::ModeMismatch {
                expected: self.n_modes,
                got: p.n_modes(),
            });
        }
        Ok(())
    }

    pub fn eval(&self, p: &PhasePoint) -> Result<Complex64> {
        self.check_point(p)?;
        Ok(self.value_unchecked(p))
    }

    pub fn gradient(&self, p: &PhasePoint) -> Result<Gradient> {
        self.check_point(p)?;
        Ok(self.derivatives_unchecked(p).grad)
    }

    pub fn hessian(&self, p: &PhasePoint) -> Result<Hessian> {
        self.check_point(p)?;
        Ok(self.derivatives_unchecked(p).hess)
    }

    /// Value, gradient and Hessian in one pass.
    pub fn derivatives(&self, p: &PhasePoint) -> Result<Derivatives> {
        self.check_point(p)?;
        Ok(self.derivatives_unchecked(p))
    }

    pub(crate) fn value_unchecked(&self, p: &PhasePoint) -> Complex64 {
        self.monomials
            .iter()
            .map(|mono| {
                (0..self.n_modes).fold(mono.coeff, |acc, r| {
                    let (m, n) = mono.powers[r];
                    acc * pow(p.v[r], m) * pow(p.u[r], n)
                })
            })
            .sum()
    }

    pub(crate) fn derivatives_unchecked(&self, p: &PhasePoint) -> Derivatives {
        let n = self.n_modes;
        // powers 0..=max_degree of every coordinate, shared by all monomials
        let top = self.top_power;
        let mut up = [[ONE; POW_TABLE]; MAX_MODES];
        let mut vp = [[ONE; POW_TABLE]; MAX_MODES];
        for r in 0..n {
            for k in 1..=top {
                up[r][k] = up[r][k - 1] * p.u[r];
                vp[r][k] = vp[r][k - 1] * p.v[r];
            }
        }
        let factors = |r: usize, (m, k): (u32, u32)| -> ModeFactors {
            let (m, k) = (m as usize, k as usize);
            if m == 0 && k == 0 {
                return ModeFactors { f: ONE, ..Default::default() };
            }
            let (mf, kf) = (m as f64, k as f64);
            let v = |e: usize, drop: usize| if e < drop { ZERO } else { vp[r][e - drop] };
            let u = |e: usize, drop: usize| if e < drop { ZERO } else { up[r][e - drop] };
            ModeFactors {
                f: v(m, 0) * u(k, 0),
                fu: v(m, 0) * u(k, 1) * kf,
                fv: v(m, 1) * u(k, 0) * mf,
                fuu: v(m, 0) * u(k, 2) * (kf * (kf - 1.0)),
                fvv: v(m, 2) * u(k, 0) * (mf * (mf - 1.0)),
                fuv: v(m, 1) * u(k, 1) * (mf * kf),
            }
        };
        let mut d = Derivatives::default();
        for mono in &self.monomials {
            let c = mono.coeff;
            if n == 1 {
                let x = factors(0, mono.powers[0]);
                d.value += c * x.f;
                d.grad.du[0] += c * x.fu;
                d.grad.dv[0] += c * x.fv;
                d.hess.uu[0][0] += c * x.fuu;
                d.hess.vv[0][0] += c * x.fvv;
                d.hess.uv[0][0] += c * x.fuv;
                continue;
            }
            let fac = [factors(0, mono.powers[0]), factors(1, mono.powers[1])];
            d.value += c * fac[0].f * fac[1].f;
            for r in 0..2 {
                let o = c * fac[1 - r].f;
                d.grad.du[r] += o * fac[r].fu;
                d.grad.dv[r] += o * fac[r].fv;
                d.hess.uu[r][r] += o * fac[r].fuu;
                d.hess.vv[r][r] += o * fac[r].fvv;
                d.hess.uv[r][r] += o * fac[r].fuv;
            }
            let (x, y) = (&fac[0], &fac[1]);
            let uu = c * x.fu * y.fu;
            let vv = c * x.fv * y.fv;
            d.hess.uu[0][1] += uu;
            d.hess.uu[1][0] += uu;
            d.hess.vv[0][1] += vv;
            d.hess.vv[1][0] += vv;
            d.hess.uv[0][1] += c * x.fu * y.fv;
            d.hess.uv[1][0] += c * y.fu * x.fv;
        }
        d
    }

    /// Checks that `H(conj(u), u)` is real: every monomial `(m_r, n_r)` has a
    /// partner `(n_r, m_r)` carrying the conjugate coefficient.
    pub fn hermiticity_check(&self) -> Result<()> {
        let mut merged: BTreeMap<[(u32, u32); MAX_MODES], Complex64> = BTreeMap::new();
        for mono in &self.monomials {
            *merged.entry(mono.powers).or_insert(ZERO) += mono.coeff;
        }
        for (powers, &c) in &merged {
            let swapped = [(powers[0].1, powers[0].0), (powers[1].1, powers[1].0)];
            let partner = merged.get(&swapped).copied().unwrap_or(ZERO);
            if (partner - c.conj()).norm() > 1e-12 * (1.0 + c.norm()) {
                return Err(Error::InvalidParameter(format!(
                    "non-hermitian model: term {powers:?} has coefficient {c} but partner {swapped:?} has {partner}"
                )));
            }
        }
        Ok(())
    }

    /// True when no monomial couples the two modes.
    pub fn is_decoupled(&self) -> bool {
        self.n_modes == 1
            || self
                .monomials
                .iter()
                .all(|m| m.coeff == ZERO || !m.couples_modes())
    }

    /// The same model with modes x and y relabelled.
    pub fn mode_swapped(&self) -> Self {
        let mut out = self.clone();
        if self.n_modes == 2 {
            for m in &mut out.monomials {
                m.powers.swap(0, 1);
            }
        }
        out
    }

    /// Characteristic angular frequency: infinity-norm of the linearised
    /// generator at `p`. Sets the default integration step.
    pub(crate) fn frequency_scale(&self, p: &PhasePoint) -> f64 {
        let h = self.derivatives_unchecked(p).hess;
        let n = self.n_modes;
        let mut worst: f64 = 0.0;
        for r in 0..n {
            let mut row_u = 0.0;
            let mut row_v = 0.0;
            for s in 0..n {
                row_u += h.uv[s][r].norm() + h.vv[r][s].norm();
                row_v += h.uu[r][s].norm() + h.uv[r][s].norm();
            }
            worst = worst.max(row_u).max(row_v);
        }
        worst / self.hbar
    }
}

/// `H = hbar*omega*(v u + 1/2)`.
pub fn build_harmonic(omega: f64, hbar: f64) -> Result<HamiltonianModel> {
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::InvalidParameter(format!("omega must be positive, got {omega}")));
    }
    let e = hbar * omega;
    HamiltonianModel::new(
        vec![
            Monomial::new(Complex64::new(e, 0.0), [(1, 1), (0, 0)]),
            Monomial::constant(Complex64::new(e / 2.0, 0.0)),
        ],
        1,
        hbar,
    )
}

/// Parameters of two oscillators coupled through `lambda * H_x * H_y`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KerrPairModel {
    pub omega_x: f64,
    pub omega_y: f64,
    pub lambda: f64,
    pub hbar: f64,
    /// `omega_x + gamma/2`
    pub big_omega_x: f64,
    /// `omega_y + gamma/2`
    pub big_omega_y: f64,
    /// `lambda * hbar * omega_x * omega_y`
    pub gamma: f64,
    /// `hbar * (omega_x + omega_y) / 2`
    pub epsilon0: f64,
}

impl KerrPairModel {
    pub fn new(omega_x: f64, omega_y: f64, lambda: f64, hbar: f64) -> Result<Self> {
        if !(omega_x > 0.0 && omega_y > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "frequencies must be positive, got ({omega_x}, {omega_y})"
            )));
        }
        if !(hbar > 0.0 && hbar.is_finite()) || !lambda.is_finite() {
            return Err(Error::InvalidParameter("hbar must be positive and lambda finite".into()));
        }
        let gamma = lambda * hbar * omega_x * omega_y;
        Ok(KerrPairModel {
            omega_x,
            omega_y,
            lambda,
            hbar,
            big_omega_x: omega_x + gamma / 2.0,
            big_omega_y: omega_y + gamma / 2.0,
            gamma,
            epsilon0: hbar * (omega_x + omega_y) / 2.0,
        })
    }

    /// Quantum energy of the Fock state `|n, m>`.
    pub fn level(&self, n: usize, m: usize) -> f64 {
        let (nf, mf) = (n as f64, m as f64);
        self.hbar * (self.big_omega_x * nf + self.big_omega_y * mf + self.gamma * nf * mf) + self.epsilon0
    }

    pub fn model(&self) -> HamiltonianModel {
        let h = self.hbar;
        let re = |x: f64| Complex64::new(x, 0.0);
        HamiltonianModel::new(
            vec![
                Monomial::new(re(h * self.big_omega_x), [(1, 1), (0, 0)]),
                Monomial::new(re(h * self.big_omega_y), [(0, 0), (1, 1)]),
                Monomial::new(re(h * self.gamma), [(1, 1), (1, 1)]),
                Monomial::constant(re(self.epsilon0)),
            ],
            2,
            h,
        )
        .expect("kerr monomials are valid by construction")
    }
}

pub fn build_kerr_pair(
    omega_x: f64,
    omega_y: f64,
    lambda: f64,
    hbar: f64,
) -> Result<(HamiltonianModel, KerrPairModel)> {
    let kerr = KerrPairModel::new(omega_x, omega_y, lambda, hbar)?;
    Ok((kerr.model(), kerr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn one(u: Complex64, v: Complex64) -> PhasePoint {
        PhasePoint::new(&[u], &[v]).unwrap()
    }

    #[test]
    fn harmonic_values() {
        let h = build_harmonic(1.0, 1.0).unwrap();
        assert_eq!(h.monomials().len(), 2);
        assert_relative_eq!(h.eval(&one(c(0., 0.), c(0., 0.))).unwrap().re, 0.5);
        assert_relative_eq!(h.eval(&one(c(1., 0.), c(1., 0.))).unwrap().re, 1.5);
        let g = h.gradient(&one(c(2., 0.), c(3., 0.))).unwrap();
        assert_relative_eq!(g.du[0].re, 3.0);
        assert_relative_eq!(g.dv[0].re, 2.0);
        let hs = h.hessian(&one(c(0.3, 1.), c(-2., 0.5))).unwrap();
        assert_eq!(hs.uv[0][0], c(1.0, 0.0));
        assert_eq!(hs.uu[0][0], c(0.0, 0.0));
        assert_eq!(hs.vv[0][0], c(0.0, 0.0));
    }

    #[test]
    fn kerr_parameters_and_values() {
        let (h, k) = build_kerr_pair(1.0, 1.0, 0.1, 1.0).unwrap();
        assert_relative_eq!(k.gamma, 0.1, epsilon = 1e-15);
        assert_relative_eq!(k.big_omega_x, 1.05, epsilon = 1e-15);
        assert_relative_eq!(k.big_omega_y, 1.05, epsilon = 1e-15);
        assert_relative_eq!(k.epsilon0, 1.0, epsilon = 1e-15);
        let p = PhasePoint::new(&[c(1., 0.), c(1., 0.)], &[c(1., 0.), c(1., 0.)]).unwrap();
        assert_relative_eq!(h.eval(&p).unwrap().re, 3.2, epsilon = 1e-14);
        let d = h.derivatives(&p).unwrap();
        assert_relative_eq!(d.grad.du[0].re, 1.15, epsilon = 1e-14);
        // d2H/du_x dv_y = hbar*Gamma*v_x*u_y
        assert_relative_eq!(d.hess.uv[0][1].re, 0.1, epsilon = 1e-14);
        h.hermiticity_check().unwrap();
    }

    #[test]
    fn decoupled_kerr() {
        let (h, k) = build_kerr_pair(1.3, 0.7, 0.0, 1.0).unwrap();
        assert_eq!(k.gamma, 0.0);
        assert_eq!(k.big_omega_x, 1.3);
        assert_eq!(k.big_omega_y, 0.7);
        assert_eq!(h.monomials()[2].coeff, c(0.0, 0.0));
        assert!(h.is_decoupled());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(build_harmonic(0.0, 1.0).is_err());
        assert!(build_harmonic(-1.0, 1.0).is_err());
        assert!(build_kerr_pair(1.0, -1.0, 0.1, 1.0).is_err());
        let h = build_harmonic(1.0, 1.0).unwrap();
        let p2 = PhasePoint::new(&[c(1., 0.), c(1., 0.)], &[c(1., 0.), c(1., 0.)]).unwrap();
        assert!(matches!(h.eval(&p2), Err(Error::ModeMismatch { expected: 1, got: 2 })));
        let deg9 = Monomial::new(c(1., 0.), [(5, 4), (0, 0)]);
        assert!(HamiltonianModel::new(vec![deg9], 1, 1.0).is_err());
        assert!(PhasePoint::new(&[c(f64::NAN, 0.)], &[c(0., 0.)]).is_err());
    }

    #[test]
    fn hermiticity_detects_missing_partner() {
        let bad = HamiltonianModel::new(vec![Monomial::new(c(1., 0.), [(2, 0), (0, 0)])], 1, 1.0).unwrap();
        assert!(bad.hermiticity_check().is_err());
        let good = HamiltonianModel::new(
            vec![
                Monomial::new(c(1., 2.), [(2, 0), (0, 0)]),
                Monomial::new(c(1., -2.), [(0, 2), (0, 0)]),
            ],
            1,
            1.0,
        )
        .unwrap();
        good.hermiticity_check().unwrap();
    }

    #[test]
    fn phase_space_conversion() {
        let label = CoherentLabel::with_position_widths(&[c(0., 0.)], &[2.0], 1.0).unwrap();
        let (b, cw) = (label.b()[0], label.c()[0]);
        assert_relative_eq!(b * cw, 1.0, epsilon = 1e-15);
        let zero = phase_to_uv(&[c(0., 0.)], &[c(0., 0.)], &label).unwrap();
        assert_eq!(zero.u()[0], c(0., 0.));
        let p = phase_to_uv(&[c(b, 0.)], &[c(0., 0.)], &label).unwrap();
        assert_relative_eq!(p.u()[0].re, FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_relative_eq!(p.v()[0].re, FRAC_1_SQRT_2, epsilon = 1e-15);
        let p = phase_to_uv(&[c(0., 0.)], &[c(cw, 0.)], &label).unwrap();
        assert_relative_eq!(p.u()[0].im, FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_relative_eq!(p.v()[0].im, -FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_eq!(p.reality_defect(), 0.0);
    }

    #[test]
    fn label_invariants() {
        assert!(CoherentLabel::from_widths(&[c(0., 0.)], &[1.0], &[2.0], 1.0).is_err());
        assert!(CoherentLabel::from_widths(&[c(0., 0.)], &[-1.0], &[-1.0], 1.0).is_err());
        assert!(CoherentLabel::new(&[c(0., 0.); 3], 1.0).is_err());
        let l = CoherentLabel::new(&[c(1., 0.), c(0., 1.)], 2.0).unwrap();
        assert_relative_eq!(l.norm_sqr(), 2.0);
        assert_relative_eq!(l.b()[1] * l.c()[1], 2.0, epsilon = 1e-14);
    }
}
