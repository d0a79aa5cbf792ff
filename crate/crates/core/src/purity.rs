//! Semiclassical purity of the reduced state of mode `x` for a two-mode
//! system prepared in a product coherent state.
//!
//! The only contributing trajectory is the real one through `(z0, conj(z0))`,
//! so everything follows from its tangent matrix. With
//! `a = M_vu M_uu^-1`, `b = M_uv M_vv^-1` and `1/D = 1 - a_yy b_yy`:
//!
//! ```text
//! A_a = a_xx, A_b = b_xx, C_a = a_xy^2 b_yy D, C_b = b_xy^2 a_yy D, C_c = a_xy b_xy D
//! I   = {[1 - pq]^2 - 2 C_c^2 [1 + pq] + C_c^4}^(-1/2),  p = A_a + C_a, q = A_b + C_b
//! R   = (det M_uu)^(-1/2) (det M_vv)^(-1/2) (1 - a_yy b_yy)^(-1/2)
//! P   = I R^2
//! ```
//!
//! Each root is continued along the trajectory from its value `1` at `T = 0`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::dynamics::{evolve, Block, IntegratorSettings, TangentMatrix, Xi};
use crate::error::{Error, Result};
use crate::hamiltonian::{CoherentLabel, HamiltonianModel, PhasePoint};
use crate::linalg::{det2, inv2, Mat2, PhaseTracker};
use crate::quadrature::GaussHermite;
use crate::shooting::FOCAL_THRESHOLD;

/// Imaginary parts of `P` up to this size are rounding noise.
pub const IMAG_NOISE: f64 = 1e-9;
/// Imaginary parts of `P` beyond this signal a broken pipeline.
pub const IMAG_LIMIT: f64 = 1e-6;
const MAX_REFINEMENTS: usize = 4;

const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// Saddle-point factors built from one tangent matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SaddleFactors {
    pub a_matrix: Mat2,
    pub b_matrix: Mat2,
    pub d: Complex64,
    pub a_a: Complex64,
    pub a_b: Complex64,
    pub c_a: Complex64,
    pub c_b: Complex64,
    pub c_c: Complex64,
    /// `I^-2`.
    pub i_radicand: Complex64,
    /// `1 - a_yy b_yy`.
    pub trace_radicand: Complex64,
    pub det_muu: Complex64,
    pub det_mvv: Complex64,
}

fn require_two_modes(tangent: &TangentMatrix) -> Result<()> {
    if tangent.n_modes() != 2 {
        return Err(Error::ModeMismatch {
            expected: 2,
            got: tangent.n_modes(),
        });
    }
    Ok(())
}

pub fn saddle_factors(tangent: &TangentMatrix) -> Result<SaddleFactors> {
    require_two_modes(tangent)?;
    let muu = tangent.block2(Block::UU);
    let mvv = tangent.block2(Block::VV);
    let (det_muu, det_mvv) = (det2(&muu), det2(&mvv));
    let muu_inv = inv2(&muu, FOCAL_THRESHOLD).ok_or(Error::FocalPoint { det: det_muu.norm() })?;
    let mvv_inv = inv2(&mvv, FOCAL_THRESHOLD).ok_or(Error::FocalPoint { det: det_mvv.norm() })?;
    let a = tangent.block2(Block::VU) * muu_inv;
    let b = tangent.block2(Block::UV) * mvv_inv;
    let trace_radicand = ONE - a[(1, 1)] * b[(1, 1)];
    if trace_radicand.norm() < FOCAL_THRESHOLD {
        return Err(Error::FocalPoint { det: trace_radicand.norm() });
    }
    let d = ONE / trace_radicand;
    let a_a = a[(0, 0)];
    let a_b = b[(0, 0)];
    let c_a = a[(0, 1)] * a[(0, 1)] * b[(1, 1)] * d;
    let c_b = b[(0, 1)] * b[(0, 1)] * a[(1, 1)] * d;
    let c_c = a[(0, 1)] * b[(0, 1)] * d;
    let pq = (a_a + c_a) * (a_b + c_b);
    let c2 = c_c * c_c;
    let i_radicand = (ONE - pq) * (ONE - pq) - 2.0 * c2 * (ONE + pq) + c2 * c2;
    Ok(SaddleFactors {
        a_matrix: a,
        b_matrix: b,
        d,
        a_a,
        a_b,
        c_a,
        c_b,
        c_c,
        i_radicand,
        trace_radicand,
        det_muu,
        det_mvv,
    })
}

#[derive(Clone, Debug)]
pub struct PurityBreakdown {
    pub a_matrix: Mat2,
    pub b_matrix: Mat2,
    pub d: Complex64,
    pub a_a: Complex64,
    pub a_b: Complex64,
    pub c_a: Complex64,
    pub c_b: Complex64,
    pub c_c: Complex64,
    pub i_factor: Complex64,
    pub r_tilde: Complex64,
    pub det_muu: Complex64,
    pub det_mvv: Complex64,
    pub p: f64,
    /// `|Im P|` before it was dropped.
    pub imag_residue: f64,
    pub s_lin: f64,
    /// `|z0x|^2 |z0y|^2 Gamma^2 T^2`, filled in for the Kerr pair.
    pub x_parameter: Option<f64>,
    pub tangent: TangentMatrix,
}

impl PurityBreakdown {
    pub fn with_x_parameter(mut self, x: f64) -> Self {
        self.x_parameter = Some(x);
        self
    }

    /// `max(|a - a^T|, |b - b^T|)`.
    pub fn asymmetry(&self) -> f64 {
        let a = (self.a_matrix[(0, 1)] - self.a_matrix[(1, 0)]).norm();
        let b = (self.b_matrix[(0, 1)] - self.b_matrix[(1, 0)]).norm();
        a.max(b)
    }
}

/// Runs the purity pipeline on the tangent matrices of a path starting at the
/// identity, continuing every root sample by sample. The last matrix is the
/// one evaluated.
pub fn purity_from_tangents(tangents: &[TangentMatrix]) -> Result<PurityBreakdown> {
    let first = tangents
        .first()
        .ok_or_else(|| Error::InvalidParameter("empty tangent path".into()))?;
    require_two_modes(first)?;
    let mut trackers = [ONE; 4].map(PhaseTracker::new);
    let mut last = None;
    for (k, m) in tangents.iter().enumerate() {
        let f = saddle_factors(m)?;
        let values = [f.i_radicand, f.det_muu, f.det_mvv, f.trace_radicand];
        if k == 0 {
            trackers = values.map(PhaseTracker::new);
        } else {
            for (t, v) in trackers.iter_mut().zip(values) {
                t.push(v)?;
            }
        }
        last = Some(f);
    }
    let f = last.expect("at least one tangent");
    let [i_t, muu_t, mvv_t, trace_t] = &trackers;
    let i_factor = i_t.power(-0.5);
    let r_tilde = muu_t.power(-0.5) * mvv_t.power(-0.5) * trace_t.power(-0.5);
    let p = i_factor * r_tilde * r_tilde;
    let imag_residue = p.im.abs();
    if imag_residue > IMAG_LIMIT {
        return Err(Error::PipelineInconsistency { imag: imag_residue });
    }
    Ok(PurityBreakdown {
        a_matrix: f.a_matrix,
        b_matrix: f.b_matrix,
        d: f.d,
        a_a: f.a_a,
        a_b: f.a_b,
        c_a: f.c_a,
        c_b: f.c_b,
        c_c: f.c_c,
        i_factor,
        r_tilde,
        det_muu: f.det_muu,
        det_mvv: f.det_mvv,
        p: p.re,
        imag_residue,
        s_lin: linear_entropy(p.re),
        x_parameter: None,
        tangent: *tangents.last().expect("non-empty"),
    })
}

/// Purity of mode `x` at time `T` from the real trajectory through `z0`.
pub fn purity_semiclassical(
    model: &HamiltonianModel,
    z0: &CoherentLabel,
    duration: f64,
    settings: &IntegratorSettings,
) -> Result<PurityBreakdown> {
    if model.n_modes() != 2 || z0.n_modes() != 2 {
        return Err(Error::ModeMismatch {
            expected: 2,
            got: if model.n_modes() != 2 { model.n_modes() } else { z0.n_modes() },
        });
    }
    model.hermiticity_check()?;
    let start = PhasePoint::real(z0.z())?;
    let mut integrator = settings.pinned(model, &start, duration);
    let mut attempt = Err(Error::BranchJump { jump: f64::NAN });
    for _ in 0..=MAX_REFINEMENTS {
        let rec = evolve(model, &start, duration, Xi::Plus, &integrator)?;
        attempt = purity_from_tangents(&rec.tangents);
        match attempt {
            Err(Error::BranchJump { .. }) => integrator = integrator.refined(2),
            _ => break,
        }
    }
    attempt
}

/// `x = |z0x|^2 |z0y|^2 (Gamma T)^2`.
pub fn kerr_x(z0: &[Complex64], gamma: f64, duration: f64) -> f64 {
    z0[0].norm_sqr() * z0[1].norm_sqr() * (gamma * duration).powi(2)
}

pub fn linear_entropy(p: f64) -> f64 {
    1.0 - p
}

/// Block determinants entering the purity written through `E`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeterminantForm {
    pub det_a: Complex64,
    pub det_b: Complex64,
    pub det_c: Complex64,
    pub det_d: Complex64,
    pub det_ap: Complex64,
    pub det_bp: Complex64,
    pub det_muu: Complex64,
    pub det_mvv: Complex64,
    pub e: Complex64,
    pub e_prime: Complex64,
    pub e_dprime: Complex64,
    /// Real part of `E^(-1/2) det M_uu det M_vv` (principal root).
    pub p_det: f64,
    pub p_det_imag: f64,
}

fn rows_block(m: &TangentMatrix, rows: [usize; 2], col0: usize) -> Mat2 {
    Mat2::new(
        m.get(rows[0], col0),
        m.get(rows[0], col0 + 1),
        m.get(rows[1], col0),
        m.get(rows[1], col0 + 1),
    )
}

/// Evaluates `E`, `E'`, `E''` and `P = E^(-1/2) det M_uu det M_vv` on the
/// blocks of two row-permuted copies of the tangent matrix: rows
/// `(u_x, v_y | v_x, u_y)` give `[[A, D], [C, B]]`, rows `(u_x, v_x | u_y, v_y)`
/// give `[[A', D'], [C', B']]`. The bracket is evaluated as written, including
/// its `+E'' ... -E''` pair. Reported, not authoritative.
pub fn purity_determinant_form(tangent: &TangentMatrix) -> Result<DeterminantForm> {
    require_two_modes(tangent)?;
    // row indices: u_x = 0, u_y = 1, v_x = 2, v_y = 3
    let det_a = det2(&rows_block(tangent, [0, 3], 0));
    let det_d = det2(&rows_block(tangent, [0, 3], 2));
    let det_c = det2(&rows_block(tangent, [2, 1], 0));
    let det_b = det2(&rows_block(tangent, [2, 1], 2));
    let det_ap = det2(&rows_block(tangent, [0, 2], 0));
    let det_bp = det2(&rows_block(tangent, [1, 3], 2));
    let det_muu = tangent.block_det(Block::UU);
    let det_mvv = tangent.block_det(Block::VV);
    let dd = det_muu * det_mvv;
    let e_prime = -4.0 * (dd * det_ap * det_bp).powi(2);
    let e_dprime = det_ap * det_ap * det_b * det_d - (det_ap * det_bp).powi(2) + det_bp * det_bp * det_a * det_c;
    let bracket = e_dprime + (dd - det_a * det_b) * (dd - det_c * det_d) - e_dprime;
    let e = e_prime + bracket * bracket;
    if e.norm() < FOCAL_THRESHOLD {
        return Err(Error::FocalPoint { det: e.norm() });
    }
    let p = e.powf(-0.5) * dd;
    Ok(DeterminantForm {
        det_a,
        det_b,
        det_c,
        det_d,
        det_ap,
        det_bp,
        det_muu,
        det_mvv,
        e,
        e_prime,
        e_dprime,
        p_det: p.re,
        p_det_imag: p.im,
    })
}

/// Closed-form Kerr purities as functions of `x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KerrClosedForm {
    pub x: f64,
    /// `(1 + x) / sqrt(1 + 6x + x^2 (3 + 2x)^2)`.
    pub printed: f64,
    /// `1 / sqrt(1 + 4x)`, the pipeline reduced symbolically on the Kerr blocks.
    pub pipeline: f64,
}

pub fn kerr_closed_form(z0: &[Complex64], gamma: f64, duration: f64) -> KerrClosedForm {
    kerr_closed_form_at(kerr_x(z0, gamma, duration))
}

pub fn kerr_closed_form_at(x: f64) -> KerrClosedForm {
    KerrClosedForm {
        x,
        printed: (1.0 + x) / (1.0 + 6.0 * x + (x * (3.0 + 2.0 * x)).powi(2)).sqrt(),
        pipeline: 1.0 / (1.0 + 4.0 * x).sqrt(),
    }
}

/// Closed forms of the two Gaussian integrals against tensor-product
/// Gauss-Hermite quadrature.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SaddleCheck {
    pub trace_closed: Complex64,
    pub trace_quadrature: Complex64,
    /// Relative error of the two-dimensional trace integral.
    pub trace_residual: f64,
    pub gaussian_closed: Complex64,
    pub gaussian_quadrature: Complex64,
    /// Relative error of the four-dimensional integral.
    pub gaussian_residual: f64,
}

impl SaddleCheck {
    pub fn worst(&self) -> f64 {
        self.trace_residual.max(self.gaussian_residual)
    }
}

/// Real-variable matrix `K` with `(1/2) w^T Y w = -r^T K r`, where `w` stacks
/// `(z, conj z)` pairs and `r` the real and imaginary parts.
fn real_form(y: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let d = y.nrows();
    let mut t = DMatrix::zeros(d, d);
    for k in (0..d).step_by(2) {
        t[(k, k)] = ONE;
        t[(k, k + 1)] = Complex64::new(0.0, 1.0);
        t[(k + 1, k)] = ONE;
        t[(k + 1, k + 1)] = Complex64::new(0.0, -1.0);
    }
    t.transpose() * y * t * Complex64::new(-0.5, 0.0)
}

fn check_convergent(k: &DMatrix<Complex64>) -> Result<()> {
    let re = k.map(|c| c.re);
    let sym = (&re + re.transpose()) * 0.5;
    let min_eig = SymmetricEigen::new(sym).eigenvalues.min();
    if min_eig <= 0.0 {
        return Err(Error::Nonconvergent { min_eig });
    }
    Ok(())
}

/// `int exp(-r^T K r) d^d r / pi^(d/2)` for `d` = 2 or 4.
fn quadrature_integral(k: &DMatrix<Complex64>, rule: &GaussHermite) -> Complex64 {
    let d = k.nrows();
    let x = &rule.nodes;
    let w = &rule.weights;
    let n = rule.len();
    // exp(-r^T (K - 1) r) against the weight exp(-|r|^2)
    let mut e = k.clone();
    for i in 0..d {
        e[(i, i)] -= ONE;
    }
    let e = |i: usize, j: usize| -> Complex64 {
        if i == j {
            e[(i, i)]
        } else {
            e[(i, j)] + e[(j, i)]
        }
    };
    match d {
        2 => {
            let mut s = Complex64::new(0.0, 0.0);
            for i in 0..n {
                for j in 0..n {
                    let q = e(0, 0) * x[i] * x[i] + e(0, 1) * x[i] * x[j] + e(1, 1) * x[j] * x[j];
                    s += (-q).exp() * (w[i] * w[j]);
                }
            }
            s / std::f64::consts::PI
        }
        4 => {
            let (e00, e01, e11) = (e(0, 0), e(0, 1), e(1, 1));
            let (e02, e03, e12, e13) = (e(0, 2), e(0, 3), e(1, 2), e(1, 3));
            let (e22, e23, e33) = (e(2, 2), e(2, 3), e(3, 3));
            let total: Complex64 = (0..n * n)
                .into_par_iter()
                .map(|ij| {
                    let (i, j) = (ij / n, ij % n);
                    let (r0, r1) = (x[i], x[j]);
                    let outer = w[i] * w[j];
                    let c0 = e00 * r0 * r0 + e01 * r0 * r1 + e11 * r1 * r1;
                    let l2 = e02 * r0 + e12 * r1;
                    let l3 = e03 * r0 + e13 * r1;
                    let mut s = Complex64::new(0.0, 0.0);
                    for k in 0..n {
                        let r2 = x[k];
                        let ck = c0 + l2 * r2 + e22 * r2 * r2;
                        let lk = l3 + e23 * r2;
                        let wk = outer * w[k];
                        for l in 0..n {
                            let r3 = x[l];
                            s += (-(ck + (lk + e33 * r3) * r3)).exp() * (wk * w[l]);
                        }
                    }
                    s
                })
                .sum();
            total / (std::f64::consts::PI * std::f64::consts::PI)
        }
        _ => unreachable!("only two- and four-dimensional integrals occur"),
    }
}

/// Evaluates the trace integral `I = (1 - a_yy b_yy)^(-1/2)` and the saddle
/// integral `I = (det A)^(-1/2)` by `n_quad`-point Gauss-Hermite quadrature
/// per real axis and compares them with their closed forms.
pub fn gaussian_saddle_check(tangent: &TangentMatrix, n_quad: usize) -> Result<SaddleCheck> {
    let f = saddle_factors(tangent)?;
    let rule = GaussHermite::new(n_quad);
    let m1 = Complex64::new(-1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);

    let (alpha, beta) = (f.a_matrix[(1, 1)], f.b_matrix[(1, 1)]);
    let y2 = DMatrix::from_row_slice(2, 2, &[alpha, m1, m1, beta]);
    let k2 = real_form(&y2);
    check_convergent(&k2)?;
    let trace_closed = f.trace_radicand.powf(-0.5);
    let trace_quadrature = quadrature_integral(&k2, &rule);

    let p = f.a_a + f.c_a;
    let q = f.a_b + f.c_b;
    let c = f.c_c;
    #[rustfmt::skip]
    let y4 = DMatrix::from_row_slice(4, 4, &[
        p, m1, zero, c,
        m1, q, c, zero,
        zero, c, p, m1,
        c, zero, m1, q,
    ]);
    let k4 = real_form(&y4);
    check_convergent(&k4)?;
    let gaussian_closed = f.i_radicand.powf(-0.5);
    let gaussian_quadrature = quadrature_integral(&k4, &rule);

    Ok(SaddleCheck {
        trace_closed,
        trace_quadrature,
        trace_residual: (trace_quadrature - trace_closed).norm() / trace_closed.norm(),
        gaussian_closed,
        gaussian_quadrature,
        gaussian_residual: (gaussian_quadrature - gaussian_closed).norm() / gaussian_closed.norm(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::build_kerr_pair;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn identity_tangent() {
        let id = TangentMatrix::identity(2);
        let f = saddle_factors(&id).unwrap();
        assert_eq!(f.i_radicand, ONE);
        let b = purity_from_tangents(&[id]).unwrap();
        assert_eq!(b.p, 1.0);
        assert_eq!(b.s_lin, 0.0);
        let det = purity_determinant_form(&id).unwrap();
        assert_eq!(det.det_a, Complex64::new(0.0, 0.0));
        assert_eq!(det.det_b, Complex64::new(0.0, 0.0));
        assert_eq!(det.det_ap * det.det_bp, Complex64::new(0.0, 0.0));
        assert_eq!(det.det_muu, ONE);
        assert_eq!(det.p_det, 1.0);
        let q = gaussian_saddle_check(&id, 16).unwrap();
        assert!(q.worst() < 1e-13, "{q:?}");
    }

    #[test]
    fn kerr_short_time_value() {
        let (h, k) = build_kerr_pair(1.0, 1.0, 0.1, 1.0).unwrap();
        assert_relative_eq!(k.gamma, 0.1, epsilon = 1e-15);
        let z0 = CoherentLabel::new(&[c(1.0, 0.0), c(1.0, 0.0)], 1.0).unwrap();
        let b = purity_semiclassical(&h, &z0, 0.1, &IntegratorSettings::default()).unwrap();
        assert!((b.p - 0.99980).abs() < 1e-6, "P = {}", b.p);
        assert!(b.asymmetry() < 1e-9);
    }

    #[test]
    fn kerr_pipeline_matches_symbolic_reduction() {
        let (h, k) = build_kerr_pair(1.0, 1.4, 0.3, 1.0).unwrap();
        let z = [c(0.6, 0.4), c(-0.3, 0.8)];
        let z0 = CoherentLabel::new(&z, 1.0).unwrap();
        for t in [0.5, 2.0, 6.0] {
            let b = purity_semiclassical(&h, &z0, t, &IntegratorSettings::default()).unwrap();
            let closed = kerr_closed_form(&z, k.gamma, t);
            assert_relative_eq!(b.p, closed.pipeline, max_relative = 1e-9);
        }
    }

    #[test]
    fn closed_forms_at_reference_points() {
        let zero = kerr_closed_form_at(0.0);
        assert_eq!((zero.printed, zero.pipeline), (1.0, 1.0));
        let one = kerr_closed_form_at(1.0);
        assert_relative_eq!(one.printed, 2.0 / 32f64.sqrt(), epsilon = 1e-15);
        let small = kerr_closed_form_at(1e-4);
        assert!((small.printed - 0.9998).abs() < 1e-7);
        assert!((small.pipeline - 0.9998).abs() < 1e-7);
    }

    #[test]
    fn quadrature_matches_closed_form_for_small_coupling() {
        let s = |v: f64| c(v, 0.5 * v);
        let m = TangentMatrix::from_blocks(
            &DMatrix::identity(2, 2),
            &DMatrix::from_row_slice(2, 2, &[s(0.1), s(-0.05), s(-0.05), s(0.15)]),
            &DMatrix::from_row_slice(2, 2, &[s(-0.12), s(0.08), s(0.08), s(0.1)]),
            &DMatrix::identity(2, 2),
        )
        .unwrap();
        let q = gaussian_saddle_check(&m, 40).unwrap();
        assert!(q.worst() < 1e-9, "{q:?}");
    }

    #[test]
    fn rejects_one_mode_tangent() {
        assert!(saddle_factors(&TangentMatrix::identity(1)).is_err());
    }
}
