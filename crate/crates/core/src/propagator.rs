//! Semiclassical coherent-state propagator `K_xi(z2*, z1, T)`.

use num_complex::Complex64;

use crate::dynamics::{evolve, Block, TrajectoryRecord, Xi};
use crate::error::{Error, Result};
use crate::hamiltonian::{CoherentLabel, HamiltonianModel};
use crate::linalg::PhaseTracker;
use crate::shooting::{solve, BvpProblem, BvpSolution, ShootingSettings, FOCAL_THRESHOLD};

const MAX_REFINEMENTS: usize = 4;

/// One trajectory's term of the propagator sum.
#[derive(Clone, Debug)]
pub struct Contribution {
    pub value: Complex64,
    /// `det(block)^(-1/2)` on the branch continuous from `t_xi = 0`.
    pub prefactor: Complex64,
    /// Whole turns of `det(block)` relative to its principal argument; odd
    /// values mean the continued root is minus the principal one.
    pub branch_index: i64,
    pub residual: f64,
    pub action: Complex64,
    pub correction: Complex64,
    pub free_end: Vec<Complex64>,
}

#[derive(Clone, Debug)]
pub struct PropagatorValue {
    pub amplitude: Complex64,
    pub contributions: Vec<Contribution>,
}

/// `exp(-|z1|^2/2 - |z2|^2/2)`, summed over modes.
pub fn normalization(label1: &CoherentLabel, label2: &CoherentLabel) -> f64 {
    (-0.5 * (label1.norm_sqr() + label2.norm_sqr())).exp()
}

fn prefactor_block(xi: Xi) -> Block {
    match xi {
        Xi::Plus => Block::VV,
        Xi::Minus => Block::UU,
    }
}

/// Tracks `det(block)` along the recorded samples.
fn track_determinant(record: &TrajectoryRecord) -> Result<PhaseTracker> {
    let block = prefactor_block(record.xi);
    PhaseTracker::track(record.tangents.iter().map(|m| m.block_det(block)))
}

/// Continuous `det^(-1/2)`, refining the grid while consecutive samples jump
/// by a quarter turn or more.
fn continuous_prefactor(
    model: &HamiltonianModel,
    solution: &BvpSolution,
    settings: &ShootingSettings,
) -> Result<(Complex64, i64)> {
    let rec = &solution.trajectory;
    let end_det = rec.tangent.block_det(prefactor_block(rec.xi));
    if end_det.norm() < FOCAL_THRESHOLD {
        return Err(Error::FocalPoint { det: end_det.norm() });
    }
    let mut integrator = settings.integrator.pinned(model, &rec.start(), rec.duration);
    let mut attempt = track_determinant(rec);
    for _ in 0..MAX_REFINEMENTS {
        if attempt.is_ok() {
            break;
        }
        integrator = integrator.refined(2);
        let finer = evolve(model, &rec.start(), rec.duration, rec.xi, &integrator)?;
        attempt = track_determinant(&finer);
    }
    let tracker = attempt?;
    // keep the converged endpoint value and take only the branch from the tracker
    let principal = end_det.powf(-0.5);
    let continued = tracker.power(-0.5);
    let sign = if (continued - principal).norm() <= (continued + principal).norm() { 1.0 } else { -1.0 };
    Ok((principal * sign, tracker.winding()))
}

/// Sums the contributions of every boundary-value solution found from the
/// default guess plus `guesses`.
pub fn propagate(
    model: &HamiltonianModel,
    label1: &CoherentLabel,
    label2: &CoherentLabel,
    duration: f64,
    xi: Xi,
    guesses: &[Vec<Complex64>],
    settings: &ShootingSettings,
) -> Result<PropagatorValue> {
    if !label1.compatible_with(label2) {
        return Err(Error::InvalidParameter(
            "coherent labels must share hbar and widths per mode".into(),
        ));
    }
    if (label1.hbar() - model.hbar()).abs() > 1e-12 * model.hbar() {
        return Err(Error::InvalidParameter("label hbar differs from the model hbar".into()));
    }
    let z2_conj: Vec<Complex64> = label2.z().iter().map(|z| z.conj()).collect();
    let problem = BvpProblem::new(model, label1.z(), &z2_conj, duration, xi)?.with_guesses(guesses.to_vec());
    let solutions = solve(&problem, settings)?;
    let norm = normalization(label1, label2);
    let i_over_hbar = Complex64::new(0.0, 1.0 / model.hbar());
    let mut contributions = Vec::with_capacity(solutions.len());
    for s in &solutions {
        let (prefactor, branch_index) = continuous_prefactor(model, s, settings)?;
        let rec = &s.trajectory;
        let value = prefactor * (i_over_hbar * (rec.action + rec.correction)).exp() * norm;
        contributions.push(Contribution {
            value,
            prefactor,
            branch_index,
            residual: s.residual,
            action: rec.action,
            correction: rec.correction,
            free_end: s.free_end.clone(),
        });
    }
    Ok(PropagatorValue {
        amplitude: contributions.iter().map(|c| c.value).sum(),
        contributions,
    })
}

/// Closed-form harmonic propagator
/// `exp(-i omega xi T/2) exp(-|z1|^2/2 - |z2|^2/2) exp(z1 conj(z2) exp(-i omega xi T))`.
pub fn exact_ho_propagator(
    omega: f64,
    label1: &CoherentLabel,
    label2: &CoherentLabel,
    duration: f64,
    xi: Xi,
) -> Result<Complex64> {
    if label1.n_modes() != 1 || label2.n_modes() != 1 {
        return Err(Error::InvalidParameter("the harmonic propagator is single-mode".into()));
    }
    let phase = omega * xi.sign() * duration;
    let (z1, z2) = (label1.z()[0], label2.z()[0]);
    Ok(Complex64::from_polar(normalization(label1, label2), -phase / 2.0)
        * (z1 * z2.conj() * Complex64::from_polar(1.0, -phase)).exp())
}

/// `|K_-(z2, z1, T) - conj(K_+(z1, z2, T))|`, both sides semiclassical.
pub fn conjugation_check(
    model: &HamiltonianModel,
    label1: &CoherentLabel,
    label2: &CoherentLabel,
    duration: f64,
    settings: &ShootingSettings,
) -> Result<f64> {
    let forward = propagate(model, label1, label2, duration, Xi::Plus, &[], settings)?;
    let backward = propagate(model, label2, label1, duration, Xi::Minus, &[], settings)?;
    Ok((backward.amplitude - forward.amplitude.conj()).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{build_harmonic, build_kerr_pair};
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn label(z: Complex64) -> CoherentLabel {
        CoherentLabel::new(&[z], 1.0).unwrap()
    }

    #[test]
    fn vacuum_half_period() {
        let h = build_harmonic(1.0, 1.0).unwrap();
        let k = propagate(&h, &label(c(0.0, 0.0)), &label(c(0.0, 0.0)), PI, Xi::Plus, &[], &Default::default())
            .unwrap();
        assert!((k.amplitude - c(0.0, -1.0)).norm() < 1e-10, "{}", k.amplitude);
    }

    #[test]
    fn full_period_flips_root_sign() {
        let h = build_harmonic(1.0, 1.0).unwrap();
        let one = label(c(1.0, 0.0));
        let k = propagate(&h, &one, &one, 2.0 * PI, Xi::Plus, &[], &Default::default()).unwrap();
        assert!((k.amplitude + 1.0).norm() < 1e-10, "{}", k.amplitude);
        assert_eq!(k.contributions[0].branch_index, 1);
        assert!((k.contributions[0].prefactor + 1.0).norm() < 1e-10);
        let long = propagate(&h, &one, &one, 3.5 * PI, Xi::Plus, &[], &Default::default()).unwrap();
        let exact = exact_ho_propagator(1.0, &one, &one, 3.5 * PI, Xi::Plus).unwrap();
        assert!((long.amplitude - exact).norm() < 1e-10);
    }

    #[test]
    fn zero_duration_is_overlap() {
        let (h, _) = build_kerr_pair(1.0, 1.0, 0.1, 1.0).unwrap();
        let l1 = CoherentLabel::new(&[c(1.0, 0.5), c(-0.3, 0.2)], 1.0).unwrap();
        let l2 = CoherentLabel::new(&[c(0.7, -0.1), c(0.4, 0.4)], 1.0).unwrap();
        let k = propagate(&h, &l1, &l2, 0.0, Xi::Plus, &[], &Default::default()).unwrap();
        let overlap: Complex64 = l1.z().iter().zip(l2.z()).map(|(a, b)| a * b.conj()).sum();
        let expected = (overlap - 0.5 * (l1.norm_sqr() + l2.norm_sqr())).exp();
        assert!((k.amplitude - expected).norm() < 1e-14);
    }

    #[test]
    fn harmonic_conjugation() {
        let h = build_harmonic(1.3, 1.0).unwrap();
        let d = conjugation_check(&h, &label(c(0.5, -0.2)), &label(c(-0.4, 0.9)), 2.2, &Default::default()).unwrap();
        assert!(d < 1e-12, "{d:e}");
    }

    #[test]
    fn mismatched_labels_rejected() {
        let h = build_harmonic(1.0, 1.0).unwrap();
        let l1 = label(c(0.0, 0.0));
        let l2 = CoherentLabel::new(&[c(0.0, 0.0)], 2.0).unwrap();
        assert!(propagate(&h, &l1, &l2, 1.0, Xi::Plus, &[], &Default::default()).is_err());
    }
}
