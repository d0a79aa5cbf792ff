use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;
use scprop::dynamics::Xi;
use scprop::hamiltonian::{CoherentLabel, KerrPairModel};
use scprop::oracle::{
    coherent_fock, coherent_pair, default_cutoff, evolve_kerr, exact_diagonal_propagator, kerr_exact_purity_sum,
    poisson_tail, poisson_weights, reduced_density, reduced_purity, short_time_purity,
};
use scprop::propagator::exact_ho_propagator;
use scprop::Error;

fn complex(radius: f64) -> impl Strategy<Value = Complex64> {
    (-radius..radius, -radius..radius).prop_map(|(re, im)| Complex64::new(re, im))
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn purity_is_periodic_in_two_pi_over_gamma(
        zx in complex(1.5), zy in complex(1.5), gamma in 0.05f64..1.0, t in 0.0f64..20.0
    ) {
        let a = kerr_exact_purity_sum(zx, zy, gamma, t, None).unwrap();
        let b = kerr_exact_purity_sum(zx, zy, gamma, t + 2.0 * PI / gamma, None).unwrap();
        prop_assert!((a - b).abs() <= 1e-8);
        let full = kerr_exact_purity_sum(zx, zy, gamma, 2.0 * PI / gamma, None).unwrap();
        prop_assert!((full - 1.0).abs() <= 1e-8);
    }

    #[test]
    fn purity_ignores_extra_levels(zx in complex(1.5), zy in complex(1.5), gamma in 0.05f64..1.0, t in 0.0f64..20.0) {
        let n = default_cutoff(zx.norm_sqr());
        let a = kerr_exact_purity_sum(zx, zy, gamma, t, Some(n)).unwrap();
        let b = kerr_exact_purity_sum(zx, zy, gamma, t, Some(n + 5)).unwrap();
        prop_assert!((a - b).abs() <= 1e-9);
    }

    #[test]
    fn state_route_matches_closed_sum(zx in complex(1.2), zy in complex(1.2), gamma in 0.05f64..0.8, t in 0.0f64..12.0) {
        let kerr = KerrPairModel::new(1.0, 1.3, gamma, 1.0).unwrap();
        let state = evolve_kerr(&coherent_pair(&[zx, zy], None).unwrap(), &kerr, t).unwrap();
        let sum = kerr_exact_purity_sum(zx, zy, kerr.gamma, t, None).unwrap();
        prop_assert!((reduced_purity(&state).unwrap() - sum).abs() <= 1e-8);
    }

    #[test]
    fn reduced_density_is_a_state(zx in complex(1.2), zy in complex(1.2), gamma in 0.05f64..0.8, t in 0.0f64..10.0) {
        let kerr = KerrPairModel::new(1.0, 1.0, gamma, 1.0).unwrap();
        let rho = reduced_density(&evolve_kerr(&coherent_pair(&[zx, zy], None).unwrap(), &kerr, t).unwrap()).unwrap();
        prop_assert!(rho.hermiticity_defect() <= 1e-12);
        prop_assert!((rho.trace() - 1.0).norm() <= 1e-12);
        prop_assert!(rho.eigenvalues().iter().all(|&e| e >= -1e-12));
        prop_assert!(rho.purity() <= 1.0 + 1e-12);
    }

    #[test]
    fn harmonic_fock_propagator_matches_closed_form(
        z1 in complex(1.5), z2 in complex(1.5), t in 0.0f64..10.0, omega in 0.5f64..2.0
    ) {
        let (l1, l2) = (CoherentLabel::new(&[z1], 1.0).unwrap(), CoherentLabel::new(&[z2], 1.0).unwrap());
        for xi in [Xi::Plus, Xi::Minus] {
            let fock = exact_diagonal_propagator(|n, _| omega * (n as f64 + 0.5), &l1, &l2, t, xi, None).unwrap();
            let closed = exact_ho_propagator(omega, &l1, &l2, t, xi).unwrap();
            prop_assert!((fock - closed).norm() <= 1e-12);
        }
    }
}

#[test]
fn recoherence_at_full_period() {
    for gamma in [0.1, 0.37, 1.0] {
        let p = kerr_exact_purity_sum(c(1.0, 0.0), c(1.0, 0.0), gamma, 2.0 * PI / gamma, None).unwrap();
        assert!((p - 1.0).abs() <= 1e-8);
    }
}

/// At `Gamma T = pi` only the parity of `n - m` matters, which for two
/// Poisson(1) variables gives `(1 + 2 e^-4 - e^-8) / 2`.
#[test]
fn half_period_parity_value() {
    let p = kerr_exact_purity_sum(c(1.0, 0.0), c(1.0, 0.0), 1.0, PI, None).unwrap();
    let parity = (1.0 + 2.0 * (-4.0f64).exp() - (-8.0f64).exp()) / 2.0;
    assert!((p - parity).abs() <= 1e-12, "{p} vs {parity}");
}

#[test]
fn half_period_reference_value() {
    let p = kerr_exact_purity_sum(c(1.0, 0.0), c(1.0, 0.0), 1.0, PI, None).unwrap();
    assert!((p - 0.575586).abs() <= 1e-6, "P = {p}");
}

#[test]
fn short_time_oracle_is_linear_in_x() {
    let z0 = [c(1.0, 0.0), c(1.0, 0.0)];
    assert!((short_time_purity(&z0, 0.1, 0.1) - 0.9998).abs() < 1e-15);
}

#[test]
fn coherent_states_are_normalized() {
    let z = c(1.3, -0.4);
    let n = default_cutoff(z.norm_sqr());
    assert!((coherent_fock(z, n).unwrap().norm() - 1.0).abs() < 1e-12);
    let w = poisson_weights(2.0, 40);
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    assert!(poisson_tail(2.0, 40) < 1e-20);
    assert_eq!(poisson_weights(0.0, 3), vec![1.0, 0.0, 0.0, 0.0]);
}

#[test]
fn small_cutoff_is_reported() {
    let err = kerr_exact_purity_sum(c(3.0, 0.0), c(1.0, 0.0), 0.1, 1.0, Some(4)).unwrap_err();
    assert!(matches!(err, Error::InsufficientCutoff { n_cut: 4, .. }), "{err}");
}
