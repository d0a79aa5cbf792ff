use num_complex::Complex64;
use proptest::prelude::*;
use scprop::hamiltonian::{
    build_harmonic, build_kerr_pair, phase_to_uv, uv_to_phase, CoherentLabel, HamiltonianModel, Monomial, PhasePoint,
};
use scprop::suite::mixed_test_model;

fn complex(radius: f64) -> impl Strategy<Value = Complex64> {
    (-radius..radius, -radius..radius).prop_map(|(re, im)| Complex64::new(re, im))
}

fn models() -> Vec<HamiltonianModel> {
    vec![
        build_kerr_pair(1.0, 1.3, 0.2, 1.0).unwrap().0,
        mixed_test_model(1.0).unwrap(),
        mixed_test_model(0.37).unwrap(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn energy_is_real_on_the_real_manifold(zx in complex(2.0), zy in complex(2.0)) {
        let p = PhasePoint::real(&[zx, zy]).unwrap();
        for m in models() {
            let h = m.eval(&p).unwrap();
            prop_assert!(h.im.abs() <= 1e-12 * (1.0 + h.norm()), "H = {h}");
        }
        let ho = build_harmonic(1.7, 1.0).unwrap();
        let h = ho.eval(&PhasePoint::real(&[zx]).unwrap()).unwrap();
        prop_assert!(h.im.abs() <= 1e-12 * (1.0 + h.norm()));
    }

    #[test]
    fn gradient_matches_central_differences(
        ux in complex(1.5), uy in complex(1.5), vx in complex(1.5), vy in complex(1.5)
    ) {
        const STEP: f64 = 1e-6;
        let m = mixed_test_model(1.0).unwrap();
        let (u, v) = ([ux, uy], [vx, vy]);
        let g = m.gradient(&PhasePoint::new(&u, &v).unwrap()).unwrap();
        for r in 0..2 {
            let shifted = |du: f64, dv: f64| {
                let (mut u, mut v) = (u, v);
                u[r] += du;
                v[r] += dv;
                m.eval(&PhasePoint::new(&u, &v).unwrap()).unwrap()
            };
            let fd_u = (shifted(STEP, 0.0) - shifted(-STEP, 0.0)) / (2.0 * STEP);
            let fd_v = (shifted(0.0, STEP) - shifted(0.0, -STEP)) / (2.0 * STEP);
            prop_assert!((fd_u - g.du[r]).norm() <= 1e-6 * g.du[r].norm().max(1.0));
            prop_assert!((fd_v - g.dv[r]).norm() <= 1e-6 * g.dv[r].norm().max(1.0));
        }
    }

    #[test]
    fn hessian_is_symmetric_in_each_block(
        ux in complex(1.5), uy in complex(1.5), vx in complex(1.5), vy in complex(1.5)
    ) {
        let m = mixed_test_model(1.0).unwrap();
        let h = m.hessian(&PhasePoint::new(&[ux, uy], &[vx, vy]).unwrap()).unwrap();
        prop_assert_eq!(h.uu[0][1], h.uu[1][0]);
        prop_assert_eq!(h.vv[0][1], h.vv[1][0]);
    }

    #[test]
    fn coordinate_round_trip(
        q in proptest::collection::vec(complex(3.0), 2),
        p in proptest::collection::vec(complex(3.0), 2),
        b in proptest::collection::vec(0.3f64..3.0, 2),
        hbar in 0.1f64..3.0,
    ) {
        let label = CoherentLabel::with_position_widths(&[Complex64::new(0.0, 0.0); 2], &b, hbar).unwrap();
        let (q2, p2) = uv_to_phase(&phase_to_uv(&q, &p, &label).unwrap(), &label).unwrap();
        for k in 0..2 {
            prop_assert!((q2[k] - q[k]).norm() <= 1e-12 * (1.0 + q[k].norm()));
            prop_assert!((p2[k] - p[k]).norm() <= 1e-12 * (1.0 + p[k].norm()));
        }
    }

    #[test]
    fn mode_swap_relabels_the_energy(ux in complex(1.5), uy in complex(1.5), vx in complex(1.5), vy in complex(1.5)) {
        let m = mixed_test_model(1.0).unwrap();
        let p = PhasePoint::new(&[ux, uy], &[vx, vy]).unwrap();
        let a = m.eval(&p).unwrap();
        let b = m.mode_swapped().eval(&p.mode_swapped()).unwrap();
        prop_assert!((a - b).norm() <= 1e-13 * (1.0 + a.norm()));
    }
}

#[test]
fn real_coherent_point_has_conjugate_coordinates() {
    let z = [Complex64::new(0.3, -1.1), Complex64::new(2.0, 0.5)];
    let label = CoherentLabel::new(&z, 1.0).unwrap();
    let (q, p) = uv_to_phase(&PhasePoint::real(&z).unwrap(), &label).unwrap();
    for k in 0..2 {
        assert!(q[k].im.abs() < 1e-15 && p[k].im.abs() < 1e-15);
    }
}

#[test]
fn harmonic_ground_energy() {
    let ho = build_harmonic(2.0, 0.5).unwrap();
    let zero = PhasePoint::real(&[Complex64::new(0.0, 0.0)]).unwrap();
    assert!((ho.eval(&zero).unwrap().re - 0.5).abs() < 1e-15);
}

#[test]
fn model_validation() {
    let c = |re| Complex64::new(re, 0.0);
    let sextic = vec![Monomial::new(c(1.0), [(8, 8), (0, 0)])];
    assert!(HamiltonianModel::new(sextic.clone(), 1, 1.0).is_err());
    assert!(HamiltonianModel::with_max_degree(sextic, 1, 1.0, 16).is_ok());
    assert!(HamiltonianModel::with_max_degree(vec![], 1, 1.0, 17).is_err());
    assert!(HamiltonianModel::new(vec![], 3, 1.0).is_err());
    assert!(HamiltonianModel::new(vec![], 1, 0.0).is_err());
    let one_mode_using_y = vec![Monomial::new(c(1.0), [(0, 0), (1, 1)])];
    assert!(HamiltonianModel::new(one_mode_using_y, 1, 1.0).is_err());

    let lopsided = HamiltonianModel::new(vec![Monomial::new(c(1.0), [(2, 0), (0, 0)])], 1, 1.0).unwrap();
    assert!(lopsided.hermiticity_check().is_err());
    assert!(mixed_test_model(1.0).unwrap().hermiticity_check().is_ok());

    let decoupled = build_kerr_pair(1.0, 1.0, 0.0, 1.0).unwrap().0;
    assert!(decoupled.is_decoupled());
    assert!(!build_kerr_pair(1.0, 1.0, 0.1, 1.0).unwrap().0.is_decoupled());
}

#[test]
fn mode_count_mismatch_is_an_error() {
    let m = mixed_test_model(1.0).unwrap();
    let one = PhasePoint::real(&[Complex64::new(1.0, 0.0)]).unwrap();
    assert!(m.eval(&one).is_err());
}
