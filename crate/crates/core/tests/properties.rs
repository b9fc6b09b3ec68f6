use mixedflow::constitutive::{flux, mu, solve_local_stress, LocalStressProblem};
use mixedflow::prelude::*;
use mixedflow::tensor::SymTensor;
use proptest::prelude::*;

fn tensor() -> impl Strategy<Value = SymTensor> {
    (-50.0..50.0f64, -50.0..50.0f64, -50.0..50.0f64).prop_map(|(a, b, c)| SymTensor::new(a, b, c))
}

fn disc(level: u32) -> Discretization {
    Discretization::new(build_mesh(MeshSpec::new(Domain::UnitSquare, level).unwrap())).unwrap()
}

proptest! {
    #[test]
    fn flux_is_monotone_and_one_lipschitz(s in tensor(), t in tensor()) {
        let (fs, ft) = (flux(&s), flux(&t));
        let d = s - t;
        prop_assert!((fs - ft).dot(&d) >= -1e-12 * d.norm().powi(2).max(1.0));
        prop_assert!((fs - ft).norm() <= d.norm() * (1.0 + 1e-12) + 1e-14);
    }

    #[test]
    fn mu_is_positive_and_bounded(s in 0.0..1e6f64) {
        let m = mu(s);
        prop_assert!(m > 0.0 && m <= 1.0);
        prop_assert!(m * s < 1.0);
    }

    #[test]
    fn frobenius_triangle_inequality(s in tensor(), t in tensor()) {
        prop_assert!((s + t).norm() <= s.norm() + t.norm() + 1e-12);
        prop_assert!(s.dot(&t).abs() <= s.norm() * t.norm() * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn rates_of_geometric_sequences(e0 in 1e-6..1e2f64, r in 0.5..3.0f64) {
        let errs: Vec<f64> = (0..4).map(|k| e0 * 2f64.powf(-r * k as f64)).collect();
        for got in convergence_rate(&errs).unwrap() {
            prop_assert!((got - r).abs() < 1e-10);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn local_stress_solve_converges(
        seed in prop::array::uniform27(-20.0..20.0f64),
        a in 0.1..10.0f64,
        b in 0.0..10.0f64,
    ) {
        let d = disc(2);
        let elem = &d.kernel.stress;
        let tol = 1e-10;
        let (t, info) = solve_local_stress(elem, &LocalStressProblem { a, b, rhs: &seed }, &[0.0; 27], tol).unwrap();
        prop_assert!(info.residual <= tol);
        // pointwise sanity: the element L2 norm of T is bounded by |rhs|_* / a
        prop_assert!(elem.l2_norm_sq(&t).sqrt() <= elem.dual_norm(&seed) / a * (1.0 + 1e-8) + 1e-12);
    }

    #[test]
    fn errors_satisfy_triangle_inequality(shift in -5.0..5.0f64, salt in 0usize..1000, other in 0usize..1000) {
        let d = disc(1);
        let case = ManufacturedCase::new(CaseId::Case1, ConstitutiveModel::new(1.0, 1.0).unwrap());
        let state = |salt: usize| {
            let mut s = FlowState::zeros(&d.spaces);
            for (k, v) in [&mut s.t, &mut s.u, &mut s.p].into_iter().enumerate() {
                for (i, x) in v.iter_mut().enumerate() {
                    *x = (((i + salt) * (7 + k)) % 13) as f64 / 13.0 - 0.5;
                }
            }
            s
        };
        let (a, b) = (state(salt), state(other));
        let (ea, eb) = (compute_errors(&d, &a, &case).unwrap(), compute_errors(&d, &b, &case).unwrap());
        let diff = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(a, b)| a - b).collect() };
        // the Frobenius norm dominates the component norm used for err_T
        let dt = d.stress_norm(&diff(&a.t, &b.t));
        let du = d.velocity_grad_norm(&diff(&a.u, &b.u));
        let dp = d.pressure_norm(&diff(&a.p, &b.p));
        prop_assert!((ea.err_t - eb.err_t).abs() <= dt + 1e-12);
        prop_assert!((ea.err_u - eb.err_u).abs() <= du + 1e-12);
        prop_assert!((ea.err_p - eb.err_p).abs() <= dp + 1e-12);
        // adding a constant to p_h leaves err_p unchanged
        let mut shifted = a.clone();
        shifted.p.iter_mut().for_each(|p| *p += shift);
        prop_assert!((compute_errors(&d, &shifted, &case).unwrap().err_p - ea.err_p).abs() < 1e-10);
    }
}

#[test]
fn velocity_interpolant_error_is_small() {
    let d = disc(5);
    let case = ManufacturedCase::new(CaseId::Case1, ConstitutiveModel::new(1.0, 0.0).unwrap());
    let mut s = FlowState::zeros(&d.spaces);
    s.u = d.spaces.interpolate_velocity(|x| case.velocity(x));
    let e = compute_errors(&d, &s, &case).unwrap();
    assert!(e.err_u < 2e-3, "{e:?}");
}
