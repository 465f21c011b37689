//! Property tests over random boundary data, matrices and surgery parameters.

use proptest::prelude::*;
use specsurg::jsonfmt;
use specsurg::matops::{c, det, eye, op_norm, penrose_residuals, pinv, CMat};
use specsurg::potential::{BoundaryCondition, Potential, Problem};
use specsurg::solver::{jost_matrix, scattering_matrix, SolverConfig};
use specsurg::spectra::{find_bound_states, SearchOptions};
use specsurg::surgery::{self, SurgeryPlan};

fn cfg() -> SolverConfig {
    SolverConfig::default()
}

fn cmat(n: usize) -> impl Strategy<Value = CMat> {
    prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), n * n)
        .prop_map(move |v| CMat::from_iterator(n, n, v.into_iter().map(|(a, b)| c(a, b))))
}

/// `A = U cos Θ`, `B = U sin Θ` with `U` unitary is a legal pair.
fn boundary(n: usize) -> impl Strategy<Value = BoundaryCondition> {
    (cmat(n), prop::collection::vec(0.0f64..std::f64::consts::PI, n)).prop_map(move |(m, th)| {
        let u = m.qr().q();
        let cos = CMat::from_diagonal(&th.iter().map(|t| c(t.cos(), 0.0)).collect::<Vec<_>>().into());
        let sin = CMat::from_diagonal(&th.iter().map(|t| c(t.sin(), 0.0)).collect::<Vec<_>>().into());
        BoundaryCondition::new(&u * cos, &u * sin).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn pinv_satisfies_penrose(m in cmat(3)) {
        let mp = pinv(&m, None).unwrap();
        let scale = op_norm(&m).max(1.0).powi(2);
        for r in penrose_residuals(&m, &mp) {
            prop_assert!(r < 1e-10 * scale);
        }
    }

    #[test]
    fn legal_boundaries_stay_legal(bc in boundary(2)) {
        prop_assert!(bc.is_legal());
    }

    #[test]
    fn problem_json_round_trips(bc in boundary(2)) {
        let p = Problem::new(Potential::free(2), bc).unwrap();
        let text = jsonfmt::to_string(&p.to_json()).unwrap();
        let back = Problem::from_json(&serde_json::from_str(&text).unwrap()).unwrap();
        prop_assert_eq!(jsonfmt::to_string(&back.to_json()).unwrap(), text);
    }

    #[test]
    fn free_scattering_is_unitary_and_symmetric(bc in boundary(2), k in 0.1f64..10.0) {
        let p = Problem::new(Potential::free(2), bc).unwrap();
        let s = scattering_matrix(&p, k, &cfg()).unwrap();
        let sm = scattering_matrix(&p, -k, &cfg()).unwrap();
        prop_assert!(op_norm(&(s.adjoint() * &s - eye(2))) < 1e-7);
        prop_assert!(op_norm(&(sm * &s - eye(2))) < 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, ..ProptestConfig::default() })]

    #[test]
    fn scalar_add_recovers_kappa_and_c(kappa in 0.3f64..2.0, cval in 0.5f64..5.0) {
        let p = Problem::free_dirichlet(1);
        let r = surgery::apply(&p, &SurgeryPlan::add(kappa, eye(1) * c(cval, 0.0)), &cfg()).unwrap();
        prop_assert!(r.diagnostics.gl_residual < 1e-8);
        let spec = find_bound_states(&r.problem, &SearchOptions::default(), &cfg()).unwrap();
        prop_assert_eq!(spec.states.len(), 1);
        prop_assert!((spec.states[0].kappa - kappa).abs() < 1e-6);
        prop_assert!((spec.states[0].c[(0, 0)].re - cval).abs() < 1e-6 * cval);
        for k in [c(0.7, 0.3), c(2.0, 1.1)] {
            let want = r.jost_factor.det(k) * det(&jost_matrix(&p, k, &cfg()).unwrap().j);
            let got = det(&jost_matrix(&r.problem, k, &cfg()).unwrap().j);
            prop_assert!((got - want).norm() < 1e-6 * want.norm());
        }
    }
}
