mod common;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;

use handsoff::discretization::{build_problem, zoh_discretize};
use handsoff::expm::matrix_exponential;
use handsoff::plant::{
    controllability_rank, poly_from_roots, realize, InitialValueProblem, PlantSpec, StateSpace,
};
use handsoff::trajectory::{refined_terminal_state, simulate};

fn taylor_exp(m: &DMatrix<f64>, terms: usize) -> DMatrix<f64> {
    let n = m.nrows();
    let mut sum = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for k in 1..terms {
        term = &term * m / k as f64;
        sum += &term;
    }
    sum
}

/// Characteristic polynomial by the Faddeev-LeVerrier recursion, highest
/// power first.
fn char_poly(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut coeffs = vec![1.0];
    let mut m = DMatrix::<f64>::zeros(n, n);
    let mut c = 1.0;
    for k in 1..=n {
        m = a * &m + DMatrix::identity(n, n) * c;
        c = -(a * &m).trace() / k as f64;
        coeffs.push(c);
    }
    coeffs
}

/// Real roots, and complex ones together with their conjugates.
fn root_strategy() -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-2.0f64..1.0, 0.0f64..2.0, any::<bool>()), 1..4).prop_map(|v| {
        let mut roots = Vec::new();
        for (re, im, complex) in v {
            if complex {
                roots.push(Complex64::new(re, im));
                roots.push(Complex64::new(re, -im));
            } else {
                roots.push(Complex64::new(re, 0.0));
            }
        }
        roots
    })
}

fn lcg_matrix(n: usize, seed: u64, scale: f64) -> DMatrix<f64> {
    let mut s = seed;
    DMatrix::from_fn(n, n, |_, _| {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((s >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0) * scale
    })
}

#[test]
fn exponential_matches_taylor_series() {
    for (n, seed) in [(1, 1), (2, 2), (3, 3), (5, 4), (7, 5)] {
        let m = lcg_matrix(n, seed, 0.4);
        let e = matrix_exponential(&m).unwrap();
        let t = taylor_exp(&m, 60);
        assert!((&e - &t).amax() <= 1e-12, "n={n}: {}", (&e - &t).amax());
    }
}

#[test]
fn exponential_of_nilpotent_is_exact_polynomial() {
    let m = DMatrix::from_row_slice(3, 3, &[0.0, 2.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0]);
    let e = matrix_exponential(&m).unwrap();
    let want = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 0.0, 1.0, 3.0, 0.0, 0.0, 1.0]);
    assert!((e - want).amax() < 1e-14);
}

#[test]
fn exponential_inverse_identity_for_large_norm() {
    for seed in 10..15 {
        let m = lcg_matrix(4, seed, 3.0);
        let prod = matrix_exponential(&m).unwrap() * matrix_exponential(&(-&m)).unwrap();
        assert!((prod - DMatrix::identity(4, 4)).amax() < 1e-9);
    }
}

#[test]
fn terminal_map_matches_forward_simulation() {
    let spec = PlantSpec::new(
        vec![Complex64::new(-0.025, 1.0), Complex64::new(-0.025, -1.0), Complex64::new(0.0, 0.0)],
        vec![],
    );
    let ss = realize(&spec).unwrap();
    let xi = DVector::from_vec(vec![1.0, -0.5, 0.25]);
    let ivp = InitialValueProblem::new(ss.clone(), xi.clone(), 10.0, 1.0).unwrap();
    let problem = build_problem(&ivp, 400).unwrap();
    let u = DVector::from_fn(400, |m, _| (m as f64 * 0.05).sin() * 0.8);
    let traj = simulate(&problem.system, &xi, &u).unwrap();
    assert!((traj.terminal_state() - problem.terminal_state(&u)).amax() < 1e-8);
    let fine = refined_terminal_state(&ss, &xi, &u, problem.h(), 8).unwrap();
    assert!((fine - traj.terminal_state()).amax() < 1e-8);
}

#[test]
fn scalar_zoh_closed_form() {
    let ss = StateSpace::new(DMatrix::from_element(1, 1, -2.0), DVector::from_element(1, 1.0)).unwrap();
    let d = zoh_discretize(&ss, 0.3).unwrap();
    let ad = (-0.6f64).exp();
    assert!((d.ad[(0, 0)] - ad).abs() < 1e-15);
    assert!((d.bd[0] - (1.0 - ad) / 2.0).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn polynomial_vanishes_at_its_roots(roots in root_strategy()) {
        let p = poly_from_roots(&roots).unwrap();
        prop_assert_eq!(p.len(), roots.len() + 1);
        prop_assert_eq!(p[0], 1.0);
        for r in &roots {
            let v = p.iter().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * r + c);
            let scale: f64 = p.iter().map(|c| c.abs()).sum::<f64>() * (1.0 + r.norm()).powi(roots.len() as i32);
            prop_assert!(v.norm() <= 1e-12 * scale);
        }
    }

    #[test]
    fn realization_has_the_requested_poles(roots in root_strategy()) {
        let ss = realize(&PlantSpec::new(roots.clone(), vec![])).unwrap();
        let want = poly_from_roots(&roots).unwrap();
        let got = char_poly(ss.a());
        for (g, w) in got.iter().zip(&want) {
            prop_assert!((g - w).abs() <= 1e-9 * (1.0 + w.abs()));
        }
    }

    #[test]
    fn zeros_do_not_change_the_state_equation(roots in root_strategy(), z in -3.0f64..3.0) {
        prop_assume!(roots.len() >= 2);
        let plain = realize(&PlantSpec::new(roots.clone(), vec![])).unwrap();
        let with_zero = realize(&PlantSpec::new(roots, vec![Complex64::new(z, 0.0)])).unwrap();
        prop_assert_eq!(plain, with_zero);
    }

    #[test]
    fn companion_form_is_controllable(roots in root_strategy()) {
        let ss = realize(&PlantSpec::new(roots.clone(), vec![])).unwrap();
        prop_assert_eq!(controllability_rank(&ss), roots.len());
    }

    #[test]
    fn simulation_is_linear(
        seed in any::<u64>(),
        alpha in -2.0f64..2.0,
        beta in -2.0f64..2.0,
    ) {
        let spec = PlantSpec::new(vec![Complex64::new(0.0, 0.0), Complex64::new(-1.0, 0.0)], vec![]);
        let ivp = InitialValueProblem::new(realize(&spec).unwrap(), DVector::zeros(2), 5.0, 1.0).unwrap();
        let sys = build_problem(&ivp, 50).unwrap().system;
        let u1 = DVector::from_column_slice(lcg_matrix(50, seed, 1.0).column(0).as_slice());
        let u2 = DVector::from_column_slice(lcg_matrix(50, seed ^ 0x9e37, 1.0).column(1).as_slice());
        let x1 = DVector::from_vec(vec![1.0, 2.0]);
        let x2 = DVector::from_vec(vec![-0.5, 0.3]);
        let lhs = simulate(&sys, &(&x1 * alpha + &x2 * beta), &(&u1 * alpha + &u2 * beta)).unwrap();
        let a = simulate(&sys, &x1, &u1).unwrap();
        let b = simulate(&sys, &x2, &u2).unwrap();
        let rhs = &a.states * alpha + &b.states * beta;
        prop_assert!((lhs.states - rhs).amax() < 1e-10);
    }
}
