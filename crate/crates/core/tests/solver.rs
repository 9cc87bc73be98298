mod common;

use nalgebra::DVector;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use handsoff::discretization::{build_problem, DiscreteProblem};
use handsoff::plant::{realize, InitialValueProblem, PlantSpec};
use handsoff::solver::{solve, Method, Regularizer, SolveError, SolverOptions};

fn integrator_problem(order: usize, horizon: f64, steps: usize) -> DiscreteProblem {
    let spec = PlantSpec::new(vec![Complex64::new(0.0, 0.0); order], vec![]);
    let ivp = InitialValueProblem::new(realize(&spec).unwrap(), DVector::from_element(order, 1.0), horizon, 1.0)
        .unwrap();
    build_problem(&ivp, steps).unwrap()
}

#[test]
fn small_instances_match_brute_force() {
    for steps in [2, 3, 4] {
        let problem = common::scalar_problem(-1.0, 1.0, 2.0, steps, 1.0);
        for method in Method::ALL {
            let reg = Regularizer::new(method, 0.5, problem.h()).unwrap();
            let sol = solve(&problem, &reg, &SolverOptions::default()).unwrap();
            let brute = common::brute_force_min(&problem, |u| reg.value(u));
            assert!(sol.converged, "{method} N={steps}");
            assert!(
                (sol.objective - brute).abs() <= 1e-6 * (1.0 + brute.abs()),
                "{method} N={steps}: {} vs {brute}",
                sol.objective
            );
        }
    }
}

#[test]
fn lasso_optimum_is_bang_off_bang() {
    let problem = integrator_problem(2, 5.0, 200);
    let reg = Regularizer::new(Method::Lasso, 0.0, problem.h()).unwrap();
    let sol = solve(&problem, &reg, &SolverOptions::default()).unwrap();
    assert!(sol.converged);
    let intermediate = sol.u.iter().filter(|v| v.abs() > 1e-6 && v.abs() < 1.0 - 1e-6).count();
    assert!(intermediate <= problem.dim(), "{intermediate} samples strictly inside (0, 1)");
}

/// Random feasible directions never improve the returned CLOT control.
#[test]
fn clot_solution_survives_feasible_perturbations() {
    let problem = integrator_problem(2, 6.0, 120);
    let reg = Regularizer::new(Method::Clot, 0.5, problem.h()).unwrap();
    let sol = solve(&problem, &reg, &SolverOptions::default()).unwrap();
    assert!(sol.converged);
    let phi = &problem.phi;
    // orthonormal basis of the null space of phi
    let svd = phi.transpose().svd(true, false);
    let q = svd.u.unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let best = reg.value(sol.u.as_slice());
    for _ in 0..50 {
        let mut d = DVector::from_fn(problem.steps(), |_, _| rng.gen_range(-1.0..1.0));
        d -= &q * (q.transpose() * &d);
        for t in [1e-2, 1e-3, 1e-4] {
            let cand = &sol.u + &d * t;
            if cand.iter().all(|v| v.abs() <= 1.0) {
                assert!(reg.value(cand.as_slice()) >= best - 1e-9, "step {t} improves the objective");
            }
        }
    }
}

#[test]
fn infeasibility_is_reported() {
    let problem = integrator_problem(2, 1.0, 100);
    let reg = Regularizer::new(Method::En, 0.1, problem.h()).unwrap();
    match solve(&problem, &reg, &SolverOptions::default()) {
        Err(SolveError::Infeasible { gap, .. }) => assert!(gap > 0.0),
        other => panic!("expected infeasibility, got {other:?}"),
    }
}

#[test]
fn equivalent_constraint_scaling_keeps_the_solution() {
    let problem = integrator_problem(3, 10.0, 150);
    for method in Method::ALL {
        let reg = Regularizer::new(method, 0.1, problem.h()).unwrap();
        let a = solve(&problem, &reg, &SolverOptions::default()).unwrap();
        let b = solve(&problem.scaled(1e3), &reg, &SolverOptions::default()).unwrap();
        assert!((a.objective - b.objective).abs() <= 1e-6 * (1.0 + a.objective), "{method}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn returned_controls_are_feasible(
        a in -1.0f64..0.5,
        xi in -1.0f64..1.0,
        lambda in 0.0f64..2.0,
        method in prop::sample::select(Method::ALL.to_vec()),
    ) {
        let problem = common::scalar_problem(a, xi, 3.0, 60, 1.0);
        let reg = Regularizer::new(method, lambda, problem.h()).unwrap();
        let sol = solve(&problem, &reg, &SolverOptions::default()).unwrap();
        prop_assert!(sol.u.iter().all(|v| v.abs() <= 1.0));
        prop_assert!(sol.terminal_residual <= 1e-8);
    }
}
