mod common;

use std::sync::Arc;

use bregman_core::control::{control_distance, project_uad, DualVariable};
use bregman_core::fem::{Discretization, FEFunction};
use bregman_core::field::ScalarField;
use bregman_core::example::build_example;
use bregman_core::subproblem::{
    estimator_b, solve_oracle_pg, solve_oracle_pg_from, solve_ssn, subproblem_objective, ProblemData,
    SubproblemSpec,
};
use common::{example_problem, lemma_ratios, oracle, random_lambda, random_p1, rng};
use rand::Rng;

#[test]
fn ssn_matches_oracle_on_example_data() {
    let problem = example_problem(8);
    let lambda = DualVariable::zero(Arc::clone(problem.disc().mesh()));
    let spec = SubproblemSpec::new(&problem, 0.1, &lambda).unwrap();
    let ssn = solve_ssn(&spec, 1e-12, 50).unwrap();
    assert!(ssn.converged);
    let u_hat = oracle(&spec);
    assert!(control_distance(problem.disc(), &ssn.u, &u_hat).unwrap() <= 1e-8);
}

#[test]
fn ssn_matches_oracle_with_random_dual() {
    let problem = example_problem(8);
    let mut r = rng(101);
    for _ in 0..5 {
        let alpha = r.random_range(0.05..1.0);
        let lambda = random_lambda(&problem, &mut r, 2.0);
        let spec = SubproblemSpec::new(&problem, alpha, &lambda).unwrap();
        let ssn = solve_ssn(&spec, 1e-12, 50).unwrap();
        let pg = solve_oracle_pg(&spec, 1e-12).unwrap();
        let d = control_distance(problem.disc(), &ssn.u, &pg.u).unwrap();
        assert!(d <= 1e-8, "alpha {alpha}: {d}");
    }
}

#[test]
fn certificate_is_reproducible() {
    let problem = example_problem(10);
    let mut r = rng(7);
    let lambda = random_lambda(&problem, &mut r, 1.0);
    let spec = SubproblemSpec::new(&problem, 0.2, &lambda).unwrap();
    for eps in [1e-2, 1e-6, 1e-10] {
        let res = solve_ssn(&spec, eps, 50).unwrap();
        assert!(res.converged && res.b_value <= eps);
        let again = estimator_b(&spec, &res.u).unwrap();
        assert!((again - res.b_value).abs() <= 1e-12 * res.b_value.max(f64::MIN_POSITIVE));
    }
}

#[test]
fn looser_accuracy_never_needs_more_steps() {
    let problem = example_problem(12);
    let mut r = rng(19);
    let lambda = random_lambda(&problem, &mut r, 3.0);
    let spec = SubproblemSpec::new(&problem, 0.1, &lambda).unwrap();
    let loose = solve_ssn(&spec, 1e-2, 50).unwrap();
    let tight = solve_ssn(&spec, 1e-6, 50).unwrap();
    assert!(loose.newton_iterations <= tight.newton_iterations);
    assert!(loose.b_value <= 1e-2 && tight.b_value <= 1e-6);
}

#[test]
fn ssn_terminates_quickly_on_example_configurations() {
    for n in [8, 16, 32, 64] {
        let problem = example_problem(n);
        let lambda = DualVariable::zero(Arc::clone(problem.disc().mesh()));
        for alpha in [0.1, 0.01] {
            let spec = SubproblemSpec::new(&problem, alpha, &lambda).unwrap();
            let res = solve_ssn(&spec, 1e-10, 30).unwrap();
            assert!(res.converged, "n={n} alpha={alpha}: B={}", res.b_value);
        }
    }
}

#[test]
fn minimiser_beats_random_feasible_controls() {
    let problem = example_problem(8);
    let mut r = rng(23);
    let lambda = random_lambda(&problem, &mut r, 1.0);
    let alpha = 0.3;
    let spec = SubproblemSpec::new(&problem, alpha, &lambda).unwrap();
    let u_hat = oracle(&spec);
    let best = subproblem_objective(&spec, &u_hat).unwrap();
    for _ in 0..100 {
        let u = project_uad(random_p1(problem.disc().mesh(), &mut r, 2.0), problem.bounds());
        let value = subproblem_objective(&spec, &u).unwrap();
        assert!(best <= value);
        // Strong convexity with modulus α.
        let d = control_distance(problem.disc(), &u, &u_hat).unwrap();
        assert!(value - best >= 0.5 * alpha * d * d - 1e-10);
    }
}

#[test]
fn oracle_certificate_shrinks_with_tolerance() {
    let problem = example_problem(8);
    let mut r = rng(31);
    let lambda = random_lambda(&problem, &mut r, 1.0);
    let spec = SubproblemSpec::new(&problem, 0.5, &lambda).unwrap();
    let bs: Vec<f64> = [1e-4, 1e-8, 1e-12]
        .iter()
        .map(|&tol| solve_oracle_pg(&spec, tol).unwrap().b_value)
        .collect();
    assert!(bs[0] > bs[1] && bs[1] >= bs[2], "{bs:?}");
    assert!(bs[2] <= 1e-8);
}

#[test]
fn oracle_descends_and_stops_at_a_fixed_point() {
    let problem = example_problem(6);
    let mut r = rng(37);
    let lambda = random_lambda(&problem, &mut r, 1.0);
    let spec = SubproblemSpec::new(&problem, 0.05, &lambda).unwrap();
    let res = solve_oracle_pg(&spec, 1e-12).unwrap();
    let objectives: Vec<f64> = res.diagnostics.steps.iter().map(|s| s.objective).collect();
    assert!(objectives.windows(2).all(|w| w[1] <= w[0] + 1e-15));
    let restarted = solve_oracle_pg_from(&spec, 1e-10, Some(&res.u)).unwrap();
    assert_eq!(restarted.newton_iterations, 0);
}

#[test]
fn estimator_bounds_distance_to_minimiser() {
    // Fit c on one sample, hold it fixed for an independent one.
    for n in [8, 16] {
        let problem = example_problem(n);
        let mut r = rng(41 + n as u64);
        let lambda = random_lambda(&problem, &mut r, 1.0);
        let spec = SubproblemSpec::new(&problem, 0.1, &lambda).unwrap();
        let u_hat = oracle(&spec);
        assert!(estimator_b(&spec, &u_hat).unwrap() <= 1e-8);
        let c_fit = lemma_ratios(&spec, &u_hat, &mut r, 50).into_iter().fold(0.0, f64::max);
        assert!(c_fit.is_finite() && c_fit > 0.0);
        let held_out = lemma_ratios(&spec, &u_hat, &mut r, 50);
        assert!(held_out.iter().all(|&q| q <= 1.5 * c_fit), "n={n}: c_fit {c_fit}");
    }
}

#[test]
fn tiny_regularisation_approaches_the_bang_bang_control() {
    let t = build_example();
    let mut prev = f64::INFINITY;
    for n in [8, 16, 32] {
        let disc = Arc::new(Discretization::uniform(n).unwrap());
        let problem = t.problem(Arc::clone(&disc)).unwrap();
        let lambda = DualVariable::zero(Arc::clone(disc.mesh()));
        let spec = SubproblemSpec::new(&problem, 1e-5, &lambda).unwrap();
        let res = solve_ssn(&spec, 1e-8, 50).unwrap();
        assert!(res.converged);
        let uq = res.u.quad_values(&disc).unwrap();
        let truth = disc.sample(&t.control());
        let l1: f64 = uq
            .iter()
            .zip(&truth)
            .zip(disc.quad_weights())
            .map(|((a, b), w)| w * (a - b).abs())
            .sum();
        assert!(l1 < prev, "n={n}: {l1} >= {prev}");
        prev = l1;
    }
}

#[test]
fn smooth_interior_control_is_recovered_in_one_step() {
    // z = S_h u_feas with |u_feas| < 1, λ = 0: the constraints are inactive.
    let disc = Arc::new(Discretization::uniform(10).unwrap());
    let mesh = Arc::clone(disc.mesh());
    let u_feas = FEFunction::interpolate(Arc::clone(&mesh), &|p: [f64; 2]| {
        0.5 * (std::f64::consts::PI * p[0]).sin() * p[1]
    });
    let target = disc.sh_quad(&disc.sample(&u_feas));
    let problem = ProblemData::from_quad_target(Arc::clone(&disc), target, build_example().bounds()).unwrap();
    let lambda = DualVariable::zero(Arc::clone(&mesh));
    let spec = SubproblemSpec::new(&problem, 1.0, &lambda).unwrap();
    let res = solve_ssn(&spec, 1e-10, 5).unwrap();
    assert!(res.converged && res.newton_iterations <= 2);
    assert!(res.u.eval([0.5, 0.5]).abs() < 1.0);
}
