#![allow(dead_code)]

use std::sync::Arc;

use bregman_core::control::{control_distance, project_uad, Control, DualVariable};
use bregman_core::example::build_example;
use bregman_core::fem::{Discretization, FEFunction};
use bregman_core::mesh::TriangularMesh;
use bregman_core::subproblem::{estimator_b, solve_oracle_pg, ProblemData, SubproblemSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_p1(mesh: &Arc<TriangularMesh>, rng: &mut ChaCha8Rng, amplitude: f64) -> FEFunction {
    let coeffs = (0..mesh.num_nodes()).map(|_| rng.random_range(-amplitude..amplitude)).collect();
    FEFunction::from_coeffs(Arc::clone(mesh), coeffs).unwrap()
}

/// Problem data of the manufactured example on a uniform mesh.
pub fn example_problem(n_div: usize) -> ProblemData {
    let disc = Arc::new(Discretization::uniform(n_div).unwrap());
    build_example().problem(disc).unwrap()
}

/// Random dual variable, Dirichlet-conforming like an accumulated adjoint.
pub fn random_lambda(problem: &ProblemData, rng: &mut ChaCha8Rng, amplitude: f64) -> DualVariable {
    let mesh = problem.disc().mesh();
    let mut f = random_p1(mesh, rng, amplitude);
    for (c, &b) in f.coeffs_mut().iter_mut().zip(mesh.boundary_mask()) {
        if b {
            *c = 0.0;
        }
    }
    DualVariable::from_function(f)
}

/// Perturbation `P_Uad(ĝ + τ d)` of the minimiser's base field along a random
/// P1 direction `d`.
pub fn perturb(minimiser: &Control, rng: &mut ChaCha8Rng, tau: f64) -> Control {
    let d = random_p1(minimiser.mesh(), rng, 1.0);
    let mut g = minimiser.base().clone();
    g.axpy(tau, &d).unwrap();
    project_uad(g, minimiser.bounds())
}

/// Ratios `‖u − û‖ / B(u)` for `count` perturbations with `τ` log-uniform in
/// `[1e-4, 1]`.
pub fn lemma_ratios(spec: &SubproblemSpec<'_>, minimiser: &Control, rng: &mut ChaCha8Rng, count: usize) -> Vec<f64> {
    let disc = spec.problem().disc();
    (0..count)
        .map(|_| {
            let tau = 10f64.powf(rng.random_range(-4.0..0.0));
            let u = perturb(minimiser, rng, tau);
            let b = estimator_b(spec, &u).unwrap();
            let d = control_distance(disc, &u, minimiser).unwrap();
            if b == 0.0 {
                assert!(d < 1e-12);
                0.0
            } else {
                d / b
            }
        })
        .collect()
}

/// Oracle minimiser at tolerance 1e-12.
pub fn oracle(spec: &SubproblemSpec<'_>) -> Control {
    let r = solve_oracle_pg(spec, 1e-12).unwrap();
    assert!(r.converged);
    r.u
}
