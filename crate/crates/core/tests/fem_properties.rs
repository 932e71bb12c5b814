use std::f64::consts::PI;
use std::sync::Arc;

use bregman_core::control::{project_uad, BoxBounds};
use bregman_core::example::build_example;
use bregman_core::fem::{estimate_delta, l2_inner, Discretization, FEFunction};
use bregman_core::field::{Constant, Point, ScalarField};
use bregman_core::mesh::TriangularMesh;
use bregman_core::quadrature::QuadratureRule;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_p1(mesh: &Arc<TriangularMesh>, rng: &mut ChaCha8Rng, amplitude: f64) -> FEFunction {
    let coeffs = (0..mesh.num_nodes()).map(|_| rng.random_range(-amplitude..amplitude)).collect();
    FEFunction::from_coeffs(Arc::clone(mesh), coeffs).unwrap()
}

#[test]
fn self_adjointness_on_random_pairs() {
    let disc = Discretization::uniform(12).unwrap();
    let mesh = Arc::clone(disc.mesh());
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let f = random_p1(&mesh, &mut rng, 3.0);
        let g = random_p1(&mesh, &mut rng, 3.0);
        let sf = disc.apply_sh(&f).unwrap();
        let sg = disc.apply_sh_adjoint(&g).unwrap();
        let lhs = disc.l2_inner(&sf, &g);
        let rhs = disc.l2_inner(&f, &sg);
        assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()), "{lhs} vs {rhs}");
    }
}

#[test]
fn maximum_principle_for_nonnegative_sources() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n in [4, 9, 16] {
        let disc = Discretization::uniform(n).unwrap();
        let mesh = Arc::clone(disc.mesh());
        for _ in 0..10 {
            let mut f = random_p1(&mesh, &mut rng, 1.0);
            f.coeffs_mut().iter_mut().for_each(|c| *c = c.abs());
            let y = disc.apply_sh(&f).unwrap();
            assert!(y.coeffs().iter().all(|&v| v >= -1e-12));
        }
    }
}

#[test]
fn operator_norm_is_uniformly_bounded() {
    // ‖S‖ = 1/(2π²) on the unit square; the discrete operators stay below a
    // common bound across the family.
    let bound = 1.05 / (2.0 * PI * PI);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for n in [2, 4, 8, 16, 32] {
        let disc = Discretization::uniform(n).unwrap();
        for _ in 0..10 {
            let u: Vec<f64> = (0..disc.num_quad_points()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let ratio = disc.norm(&disc.sh_quad(&u)) / disc.norm(&u);
            assert!(ratio <= bound, "n={n}: {ratio}");
        }
        assert!(disc.operator_norm_estimate(50).unwrap() <= bound);
    }
}

#[test]
fn linearity_of_the_solution_operator() {
    let disc = Discretization::uniform(10).unwrap();
    let mesh = Arc::clone(disc.mesh());
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let f = random_p1(&mesh, &mut rng, 1.0);
    let g = random_p1(&mesh, &mut rng, 1.0);
    let (a, b) = (2.5, -0.75);
    let combo = |p: Point| a * f.eval(p) + b * g.eval(p);
    let lhs = disc.apply_sh(&combo).unwrap();
    let sf = disc.apply_sh(&f).unwrap();
    let sg = disc.apply_sh(&g).unwrap();
    for ((l, x), y) in lhs.coeffs().iter().zip(sf.coeffs()).zip(sg.coeffs()) {
        assert!((l - (a * x + b * y)).abs() < 1e-13);
    }
}

#[test]
fn adjoint_of_example_residual_is_dirichlet_conforming() {
    let t = build_example();
    let disc = Discretization::uniform(16).unwrap();
    let y = disc.apply_sh(&|p: Point| t.control().eval(p) + t.source().eval(p)).unwrap();
    let p = disc.apply_sh_adjoint(&|x: Point| t.target().eval(x) - y.eval(x)).unwrap();
    assert!(p.is_dirichlet_conforming(0.0));
    assert!(disc.apply_sh_adjoint(&Constant(0.0)).unwrap().max_abs() == 0.0);
}

#[test]
fn manufactured_state_converges_at_second_order() {
    let t = build_example();
    let mut errors = Vec::new();
    for n in [8, 16, 32, 64] {
        let disc = Discretization::uniform(n).unwrap();
        let y = disc.apply_sh(&t.state_laplacian()).unwrap();
        let err = disc
            .mesh()
            .nodes()
            .iter()
            .zip(y.coeffs())
            .map(|(&p, v)| (v - t.state().eval(p)).abs())
            .fold(0.0, f64::max);
        errors.push(err);
    }
    for w in errors.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!((1.9..=2.1).contains(&order), "order {order}, errors {errors:?}");
    }
}

#[test]
fn degree5_quadrature_of_clamped_fields_matches_degree10_oracle() {
    // Controls are clamps of smooth P1 fields, so kinks run along curves.
    let bounds = BoxBounds::new(-1.0, 1.0).unwrap();
    let oracle = QuadratureRule::collapsed_gauss(10);
    for n in [16, 32] {
        let mesh = Arc::new(TriangularMesh::new(n).unwrap());
        for (a, b) in [(3.0, 1.0), (5.0, 2.0), (1.5, 4.0)] {
            let g = |p: Point| a * (2.0 * PI * p[0]).sin() * (2.0 * PI * p[1]).sin();
            let h = |p: Point| b * (PI * p[0]).cos() * (3.0 * PI * p[1]).sin() + 0.3;
            let u = project_uad(FEFunction::interpolate(Arc::clone(&mesh), &g), bounds);
            let v = project_uad(FEFunction::interpolate(Arc::clone(&mesh), &h), bounds);
            let coarse = l2_inner(&mesh, &u, &v, &QuadratureRule::default());
            let fine = l2_inner(&mesh, &u, &v, &oracle);
            assert!((coarse - fine).abs() < 1e-4, "n={n}: {coarse} vs {fine}");
        }
    }
}

#[test]
fn sine_mode_integrals_against_high_order_oracle() {
    let mesh = TriangularMesh::new(16).unwrap();
    let s1 = |p: Point| (PI * p[0]).sin() * (PI * p[1]).sin();
    let s2 = |p: Point| (2.0 * PI * p[0]).sin() * (2.0 * PI * p[1]).sin();
    let oracle = QuadratureRule::collapsed_gauss(14);
    assert!((l2_inner(&mesh, &s1, &s1, &oracle) - 0.25).abs() < 1e-12);
    assert!(l2_inner(&mesh, &s1, &s2, &oracle).abs() < 1e-12);
    let rule = QuadratureRule::default();
    assert!((l2_inner(&mesh, &s1, &s1, &rule) - 0.25).abs() < 1e-6);
}

#[test]
fn delta_decreases_under_refinement() {
    let t = build_example();
    let reference = Discretization::uniform(64).unwrap();
    let mut prev = f64::INFINITY;
    for n in [4, 8, 16, 32] {
        let disc = Discretization::uniform(n).unwrap();
        let d = estimate_delta(&disc, &reference, &[&Constant(1.0)], &t.target()).unwrap();
        assert!(d < prev, "n={n}: {d} >= {prev}");
        prev = d;
    }
}

#[test]
fn stiffness_and_mass_are_symmetric() {
    let disc = Discretization::uniform(7).unwrap();
    assert!(disc.stiffness().is_symmetric(0.0));
    assert!(disc.mass().is_symmetric(0.0));
    assert!((disc.mass().total_sum() - 1.0).abs() < 1e-14);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn mesh_invariants(n in 2usize..40) {
        let mesh = TriangularMesh::new(n).unwrap();
        prop_assert_eq!(mesh.num_nodes(), (n + 1) * (n + 1));
        prop_assert_eq!(mesh.num_elements(), 2 * n * n);
        let h = 1.0 / n as f64;
        for e in 0..mesh.num_elements() {
            prop_assert!((mesh.signed_area(e) - 0.5 * h * h).abs() < 1e-15);
        }
        for (p, &b) in mesh.nodes().iter().zip(mesh.boundary_mask()) {
            let on = p[0] == 0.0 || p[0] == 1.0 || p[1] == 0.0 || p[1] == 1.0;
            prop_assert_eq!(on, b);
        }
    }

    #[test]
    fn solutions_vanish_on_the_boundary(seed in any::<u64>(), n in 2usize..12) {
        let disc = Discretization::uniform(n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_p1(disc.mesh(), &mut rng, 5.0);
        prop_assert!(disc.apply_sh(&f).unwrap().is_dirichlet_conforming(0.0));
    }
}
