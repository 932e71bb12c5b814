//! P1 finite elements for `−Δy = f` with homogeneous Dirichlet conditions.
//!
//! A [`Discretization`] bundles a mesh with a quadrature rule, the assembled
//! stiffness and mass matrices and a Cholesky factor of the interior stiffness
//! block. Right-hand sides are handled as values sampled at the quadrature
//! points ("quadrature vectors"), which is how clamped controls enter the
//! state equation. All `L²` products of the optimisation layer use the same
//! quadrature, so the discrete operator is exactly self-adjoint with respect
//! to the discrete inner product.

use std::sync::Arc;

use crate::banded::BandedCholesky;
use crate::error::{Error, Result};
use crate::field::{Point, ScalarField};
use crate::mesh::TriangularMesh;
use crate::quadrature::QuadratureRule;
use crate::sparse::{SparseSymMatrix, TripletBuilder};

/// Piecewise-linear field given by its nodal values.
#[derive(Debug, Clone, PartialEq)]
pub struct FEFunction {
    mesh: Arc<TriangularMesh>,
    coeffs: Vec<f64>,
}

impl FEFunction {
    pub fn zeros(mesh: Arc<TriangularMesh>) -> Self {
        let n = mesh.num_nodes();
        Self {
            mesh,
            coeffs: vec![0.0; n],
        }
    }

    pub fn from_coeffs(mesh: Arc<TriangularMesh>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != mesh.num_nodes() {
            return Err(Error::LengthMismatch {
                expected: mesh.num_nodes(),
                found: coeffs.len(),
            });
        }
        Ok(Self { mesh, coeffs })
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(mesh: Arc<TriangularMesh>, f: &dyn ScalarField) -> Self {
        let coeffs = mesh.nodes().iter().map(|&p| f.eval(p)).collect();
        Self { mesh, coeffs }
    }

    pub fn mesh(&self) -> &Arc<TriangularMesh> {
        &self.mesh
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    /// True if all boundary coefficients are within `tol` of zero.
    pub fn is_dirichlet_conforming(&self, tol: f64) -> bool {
        self.coeffs
            .iter()
            .zip(self.mesh.boundary_mask())
            .all(|(c, &b)| !b || c.abs() <= tol)
    }

    /// `self += scale * other`.
    pub fn axpy(&mut self, scale: f64, other: &FEFunction) -> Result<()> {
        same_mesh(&self.mesh, &other.mesh)?;
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += scale * b;
        }
        Ok(())
    }

    pub fn scaled(&self, scale: f64) -> Self {
        Self {
            mesh: Arc::clone(&self.mesh),
            coeffs: self.coeffs.iter().map(|c| c * scale).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }
}

impl ScalarField for FEFunction {
    fn eval(&self, p: Point) -> f64 {
        self.mesh.eval_p1(&self.coeffs, p)
    }
}

pub(crate) fn same_mesh(a: &TriangularMesh, b: &TriangularMesh) -> Result<()> {
    if a.n_div() != b.n_div() {
        return Err(Error::MeshMismatch {
            expected: a.n_div(),
            found: b.n_div(),
        });
    }
    Ok(())
}

/// Assembles the P1 stiffness matrix `K` and consistent mass matrix `M` over
/// all mesh nodes (no boundary elimination).
pub fn assemble(mesh: &TriangularMesh) -> (SparseSymMatrix, SparseSymMatrix) {
    let n = mesh.num_nodes();
    let mut k = TripletBuilder::new(n);
    let mut m = TripletBuilder::new(n);
    for (e, tri) in mesh.elements().iter().enumerate() {
        let area = mesh.signed_area(e);
        let [p0, p1, p2] = tri.map(|v| mesh.nodes()[v]);
        // Gradients of the barycentric coordinates are (b_i, c_i) / (2|T|).
        let b = [p1[1] - p2[1], p2[1] - p0[1], p0[1] - p1[1]];
        let c = [p2[0] - p1[0], p0[0] - p2[0], p1[0] - p0[0]];
        for i in 0..3 {
            for j in 0..3 {
                let kij = (b[i] * b[j] + c[i] * c[j]) / (4.0 * area);
                let mij = if i == j { area / 6.0 } else { area / 12.0 };
                k.add(tri[i], tri[j], kij);
                m.add(tri[i], tri[j], mij);
            }
        }
    }
    (k.build(), m.build())
}

/// Mesh, quadrature and factored interior stiffness for one mesh level.
#[derive(Debug, Clone)]
pub struct Discretization {
    mesh: Arc<TriangularMesh>,
    rule: QuadratureRule,
    stiffness: SparseSymMatrix,
    mass: SparseSymMatrix,
    interior: Vec<usize>,
    factor: BandedCholesky,
    quad_points: Vec<Point>,
    quad_weights: Vec<f64>,
}

impl Discretization {
    pub fn new(mesh: Arc<TriangularMesh>, rule: QuadratureRule) -> Result<Self> {
        let (stiffness, mass) = assemble(&mesh);
        let mut dof_of_node = vec![None; mesh.num_nodes()];
        let mut interior = Vec::with_capacity(mesh.num_interior_nodes());
        for (node, &on_boundary) in mesh.boundary_mask().iter().enumerate() {
            if !on_boundary {
                dof_of_node[node] = Some(interior.len());
                interior.push(node);
            }
        }
        let factor = BandedCholesky::factor_submatrix(&stiffness, &dof_of_node)?;

        let nq = mesh.num_elements() * rule.len();
        let mut quad_points = Vec::with_capacity(nq);
        let mut quad_weights = Vec::with_capacity(nq);
        for e in 0..mesh.num_elements() {
            let area = mesh.signed_area(e);
            for (bary, w) in rule.points().iter().zip(rule.weights()) {
                quad_points.push(mesh.barycentric_to_point(e, *bary));
                quad_weights.push(w * area);
            }
        }

        Ok(Self {
            mesh,
            rule,
            stiffness,
            mass,
            interior,
            factor,
            quad_points,
            quad_weights,
        })
    }

    /// Uniform mesh with `n_div` subdivisions and the default degree-5 rule.
    pub fn uniform(n_div: usize) -> Result<Self> {
        Self::new(Arc::new(TriangularMesh::new(n_div)?), QuadratureRule::default())
    }

    pub fn mesh(&self) -> &Arc<TriangularMesh> {
        &self.mesh
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    pub fn stiffness(&self) -> &SparseSymMatrix {
        &self.stiffness
    }

    pub fn mass(&self) -> &SparseSymMatrix {
        &self.mass
    }

    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior
    }

    pub fn h(&self) -> f64 {
        self.mesh.h()
    }

    pub fn quad_points(&self) -> &[Point] {
        &self.quad_points
    }

    pub fn quad_weights(&self) -> &[f64] {
        &self.quad_weights
    }

    pub fn num_quad_points(&self) -> usize {
        self.quad_points.len()
    }

    /// Replaces the mass matrix by a perturbed copy. Fault-injection hook for
    /// the self-adjointness check; the quadrature route is unaffected.
    #[doc(hidden)]
    pub fn with_corrupted_mass(mut self, row: usize, col: usize, delta: f64) -> Self {
        self.mass.perturb(row, col, delta);
        self
    }

    /// Samples `f` at every quadrature point.
    pub fn sample(&self, f: &dyn ScalarField) -> Vec<f64> {
        self.quad_points.iter().map(|&p| f.eval(p)).collect()
    }

    /// Evaluates a nodal P1 vector at every quadrature point.
    pub fn eval_p1(&self, coeffs: &[f64]) -> Vec<f64> {
        let nr = self.rule.len();
        let mut out = Vec::with_capacity(self.quad_points.len());
        for tri in self.mesh.elements() {
            let v = tri.map(|n| coeffs[n]);
            for bary in self.rule.points().iter().take(nr) {
                out.push(bary[0] * v[0] + bary[1] * v[1] + bary[2] * v[2]);
            }
        }
        out
    }

    /// Load vector `b_i = ∫ f φ_i` (all nodes) from quadrature samples of `f`.
    pub fn load(&self, values: &[f64]) -> Vec<f64> {
        let nr = self.rule.len();
        let mut b = vec![0.0; self.mesh.num_nodes()];
        for (e, tri) in self.mesh.elements().iter().enumerate() {
            for (q, bary) in self.rule.points().iter().enumerate() {
                let idx = e * nr + q;
                let v = values[idx] * self.quad_weights[idx];
                b[tri[0]] += v * bary[0];
                b[tri[1]] += v * bary[1];
                b[tri[2]] += v * bary[2];
            }
        }
        b
    }

    /// Solves `K y = b` on the interior nodes; boundary entries of `b` are ignored.
    pub fn solve_load_vector(&self, b: &[f64]) -> FEFunction {
        let mut x: Vec<f64> = self.interior.iter().map(|&n| b[n]).collect();
        self.factor.solve_in_place(&mut x);
        let mut coeffs = vec![0.0; self.mesh.num_nodes()];
        for (&node, v) in self.interior.iter().zip(x) {
            coeffs[node] = v;
        }
        FEFunction {
            mesh: Arc::clone(&self.mesh),
            coeffs,
        }
    }

    /// `S_h` applied to a right-hand side given by quadrature samples.
    pub fn solve_quad(&self, values: &[f64]) -> FEFunction {
        self.solve_load_vector(&self.load(values))
    }

    /// `y_h = S_h f`: the discrete solution of `−Δy = f`, `y = 0` on the boundary.
    pub fn apply_sh(&self, rhs: &dyn ScalarField) -> Result<FEFunction> {
        let values = self.sample(rhs);
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("right-hand side samples"));
        }
        Ok(self.solve_quad(&values))
    }

    /// `S_h^*`; identical to [`Self::apply_sh`] because the discrete operator is
    /// self-adjoint in `L²`.
    pub fn apply_sh_adjoint(&self, residual: &dyn ScalarField) -> Result<FEFunction> {
        self.apply_sh(residual)
    }

    /// `S_h f` for a P1 right-hand side, using the mass matrix for the load.
    pub fn apply_sh_p1(&self, f: &FEFunction) -> Result<FEFunction> {
        same_mesh(&self.mesh, f.mesh())?;
        Ok(self.solve_load_vector(&self.mass.mul_vec(f.coeffs())))
    }

    /// `(f, g)` for P1 functions through the mass matrix.
    pub fn p1_inner(&self, f: &FEFunction, g: &FEFunction) -> f64 {
        let mg = self.mass.mul_vec(g.coeffs());
        f.coeffs().iter().zip(&mg).map(|(a, b)| a * b).sum()
    }

    /// Discrete `L²` product of two quadrature vectors.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.quad_weights
            .iter()
            .zip(a.iter().zip(b))
            .map(|(w, (x, y))| w * x * y)
            .sum()
    }

    pub fn norm(&self, a: &[f64]) -> f64 {
        self.inner(a, a).sqrt()
    }

    pub fn dist(&self, a: &[f64], b: &[f64]) -> f64 {
        self.quad_weights
            .iter()
            .zip(a.iter().zip(b))
            .map(|(w, (x, y))| w * (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }

    /// `∫ f g` with this discretization's quadrature.
    pub fn l2_inner(&self, f: &dyn ScalarField, g: &dyn ScalarField) -> f64 {
        self.quad_points
            .iter()
            .zip(&self.quad_weights)
            .map(|(&p, w)| w * f.eval(p) * g.eval(p))
            .sum()
    }

    /// `S_h` as a map between quadrature vectors: sample the P1 solution at the
    /// quadrature points.
    pub fn sh_quad(&self, values: &[f64]) -> Vec<f64> {
        self.eval_p1(self.solve_quad(values).coeffs())
    }

    /// Power-iteration estimate of the operator norm `‖S_h‖` in the discrete
    /// `L²` inner product.
    pub fn operator_norm_estimate(&self, iterations: usize) -> Result<f64> {
        let mut v: Vec<f64> = self
            .quad_points
            .iter()
            .map(|p| 1.0 + 0.1 * (7.0 * p[0] + 3.0 * p[1]).sin())
            .collect();
        let mut lambda = 0.0;
        for _ in 0..iterations.max(1) {
            let nv = self.norm(&v);
            if !(nv.is_finite() && nv > 0.0) {
                return Err(Error::NonFinite("operator norm estimate"));
            }
            v.iter_mut().for_each(|x| *x /= nv);
            let w = self.sh_quad(&self.sh_quad(&v));
            lambda = self.inner(&v, &w);
            v = w;
        }
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::NonFinite("operator norm estimate"));
        }
        Ok(lambda.sqrt())
    }
}

/// `∫_Ω f g` by element-wise quadrature with `rule` on `mesh`.
pub fn l2_inner(
    mesh: &TriangularMesh,
    f: &dyn ScalarField,
    g: &dyn ScalarField,
    rule: &QuadratureRule,
) -> f64 {
    let mut total = 0.0;
    for e in 0..mesh.num_elements() {
        let area = mesh.signed_area(e);
        let mut local = 0.0;
        for (bary, w) in rule.points().iter().zip(rule.weights()) {
            let p = mesh.barycentric_to_point(e, *bary);
            local += w * f.eval(p) * g.eval(p);
        }
        total += area * local;
    }
    total
}

/// Empirical bound on the operator gap between a mesh and a nested reference
/// mesh:
///
/// `δ = max_u ‖(S_ref − S_h) u‖ + ‖(S_ref − S_h)(S_h u − z)‖`
///
/// over the probe controls `u`, with all norms on the reference quadrature.
pub fn estimate_delta(
    coarse: &Discretization,
    reference: &Discretization,
    probes: &[&dyn ScalarField],
    target: &dyn ScalarField,
) -> Result<f64> {
    let nc = coarse.mesh().n_div();
    let nr = reference.mesh().n_div();
    if nr < nc || !nr.is_multiple_of(nc) {
        return Err(Error::NotNested {
            coarse: nc,
            reference: nr,
        });
    }
    // On the same mesh the coarse field is read off directly, so δ is exactly 0.
    let on_reference = |f: &FEFunction| {
        if nr == nc {
            reference.eval_p1(f.coeffs())
        } else {
            reference.sample(f)
        }
    };
    let mut delta: f64 = 0.0;
    for &u in probes {
        let y_coarse = coarse.apply_sh(u)?;
        let y_ref = reference.apply_sh(u)?;
        let state_gap = reference.dist(&on_reference(&y_coarse), &reference.eval_p1(y_ref.coeffs()));

        let residual = |p: Point| y_coarse.eval(p) - target.eval(p);
        let p_coarse = coarse.apply_sh_adjoint(&residual)?;
        let p_ref = reference.apply_sh_adjoint(&residual)?;
        let adjoint_gap = reference.dist(&on_reference(&p_coarse), &reference.eval_p1(p_ref.coeffs()));

        delta = delta.max(state_gap + adjoint_gap);
    }
    Ok(delta)
}

/// Least-squares fit of `value ≈ C h^order` in log-log coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderFit {
    pub order: f64,
    pub constant: f64,
}

pub fn fit_order(hs: &[f64], values: &[f64]) -> Result<OrderFit> {
    if hs.len() != values.len() || hs.len() < 2 {
        return Err(Error::InvalidParameter(
            "order fit needs at least two (h, value) pairs".into(),
        ));
    }
    if hs.iter().chain(values).any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidParameter(
            "order fit needs positive finite h and values".into(),
        ));
    }
    let xs: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let (slope, intercept) = least_squares_line(&xs, &ys);
    Ok(OrderFit {
        order: slope,
        constant: intercept.exp(),
    })
}

/// Least-squares constant `c` in `δ(h) = c h²`.
pub fn fit_h2_constant(hs: &[f64], values: &[f64]) -> f64 {
    let num: f64 = hs.iter().zip(values).map(|(h, v)| v * h * h).sum();
    let den: f64 = hs.iter().map(|h| h.powi(4)).sum();
    num / den
}

pub(crate) fn least_squares_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}
