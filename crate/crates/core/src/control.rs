//! Admissible controls, the regularizer `J` and its Bregman distance.
//!
//! A control is stored implicitly as the pointwise clamp of a P1 field `g` to
//! the box `[u_a, u_b]`. This is exactly the form of the minimiser of the
//! variationally discretized subproblem, `u = P_Uad(p_h / α + λ)`, and makes
//! every control feasible by construction.

use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::{same_mesh, Discretization, FEFunction};
use crate::field::{Point, ScalarField};
use crate::mesh::TriangularMesh;

/// Constant box constraints `u_a ≤ u ≤ u_b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxBounds {
    lower: f64,
    upper: f64,
}

impl BoxBounds {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite()) || lower > upper {
            return Err(Error::InvalidParameter(format!(
                "box bounds need finite u_a <= u_b, got [{lower}, {upper}]"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    /// Pointwise projection onto `[u_a, u_b]`.
    #[inline]
    pub fn clamp(&self, v: f64) -> f64 {
        v.max(self.lower).min(self.upper)
    }

    pub fn contains(&self, v: f64) -> bool {
        (self.lower..=self.upper).contains(&v)
    }
}

/// Feasible control `u = clamp(g, u_a, u_b)` with a P1 base field `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct Control {
    base: FEFunction,
    bounds: BoxBounds,
}

impl Control {
    pub fn base(&self) -> &FEFunction {
        &self.base
    }

    pub fn bounds(&self) -> BoxBounds {
        self.bounds
    }

    pub fn mesh(&self) -> &Arc<TriangularMesh> {
        self.base.mesh()
    }

    /// Control values at the quadrature points of `disc`.
    pub fn quad_values(&self, disc: &Discretization) -> Result<Vec<f64>> {
        same_mesh(disc.mesh(), self.mesh())?;
        let mut v = disc.eval_p1(self.base.coeffs());
        v.iter_mut().for_each(|x| *x = self.bounds.clamp(*x));
        Ok(v)
    }
}

impl ScalarField for Control {
    fn eval(&self, p: Point) -> f64 {
        self.bounds.clamp(self.base.eval(p))
    }
}

/// Accumulated dual variable `λ_k = Σ_{i≤k} α_i^{-1} S_h^*(z − S_h u_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualVariable {
    accumulation: FEFunction,
}

impl DualVariable {
    /// `λ_0 = 0`.
    pub fn zero(mesh: Arc<TriangularMesh>) -> Self {
        Self {
            accumulation: FEFunction::zeros(mesh),
        }
    }

    pub fn from_function(f: FEFunction) -> Self {
        Self { accumulation: f }
    }

    pub fn as_function(&self) -> &FEFunction {
        &self.accumulation
    }

    /// `λ += weight · adjoint`.
    pub fn accumulate(&mut self, weight: f64, adjoint: &FEFunction) -> Result<()> {
        self.accumulation.axpy(weight, adjoint)
    }
}

impl ScalarField for DualVariable {
    fn eval(&self, p: Point) -> f64 {
        self.accumulation.eval(p)
    }
}

/// `P_Uad(g)`: for box constraints the `L²` projection is the pointwise clamp.
pub fn project_uad(g: FEFunction, bounds: BoxBounds) -> Control {
    Control { base: g, bounds }
}

/// `‖u − v‖` by quadrature, for any evaluable `v`.
pub fn control_l2_dist(disc: &Discretization, u: &Control, v: &dyn ScalarField) -> Result<f64> {
    let uq = u.quad_values(disc)?;
    Ok(disc.dist(&uq, &disc.sample(v)))
}

/// `‖u − v‖` between two controls on the same mesh.
pub fn control_distance(disc: &Discretization, u: &Control, v: &Control) -> Result<f64> {
    Ok(disc.dist(&u.quad_values(disc)?, &v.quad_values(disc)?))
}

/// `J(u) = ½‖u‖²`; the indicator vanishes since controls are feasible.
pub fn regularizer(disc: &Discretization, u: &Control) -> Result<f64> {
    let uq = u.quad_values(disc)?;
    Ok(0.5 * disc.inner(&uq, &uq))
}

/// `D^λ(u, v) = J(u) − J(v) − (u − v, λ)`.
///
/// Nonnegative when `λ ∈ ∂J(v)`; inexact iterates need not satisfy that, so
/// negative values are returned unchanged.
pub fn bregman_distance(
    disc: &Discretization,
    u: &Control,
    v: &Control,
    lambda: &DualVariable,
) -> Result<f64> {
    same_mesh(u.mesh(), v.mesh())?;
    same_mesh(u.mesh(), lambda.as_function().mesh())?;
    let uq = u.quad_values(disc)?;
    let vq = v.quad_values(disc)?;
    let lq = disc.eval_p1(lambda.as_function().coeffs());
    let diff: Vec<f64> = uq.iter().zip(&vq).map(|(a, b)| a - b).collect();
    Ok(0.5 * disc.inner(&uq, &uq) - 0.5 * disc.inner(&vq, &vq) - disc.inner(&diff, &lq))
}

/// `∫ χ |u − v|` where `indicator` evaluates to 0 or 1.
pub fn l1_dist_on_set(
    disc: &Discretization,
    u: &Control,
    v: &dyn ScalarField,
    indicator: &dyn ScalarField,
) -> Result<f64> {
    let uq = u.quad_values(disc)?;
    Ok(disc
        .quad_points()
        .iter()
        .zip(disc.quad_weights())
        .zip(&uq)
        .map(|((&p, w), uv)| w * indicator.eval(p) * (uv - v.eval(p)).abs())
        .sum())
}

/// Writes `x,y,u` samples at the quadrature points of `disc`.
pub fn write_control_samples<W: Write>(disc: &Discretization, u: &Control, mut out: W) -> Result<()> {
    let uq = u.quad_values(disc)?;
    writeln!(out, "x,y,u")?;
    for (p, v) in disc.quad_points().iter().zip(uq) {
        writeln!(out, "{},{},{}", p[0], p[1], v)?;
    }
    Ok(())
}

/// Contents of a restart file: mesh resolution, bounds and base coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct RestartData {
    pub n_div: usize,
    pub lower: f64,
    pub upper: f64,
    pub coeffs: Vec<f64>,
}

const RESTART_MAGIC: &str = "# bregman-ocp restart v1";

impl RestartData {
    pub fn from_control(u: &Control) -> Self {
        Self {
            n_div: u.mesh().n_div(),
            lower: u.bounds().lower(),
            upper: u.bounds().upper(),
            coeffs: u.base().coeffs().to_vec(),
        }
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{RESTART_MAGIC}")?;
        writeln!(out, "n_div {}", self.n_div)?;
        writeln!(out, "bounds {:?} {:?}", self.lower, self.upper)?;
        writeln!(out, "coeffs {}", self.coeffs.len())?;
        for c in &self.coeffs {
            writeln!(out, "{c:?}")?;
        }
        Ok(())
    }

    /// Rebuilds the control on `mesh`, which must match the stored resolution.
    pub fn into_control(self, mesh: Arc<TriangularMesh>) -> Result<Control> {
        if mesh.n_div() != self.n_div {
            return Err(Error::MeshMismatch {
                expected: mesh.n_div(),
                found: self.n_div,
            });
        }
        let bounds = BoxBounds::new(self.lower, self.upper)?;
        Ok(project_uad(FEFunction::from_coeffs(mesh, self.coeffs)?, bounds))
    }
}

/// Parses a restart file written by [`RestartData::write`].
pub fn parse_restart(text: &str) -> Result<RestartData> {
    let err = |line: usize, reason: &str| Error::Restart {
        line,
        reason: reason.to_string(),
    };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let (ln, magic) = lines.next().ok_or_else(|| err(1, "empty input"))?;
    if magic != RESTART_MAGIC {
        return Err(err(ln, "missing restart header"));
    }

    let mut field = |key: &str| -> Result<(usize, Vec<&str>)> {
        let (ln, line) = lines.next().ok_or_else(|| err(0, "unexpected end of input"))?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(key) {
            return Err(err(ln, &format!("expected `{key}`")));
        }
        Ok((ln, parts.collect()))
    };

    let (ln, n) = field("n_div")?;
    let n_div: usize = match n.as_slice() {
        [v] => v.parse().map_err(|_| err(ln, "n_div is not an integer"))?,
        _ => return Err(err(ln, "n_div takes one value")),
    };
    if !(2..=1 << 14).contains(&n_div) {
        return Err(err(ln, "n_div out of range"));
    }

    let (ln, b) = field("bounds")?;
    let (lower, upper) = match b.as_slice() {
        [l, u] => (parse_finite(l).ok_or_else(|| err(ln, "bad lower bound"))?, parse_finite(u).ok_or_else(|| err(ln, "bad upper bound"))?),
        _ => return Err(err(ln, "bounds takes two values")),
    };
    if lower > upper {
        return Err(err(ln, "lower bound exceeds upper bound"));
    }

    let (ln, c) = field("coeffs")?;
    let count: usize = match c.as_slice() {
        [v] => v.parse().map_err(|_| err(ln, "coefficient count is not an integer"))?,
        _ => return Err(err(ln, "coeffs takes one value")),
    };
    if count != (n_div + 1) * (n_div + 1) {
        return Err(err(ln, "coefficient count does not match n_div"));
    }

    let mut coeffs = Vec::with_capacity(count);
    for (ln, line) in lines.by_ref().take(count) {
        coeffs.push(parse_finite(line).ok_or_else(|| err(ln, "bad coefficient"))?);
    }
    if coeffs.len() != count {
        return Err(err(0, "truncated coefficient list"));
    }
    if let Some((ln, _)) = lines.next() {
        return Err(err(ln, "trailing data"));
    }
    Ok(RestartData {
        n_div,
        lower,
        upper,
        coeffs,
    })
}

fn parse_finite(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}
