//! The regularized subproblem
//!
//! ```text
//! minimize ½‖S_h u − z‖² − α (λ, u) + (α/2)‖u‖²   subject to u_a ≤ u ≤ u_b,
//! ```
//!
//! its accuracy certificate `B(α, λ, u)`, a semismooth Newton solver and a
//! projected-gradient oracle for cross-validation.
//!
//! Controls, states and adjoints enter all products through the quadrature
//! vectors of a [`Discretization`]. The minimiser satisfies the fixed-point
//! relation `u = P_Uad(p_h/α + λ)` with `p_h = S_h^*(z − S_h u)`, so it is the
//! clamp of a P1 field and is represented exactly by a [`Control`].

use std::io::Write;
use std::sync::Arc;

use crate::control::{project_uad, BoxBounds, Control, DualVariable};
use crate::error::{Error, Result};
use crate::fem::{same_mesh, Discretization, FEFunction};
use crate::field::ScalarField;

/// Problem data shared by every subproblem on one mesh.
///
/// The affine source `e_Ω` of `−Δy = u + e_Ω` is folded into the target:
/// `‖S_h(u + e_Ω) − z‖ = ‖S_h u − z̃‖` with `z̃ = z − S_h e_Ω`.
#[derive(Debug, Clone)]
pub struct ProblemData {
    disc: Arc<Discretization>,
    bounds: BoxBounds,
    reduced_target: Vec<f64>,
    raw_target: Vec<f64>,
    shift_state: FEFunction,
}

impl ProblemData {
    pub fn new(
        disc: Arc<Discretization>,
        target: &dyn ScalarField,
        shift: &dyn ScalarField,
        bounds: BoxBounds,
    ) -> Result<Self> {
        let raw_target = disc.sample(target);
        if raw_target.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("target samples"));
        }
        let shift_state = disc.apply_sh(shift)?;
        let shift_q = disc.eval_p1(shift_state.coeffs());
        let reduced_target = raw_target.iter().zip(&shift_q).map(|(z, s)| z - s).collect();
        Ok(Self {
            disc,
            bounds,
            reduced_target,
            raw_target,
            shift_state,
        })
    }

    /// Problem without affine source.
    pub fn without_shift(disc: Arc<Discretization>, target: &dyn ScalarField, bounds: BoxBounds) -> Result<Self> {
        Self::new(disc, target, &crate::field::Constant(0.0), bounds)
    }

    /// Problem whose target is given directly as quadrature samples.
    pub fn from_quad_target(disc: Arc<Discretization>, target: Vec<f64>, bounds: BoxBounds) -> Result<Self> {
        if target.len() != disc.num_quad_points() {
            return Err(Error::LengthMismatch {
                expected: disc.num_quad_points(),
                found: target.len(),
            });
        }
        if target.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("target samples"));
        }
        let shift_state = FEFunction::zeros(Arc::clone(disc.mesh()));
        Ok(Self {
            disc,
            bounds,
            reduced_target: target.clone(),
            raw_target: target,
            shift_state,
        })
    }

    pub fn disc(&self) -> &Arc<Discretization> {
        &self.disc
    }

    pub fn bounds(&self) -> BoxBounds {
        self.bounds
    }

    /// `z̃ = z − S_h e_Ω` at the quadrature points.
    pub fn reduced_target(&self) -> &[f64] {
        &self.reduced_target
    }

    /// `z` at the quadrature points.
    pub fn raw_target(&self) -> &[f64] {
        &self.raw_target
    }

    /// `S_h e_Ω`.
    pub fn shift_state(&self) -> &FEFunction {
        &self.shift_state
    }

    /// `P_Uad(0)`.
    pub fn zero_control(&self) -> Control {
        project_uad(FEFunction::zeros(Arc::clone(self.disc.mesh())), self.bounds)
    }

    /// `H(u) = ½‖S_h u − z̃‖²`.
    pub fn tracking_value(&self, u: &Control) -> Result<f64> {
        let uq = u.quad_values(&self.disc)?;
        let yq = self.disc.sh_quad(&uq);
        Ok(0.5 * self.disc.dist(&yq, &self.reduced_target).powi(2))
    }

    /// State `S_h u` and adjoint `S_h^*(z̃ − S_h u)` for control samples `uq`.
    pub fn state_and_adjoint(&self, uq: &[f64]) -> (FEFunction, FEFunction) {
        let y = self.disc.solve_quad(uq);
        let yq = self.disc.eval_p1(y.coeffs());
        let residual: Vec<f64> = self.reduced_target.iter().zip(&yq).map(|(z, y)| z - y).collect();
        let p = self.disc.solve_quad(&residual);
        (y, p)
    }
}

/// One instance of the regularized subproblem.
#[derive(Debug, Clone, Copy)]
pub struct SubproblemSpec<'a> {
    problem: &'a ProblemData,
    alpha: f64,
    lambda: &'a DualVariable,
}

impl<'a> SubproblemSpec<'a> {
    pub fn new(problem: &'a ProblemData, alpha: f64, lambda: &'a DualVariable) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
        }
        same_mesh(problem.disc().mesh(), lambda.as_function().mesh())?;
        Ok(Self {
            problem,
            alpha,
            lambda,
        })
    }

    pub fn problem(&self) -> &'a ProblemData {
        self.problem
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn lambda(&self) -> &'a DualVariable {
        self.lambda
    }

    fn disc(&self) -> &'a Discretization {
        self.problem.disc()
    }

    fn lambda_q(&self) -> Vec<f64> {
        self.disc().eval_p1(self.lambda.as_function().coeffs())
    }
}

/// Output of a subproblem solve.
#[derive(Debug, Clone)]
pub struct SubproblemResult {
    pub u: Control,
    /// `S_h u`.
    pub y_h: FEFunction,
    /// `S_h^*(z̃ − S_h u)`.
    pub p_h: FEFunction,
    pub b_value: f64,
    /// Newton steps for [`solve_ssn`], gradient steps for [`solve_oracle_pg`].
    pub newton_iterations: usize,
    pub converged: bool,
    pub diagnostics: SolveDiagnostics,
}

/// Per-step record of a solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStep {
    pub iteration: usize,
    pub b_value: f64,
    pub objective: f64,
    pub active_lower: usize,
    pub active_upper: usize,
    pub inner_iterations: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveDiagnostics {
    pub steps: Vec<SolveStep>,
}

impl SolveDiagnostics {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "iteration,b_value,objective,active_lower,active_upper,inner_iterations")?;
        for s in &self.steps {
            writeln!(
                out,
                "{},{:e},{:e},{},{},{}",
                s.iteration, s.b_value, s.objective, s.active_lower, s.active_upper, s.inner_iterations
            )?;
        }
        Ok(())
    }
}

struct Evaluation {
    y: FEFunction,
    p: FEFunction,
    /// `g = p/α + λ`.
    g: FEFunction,
    b_value: f64,
    objective: f64,
}

fn evaluate(spec: &SubproblemSpec<'_>, uq: &[f64], lambda_q: &[f64]) -> Evaluation {
    let disc = spec.disc();
    let bounds = spec.problem.bounds();
    let alpha = spec.alpha;
    let (y, p) = spec.problem.state_and_adjoint(uq);
    let mut g = p.scaled(1.0 / alpha);
    g.axpy(1.0, spec.lambda.as_function()).expect("spec checked the mesh");
    let gq = disc.eval_p1(g.coeffs());
    let projected: Vec<f64> = gq.iter().map(|&v| bounds.clamp(v)).collect();
    let b_value = (1.0 + 1.0 / alpha) * disc.dist(uq, &projected);

    let yq = disc.eval_p1(y.coeffs());
    let objective = 0.5 * disc.dist(&yq, spec.problem.reduced_target()).powi(2) - alpha * disc.inner(lambda_q, uq)
        + 0.5 * alpha * disc.inner(uq, uq);
    Evaluation {
        y,
        p,
        g,
        b_value,
        objective,
    }
}

/// `B(α, λ, u) = (1 + 1/α) ‖u − P_Uad(S_h^*(z̃ − S_h u)/α + λ)‖`.
pub fn estimator_b(spec: &SubproblemSpec<'_>, u: &Control) -> Result<f64> {
    let uq = u.quad_values(spec.disc())?;
    Ok(evaluate(spec, &uq, &spec.lambda_q()).b_value)
}

/// Discrete objective `½‖S_h u − z̃‖² − α(λ, u) + (α/2)‖u‖²`.
pub fn subproblem_objective(spec: &SubproblemSpec<'_>, u: &Control) -> Result<f64> {
    let uq = u.quad_values(spec.disc())?;
    Ok(objective_q(spec, &uq, &spec.lambda_q()))
}

fn objective_q(spec: &SubproblemSpec<'_>, uq: &[f64], lambda_q: &[f64]) -> f64 {
    let disc = spec.disc();
    let yq = disc.sh_quad(uq);
    0.5 * disc.dist(&yq, spec.problem.reduced_target()).powi(2) - spec.alpha * disc.inner(lambda_q, uq)
        + 0.5 * spec.alpha * disc.inner(uq, uq)
}

const CG_RELATIVE_TOLERANCE: f64 = 1e-15;
const CG_MAX_ITERATIONS: usize = 500;

/// Semismooth Newton (primal-dual active set) solve, cold-started from
/// `P_Uad(0)`.
pub fn solve_ssn(spec: &SubproblemSpec<'_>, eps: f64, max_iter: usize) -> Result<SubproblemResult> {
    solve_ssn_from(spec, eps, max_iter, None)
}

/// Semismooth Newton solve of the fixed-point equation `g = p(clamp g)/α + λ`
/// starting from the base field `start`.
///
/// Each step fixes the active sets `{g ≥ u_b}` and `{g ≤ u_a}` at the
/// quadrature points of the current iterate and solves the reduced Newton
/// system on the inactive points,
///
/// `α u_I + (S_h^* S_h u)_I = (S_h^* z̃ + α λ)_I`, with `u = u_a`/`u_b` on the active set,
///
/// by conjugate gradients (the operator is SPD and, since `‖S_h‖² ≪ α` for the
/// problems of interest, very well conditioned). Iteration stops as soon as
/// the certificate `B ≤ eps` holds.
pub fn solve_ssn_from(
    spec: &SubproblemSpec<'_>,
    eps: f64,
    max_iter: usize,
    start: Option<&FEFunction>,
) -> Result<SubproblemResult> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter(format!("accuracy must be positive, got {eps}")));
    }
    let disc = spec.disc();
    let bounds = spec.problem.bounds();
    let alpha = spec.alpha;
    let lambda_q = spec.lambda_q();
    let mut g = match start {
        Some(s) => {
            same_mesh(disc.mesh(), s.mesh())?;
            s.clone()
        }
        None => FEFunction::zeros(Arc::clone(disc.mesh())),
    };
    let mut diagnostics = SolveDiagnostics::default();
    let mut inner_iterations = 0;

    for iteration in 0..=max_iter {
        let gq = disc.eval_p1(g.coeffs());
        let uq: Vec<f64> = gq.iter().map(|&v| bounds.clamp(v)).collect();
        let ev = evaluate(spec, &uq, &lambda_q);
        if !ev.b_value.is_finite() || !ev.objective.is_finite() {
            return Err(Error::NonFinite("semismooth Newton iterate"));
        }
        let active_lower = gq.iter().filter(|&&v| v <= bounds.lower()).count();
        let active_upper = gq.iter().filter(|&&v| v >= bounds.upper()).count();
        diagnostics.steps.push(SolveStep {
            iteration,
            b_value: ev.b_value,
            objective: ev.objective,
            active_lower,
            active_upper,
            inner_iterations,
        });

        let converged = ev.b_value <= eps;
        if converged || iteration == max_iter {
            return Ok(SubproblemResult {
                u: project_uad(g, bounds),
                y_h: ev.y,
                p_h: ev.p,
                b_value: ev.b_value,
                newton_iterations: iteration,
                converged,
                diagnostics,
            });
        }

        // Newton step on the inactive set of the current iterate.
        let inactive: Vec<bool> = gq
            .iter()
            .map(|&v| v > bounds.lower() && v < bounds.upper())
            .collect();
        let fixed: Vec<f64> = gq
            .iter()
            .zip(&inactive)
            .map(|(&v, &free)| if free { 0.0 } else { bounds.clamp(v) })
            .collect();
        let fixed_state = disc.sh_quad(&fixed);
        let residual: Vec<f64> = spec
            .problem
            .reduced_target()
            .iter()
            .zip(&fixed_state)
            .map(|(z, y)| z - y)
            .collect();
        let sz = disc.sh_quad(&residual);
        let rhs: Vec<f64> = sz
            .iter()
            .zip(&lambda_q)
            .zip(&inactive)
            .map(|((s, l), &free)| if free { s + alpha * l } else { 0.0 })
            .collect();
        // Warm start from the fixed-point prediction p/α + λ.
        let guess_q = disc.eval_p1(ev.g.coeffs());
        let guess: Vec<f64> = guess_q
            .iter()
            .zip(&inactive)
            .map(|(&v, &free)| if free { v } else { 0.0 })
            .collect();
        let (free_values, its) = conjugate_gradient(disc, alpha, &inactive, &rhs, guess);
        inner_iterations = its;

        let u_next: Vec<f64> = free_values.iter().zip(&fixed).map(|(a, b)| a + b).collect();
        let (_, p_next) = spec.problem.state_and_adjoint(&u_next);
        let mut g_next = p_next.scaled(1.0 / alpha);
        g_next.axpy(1.0, spec.lambda.as_function())?;
        if g_next.coeffs().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("semismooth Newton update"));
        }
        g = g_next;
    }
    unreachable!("loop returns at iteration == max_iter")
}

/// CG for `(α I + S_h^* S_h)` restricted to the points where `mask` is true,
/// in the quadrature-weighted inner product.
fn conjugate_gradient(
    disc: &Discretization,
    alpha: f64,
    mask: &[bool],
    rhs: &[f64],
    mut x: Vec<f64>,
) -> (Vec<f64>, usize) {
    let apply = |v: &[f64]| -> Vec<f64> {
        let ssv = disc.sh_quad(&disc.sh_quad(v));
        v.iter()
            .zip(ssv)
            .zip(mask)
            .map(|((a, b), &m)| if m { alpha * a + b } else { 0.0 })
            .collect()
    };
    let rhs_norm = disc.norm(rhs);
    if rhs_norm == 0.0 && disc.norm(&x) == 0.0 {
        return (x, 0);
    }
    let ax = apply(&x);
    let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut d = r.clone();
    let mut rr = disc.inner(&r, &r);
    let stop = (CG_RELATIVE_TOLERANCE * rhs_norm).powi(2);
    for it in 0..CG_MAX_ITERATIONS {
        if rr <= stop {
            return (x, it);
        }
        let ad = apply(&d);
        let step = rr / disc.inner(&d, &ad);
        for i in 0..x.len() {
            x[i] += step * d[i];
            r[i] -= step * ad[i];
        }
        let rr_next = disc.inner(&r, &r);
        let beta = rr_next / rr;
        rr = rr_next;
        for i in 0..d.len() {
            d[i] = r[i] + beta * d[i];
        }
    }
    (x, CG_MAX_ITERATIONS)
}

const PG_MAX_ITERATIONS: usize = 1_000_000;

/// Projected-gradient oracle started from `P_Uad(0)`.
pub fn solve_oracle_pg(spec: &SubproblemSpec<'_>, tol: f64) -> Result<SubproblemResult> {
    solve_oracle_pg_from(spec, tol, None)
}

/// Projected gradient `u ← P_Uad(u − s (S_h^*(S_h u − z̃) + α u − α λ))` with
/// the fixed step `s = 1/(α + ‖S_h‖²)`, run until the change between
/// successive iterates is at most `tol`.
///
/// The iteration runs on quadrature samples and is independent of the Newton
/// solver; only the final iterate is mapped back to a clamped P1 control.
pub fn solve_oracle_pg_from(
    spec: &SubproblemSpec<'_>,
    tol: f64,
    start: Option<&Control>,
) -> Result<SubproblemResult> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    let disc = spec.disc();
    let bounds = spec.problem.bounds();
    let alpha = spec.alpha;
    let lambda_q = spec.lambda_q();

    // Power iteration approaches the norm from below; pad it.
    let norm = disc.operator_norm_estimate(60)?;
    let lipschitz = 1.1 * norm * norm;
    let step = 1.0 / (alpha + lipschitz);
    if !step.is_finite() {
        return Err(Error::NonFinite("projected-gradient step size"));
    }

    let mut u = match start {
        Some(c) => c.quad_values(disc)?,
        None => vec![bounds.clamp(0.0); disc.num_quad_points()],
    };
    let mut diagnostics = SolveDiagnostics::default();
    let mut steps_taken = 0;
    let mut converged = false;
    for iteration in 0..PG_MAX_ITERATIONS {
        let yq = disc.sh_quad(&u);
        let residual: Vec<f64> = spec.problem.reduced_target().iter().zip(&yq).map(|(z, y)| z - y).collect();
        let pq = disc.sh_quad(&residual);
        let next: Vec<f64> = u
            .iter()
            .zip(&pq)
            .zip(&lambda_q)
            .map(|((&uv, &pv), &lv)| bounds.clamp(uv - step * (-pv + alpha * uv - alpha * lv)))
            .collect();
        let change = disc.dist(&next, &u);
        if !change.is_finite() {
            return Err(Error::NonFinite("projected-gradient iterate"));
        }
        if change <= tol {
            converged = true;
            break;
        }
        u = next;
        steps_taken = iteration + 1;
        diagnostics.steps.push(SolveStep {
            iteration: steps_taken,
            b_value: f64::NAN,
            objective: objective_q(spec, &u, &lambda_q),
            active_lower: u.iter().filter(|&&v| v <= bounds.lower()).count(),
            active_upper: u.iter().filter(|&&v| v >= bounds.upper()).count(),
            inner_iterations: 0,
        });
    }

    let ev = evaluate(spec, &u, &lambda_q);
    let control = project_uad(ev.g, bounds);
    let uq = control.quad_values(disc)?;
    let final_ev = evaluate(spec, &uq, &lambda_q);
    Ok(SubproblemResult {
        u: control,
        y_h: final_ev.y,
        p_h: final_ev.p,
        b_value: final_ev.b_value,
        newton_iterations: steps_taken,
        converged,
        diagnostics,
    })
}
