//! Manufactured bang-bang problem on the unit square with closed-form solution.
//!
//! With `s1 = sin(πx)sin(πy)` and `s2 = sin(2πx)sin(2πy)`:
//!
//! ```text
//! y† = s1,   z = s1 + s2,   p† = S^*(z − y†) = s2 / (8π²),
//! u† = sign(p†) ∈ {−1, 0, 1},   e_Ω = 2π² s1 − u†.
//! ```
//!
//! Written with the opposite sign convention for the adjoint the same data read
//! `p = −s2/(8π²)` and `u† = −sign(p)`; that form is available as
//! [`AnalyticTriple::printed_adjoint`].

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::control::BoxBounds;
use crate::error::{Error, Result};
use crate::fem::{least_squares_line, Discretization};
use crate::field::{Point, ScalarField};
use crate::subproblem::ProblemData;

/// `sin(πt)`, exactly zero at integer `t` so that the zero lines of `p†`
/// are hit exactly.
fn sin_pi(t: f64) -> f64 {
    let r = t.rem_euclid(2.0);
    if r == 0.0 || r == 1.0 {
        0.0
    } else {
        (PI * r).sin()
    }
}

fn s1(p: Point) -> f64 {
    sin_pi(p[0]) * sin_pi(p[1])
}

fn s2(p: Point) -> f64 {
    sin_pi(2.0 * p[0]) * sin_pi(2.0 * p[1])
}

/// `sign` with `sign(0) = 0`.
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `max |p†| = 1/(8π²)`.
pub fn adjoint_peak() -> f64 {
    1.0 / (8.0 * PI * PI)
}

/// One of the closed-form fields of the example.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExampleField {
    Control,
    State,
    Adjoint,
    PrintedAdjoint,
    Source,
    Target,
    /// `−Δy†`
    StateLaplacian,
    /// `−Δp†`
    AdjointLaplacian,
}

impl ScalarField for ExampleField {
    fn eval(&self, p: Point) -> f64 {
        match self {
            ExampleField::Control => sign(s2(p)),
            ExampleField::State => s1(p),
            ExampleField::Adjoint => s2(p) * adjoint_peak(),
            ExampleField::PrintedAdjoint => -s2(p) * adjoint_peak(),
            ExampleField::Source => 2.0 * PI * PI * s1(p) - sign(s2(p)),
            ExampleField::Target => s1(p) + s2(p),
            ExampleField::StateLaplacian => 2.0 * PI * PI * s1(p),
            ExampleField::AdjointLaplacian => s2(p),
        }
    }
}

/// The manufactured solution `(u†, y†, p†)` with its data `e_Ω`, `z` and the
/// bounds `[−1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticTriple {
    bounds: BoxBounds,
}

pub fn build_example() -> AnalyticTriple {
    AnalyticTriple {
        bounds: BoxBounds::new(-1.0, 1.0).expect("valid bounds"),
    }
}

impl AnalyticTriple {
    pub fn control(&self) -> ExampleField {
        ExampleField::Control
    }

    pub fn state(&self) -> ExampleField {
        ExampleField::State
    }

    /// `p† = S^*(z − y†)`.
    pub fn adjoint(&self) -> ExampleField {
        ExampleField::Adjoint
    }

    /// `−p†`, the adjoint under the convention `p = S^*(Su − z)`.
    pub fn printed_adjoint(&self) -> ExampleField {
        ExampleField::PrintedAdjoint
    }

    pub fn source(&self) -> ExampleField {
        ExampleField::Source
    }

    pub fn target(&self) -> ExampleField {
        ExampleField::Target
    }

    /// `−Δy† = u† + e_Ω`.
    pub fn state_laplacian(&self) -> ExampleField {
        ExampleField::StateLaplacian
    }

    /// `−Δp† = z − y†`.
    pub fn adjoint_laplacian(&self) -> ExampleField {
        ExampleField::AdjointLaplacian
    }

    pub fn bounds(&self) -> BoxBounds {
        self.bounds
    }

    /// Discrete problem data on `disc`.
    pub fn problem(&self, disc: Arc<Discretization>) -> Result<ProblemData> {
        ProblemData::new(disc, &self.target(), &self.source(), self.bounds)
    }

    /// Writes `x,y,u,y,p,e,z` on a `resolution × resolution` vertex grid.
    pub fn write_samples<W: Write>(&self, resolution: usize, mut out: W) -> Result<()> {
        if resolution < 1 {
            return Err(Error::InvalidParameter("resolution must be positive".into()));
        }
        writeln!(out, "x,y,u_truth,y_truth,p_truth,e_source,z")?;
        for j in 0..=resolution {
            for i in 0..=resolution {
                let p = [i as f64 / resolution as f64, j as f64 / resolution as f64];
                writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    p[0],
                    p[1],
                    self.control().eval(p),
                    self.state().eval(p),
                    self.adjoint().eval(p),
                    self.source().eval(p),
                    self.target().eval(p)
                )?;
            }
        }
        Ok(())
    }
}

/// Result of checking the optimality system on one mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalityReport {
    /// Quadrature points with `|p†| > 1e-12`.
    pub sign_checked: usize,
    /// Of those, points where `u† = sign(p†)` holds exactly.
    pub sign_agree: usize,
    /// Smallest `(−p_h†, v − u†)` over the random feasible `v`.
    pub vi_min: f64,
    /// `(−p_h†, u† − u†)`.
    pub vi_at_truth: f64,
    /// `‖p_h† − p†‖`.
    pub adjoint_error: f64,
}

impl OptimalityReport {
    pub fn sign_fraction(&self) -> f64 {
        if self.sign_checked == 0 {
            1.0
        } else {
            self.sign_agree as f64 / self.sign_checked as f64
        }
    }
}

/// Checks the sign relation at the quadrature points of `disc` and the
/// discrete variational inequality with `p_h† = S_h^*(z̃ − S_h u†)` over
/// `samples` random feasible controls.
pub fn verify_optimality(
    triple: &AnalyticTriple,
    disc: Arc<Discretization>,
    seed: u64,
    samples: usize,
) -> Result<OptimalityReport> {
    let problem = triple.problem(Arc::clone(&disc))?;
    let uq = disc.sample(&triple.control());
    let pq = disc.sample(&triple.adjoint());

    let (mut sign_checked, mut sign_agree) = (0, 0);
    for (u, p) in uq.iter().zip(&pq) {
        if p.abs() > 1e-12 {
            sign_checked += 1;
            let expected = if *p < 0.0 {
                triple.bounds.lower()
            } else {
                triple.bounds.upper()
            };
            if *u == expected {
                sign_agree += 1;
            }
        }
    }

    let (_, p_h) = problem.state_and_adjoint(&uq);
    let phq = disc.eval_p1(p_h.coeffs());
    let neg_p: Vec<f64> = phq.iter().map(|v| -v).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bounds = triple.bounds;
    let mut vi_min = f64::INFINITY;
    for _ in 0..samples {
        let diff: Vec<f64> = uq
            .iter()
            .map(|u| rng.random_range(bounds.lower()..=bounds.upper()) - u)
            .collect();
        vi_min = vi_min.min(disc.inner(&neg_p, &diff));
    }
    let zero = vec![0.0; uq.len()];
    Ok(OptimalityReport {
        sign_checked,
        sign_agree,
        vi_min,
        vi_at_truth: disc.inner(&neg_p, &zero),
        adjoint_error: disc.dist(&phq, &pq),
    })
}

/// Numerical check of the measure condition `|{0 < |p†| < ε}| ≤ c ε^κ`.
#[derive(Debug, Clone, PartialEq)]
pub struct AscReport {
    /// Exponent being tested.
    pub kappa: f64,
    pub eps: Vec<f64>,
    /// `m(ε) = |{x : 0 < |p†(x)| < ε}|`.
    pub measures: Vec<f64>,
    /// Slope of the least-squares line through `(log ε, log m)`.
    pub fitted_exponent: f64,
    /// Smallest `c` with `m(ε) ≤ c ε^κ` on the grid.
    pub fitted_c: f64,
    pub passed: bool,
}

/// Accepted range for the fitted exponent.
pub const ASC_EXPONENT_RANGE: (f64, f64) = (0.9, 1.1);

/// `m(ε)` for every `ε` on the grid, by midpoint quadrature of the indicator
/// on a `resolution × resolution` cell grid.
pub fn asc_measures(eps_grid: &[f64], resolution: usize) -> Result<Vec<f64>> {
    let upper = 1.5 * adjoint_peak();
    if eps_grid.is_empty() {
        return Err(Error::InvalidParameter("empty epsilon grid".into()));
    }
    if let Some(bad) = eps_grid.iter().find(|&&e| !(e > 0.0 && e <= upper)) {
        return Err(Error::InvalidParameter(format!(
            "epsilon {bad} outside (0, {upper:.6e}]"
        )));
    }
    if resolution < 2 {
        return Err(Error::InvalidParameter("sampler resolution must be at least 2".into()));
    }

    let mut sorted: Vec<f64> = eps_grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();

    // The field is separable: |p†| = |a_i b_j| / (8π²).
    let axis: Vec<f64> = (0..resolution)
        .map(|i| sin_pi(2.0 * (i as f64 + 0.5) / resolution as f64))
        .collect();
    let scale = adjoint_peak();
    // bins[j] counts points whose |p| lies in [sorted[j−1], sorted[j]).
    let mut bins = vec![0u64; sorted.len() + 1];
    for a in &axis {
        for b in &axis {
            let v = (a * b).abs() * scale;
            if v > 0.0 {
                bins[sorted.partition_point(|&e| e <= v)] += 1;
            }
        }
    }
    let cell = 1.0 / (resolution as f64 * resolution as f64);
    let mut cumulative = Vec::with_capacity(sorted.len());
    let mut running = 0u64;
    for count in &bins[..sorted.len()] {
        running += count;
        cumulative.push(running as f64 * cell);
    }
    Ok(eps_grid
        .iter()
        .map(|e| cumulative[sorted.partition_point(|s| s < e)])
        .collect())
}

/// Fits `m(ε) ~ c ε^κ` over `eps_grid`; passes when the fitted exponent lies
/// in [`ASC_EXPONENT_RANGE`] around `κ = 1`.
pub fn verify_asc(_triple: &AnalyticTriple, eps_grid: &[f64], resolution: usize) -> Result<AscReport> {
    if eps_grid.len() < 2 {
        return Err(Error::InvalidParameter("exponent fit needs at least two epsilons".into()));
    }
    let measures = asc_measures(eps_grid, resolution)?;
    if measures.iter().any(|&m| m <= 0.0) {
        return Err(Error::InvalidParameter(
            "sampler too coarse: empty sublevel set on the grid".into(),
        ));
    }
    let kappa = 1.0;
    let xs: Vec<f64> = eps_grid.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = measures.iter().map(|m| m.ln()).collect();
    let (fitted_exponent, _) = least_squares_line(&xs, &ys);
    let fitted_c = eps_grid
        .iter()
        .zip(&measures)
        .map(|(e, m)| m / e.powf(kappa))
        .fold(0.0, f64::max);
    let passed = fitted_exponent >= ASC_EXPONENT_RANGE.0 && fitted_exponent <= ASC_EXPONENT_RANGE.1;
    Ok(AscReport {
        kappa,
        eps: eps_grid.to_vec(),
        measures,
        fitted_exponent,
        fitted_c,
        passed,
    })
}

/// `n` logarithmically spaced values from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}
