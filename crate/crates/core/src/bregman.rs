//! The inexact Bregman iteration and its error-sum bookkeeping.
//!
//! Starting from `u_0 = P_Uad(0)` and `λ_0 = 0`, iteration `k` finds `u_k`
//! with `B(α_k, λ_{k−1}, u_k) ≤ ε_k` and sets
//! `λ_k = λ_{k−1} + α_k^{-1} S_h^*(z̃ − S_h u_k)`.
//!
//! Alongside the iterates the driver tracks `γ_k = Σ 1/α_i`,
//! `ρ_k = (α_k^{-1}(1 + α_k^{-1}))^{1/2}`, the accuracy terms
//! `R_i = ε_i/α_i + ε_i²/α_i² + γ_{i−1}ε_i/α_i + ε_i²/α_i` and the
//! discretization terms
//! `H_i = δ(ρ_i/α_i + γ_{i−1}/α_i + γ_{i−1}ρ_i/α_i) + δ²(ρ_i²/α_i² + ρ_i²/α_i)`.

use std::io::Write;
use std::sync::Arc;

use crate::control::{project_uad, Control, DualVariable};
use crate::error::{Error, Result};
use crate::example::AnalyticTriple;
use crate::fem::FEFunction;
use crate::schedule::Schedules;
use crate::subproblem::{solve_ssn_from, ProblemData, SubproblemSpec};
use crate::summation::CompensatedSum;

/// Accuracy used when the schedule asks for an exact solve (`ε_k = 0`).
pub const EXACT_SOLVE_TOLERANCE: f64 = 1e-11;

/// Regularity assumption selecting which error sums are reported.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regularity {
    /// Source condition: `R_i` and `H_i` only.
    Source,
    /// Active-set condition with exponent `κ`: adds `γ_{i−1}^{−κ}/α_i`.
    ActiveSet { kappa: f64 },
}

/// Per-iteration arithmetic terms of the error-sum bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoremTerms {
    pub i: usize,
    pub alpha: f64,
    pub epsilon: f64,
    pub gamma_prev: f64,
    pub gamma: f64,
    pub rho: f64,
    pub r: f64,
    pub h: f64,
    /// `γ_{i−1}^{−κ}/α_i` (zero for `i = 1` and under [`Regularity::Source`]).
    pub asc: f64,
    pub sum_r: f64,
    pub sum_h: f64,
    pub sum_asc: f64,
}

/// `ρ_k = (α_k^{-1}(1 + α_k^{-1}))^{1/2}`.
pub fn rho(alpha: f64) -> f64 {
    (1.0 / alpha * (1.0 + 1.0 / alpha)).sqrt()
}

/// `R_i` for given `α_i`, `ε_i` and `γ_{i−1}`.
pub fn r_term(alpha: f64, epsilon: f64, gamma_prev: f64) -> f64 {
    epsilon / alpha + epsilon * epsilon / (alpha * alpha) + gamma_prev * epsilon / alpha + epsilon * epsilon / alpha
}

/// `H_i` for given `α_i`, `γ_{i−1}` and `δ(h)`.
pub fn h_term(alpha: f64, gamma_prev: f64, delta: f64) -> f64 {
    let rho = rho(alpha);
    let rho2 = rho * rho;
    delta * (rho / alpha + gamma_prev / alpha + gamma_prev * rho / alpha)
        + delta * delta * (rho2 / (alpha * alpha) + rho2 / alpha)
}

/// Streams [`TheoremTerms`] for a sequence of `(α_i, ε_i)` pairs.
#[derive(Debug, Clone)]
pub struct TheoremAccumulator {
    delta: f64,
    regularity: Regularity,
    i: usize,
    gamma: CompensatedSum,
    sum_r: CompensatedSum,
    sum_h: CompensatedSum,
    sum_asc: CompensatedSum,
}

impl TheoremAccumulator {
    pub fn new(delta: f64, regularity: Regularity) -> Self {
        Self {
            delta,
            regularity,
            i: 0,
            gamma: CompensatedSum::new(),
            sum_r: CompensatedSum::new(),
            sum_h: CompensatedSum::new(),
            sum_asc: CompensatedSum::new(),
        }
    }

    pub fn push(&mut self, alpha: f64, epsilon: f64) -> TheoremTerms {
        self.i += 1;
        let gamma_prev = self.gamma.value();
        let r = r_term(alpha, epsilon, gamma_prev);
        let h = h_term(alpha, gamma_prev, self.delta);
        // γ_0 = 0: the ASC series starts at i = 2.
        let asc = match self.regularity {
            Regularity::ActiveSet { kappa } if gamma_prev > 0.0 => gamma_prev.powf(-kappa) / alpha,
            _ => 0.0,
        };
        self.gamma.add(1.0 / alpha);
        self.sum_r.add(r);
        self.sum_h.add(h);
        self.sum_asc.add(asc);
        TheoremTerms {
            i: self.i,
            alpha,
            epsilon,
            gamma_prev,
            gamma: self.gamma.value(),
            rho: rho(alpha),
            r,
            h,
            asc,
            sum_r: self.sum_r.value(),
            sum_h: self.sum_h.value(),
            sum_asc: self.sum_asc.value(),
        }
    }
}

/// Error-sum terms for the iterations `1..=pairs.len()`.
pub fn theorem_sums(pairs: &[(f64, f64)], delta: f64, regularity: Regularity) -> Vec<TheoremTerms> {
    let mut acc = TheoremAccumulator::new(delta, regularity);
    pairs.iter().map(|&(a, e)| acc.push(a, e)).collect()
}

/// Error-sum terms generated directly from a schedule.
pub fn theorem_sums_for_schedule(
    schedules: &Schedules,
    n_terms: usize,
    delta: f64,
    regularity: Regularity,
) -> Vec<TheoremTerms> {
    let mut acc = TheoremAccumulator::new(delta, regularity);
    (1..=n_terms)
        .map(|k| acc.push(schedules.alpha(k), schedules.epsilon(k)))
        .collect()
}

/// Numerical series tests for a schedule.
///
/// The decay exponent `p` of a term sequence `t_i ~ i^{−p}` is estimated from
/// `t_{N/2}` and `t_N`; `Σ t_i` is declared summable when `p > 1` and a
/// sequence is declared null when `p > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummabilityReport {
    pub n_terms: usize,
    /// Decay exponent of `R_i`.
    pub r_decay: f64,
    /// Whether `Σ R_i < ∞` (source-condition requirement).
    pub sc_summable: bool,
    /// Decay exponent of `γ_{i−1} ε_i`.
    pub product_decay: f64,
    /// Whether `γ_{i−1} ε_i → 0` (active-set requirement).
    pub asc_condition: bool,
    pub partial_sum_r: f64,
}

pub fn summability(schedules: &Schedules, n_terms: usize) -> Result<SummabilityReport> {
    if n_terms < 4 {
        return Err(Error::InvalidParameter("summability needs at least 4 terms".into()));
    }
    let terms = theorem_sums_for_schedule(schedules, n_terms, 0.0, Regularity::Source);
    let half = &terms[n_terms / 2 - 1];
    let last = &terms[n_terms - 1];
    let decay = |a: f64, b: f64| -> f64 {
        if b == 0.0 {
            f64::INFINITY
        } else {
            (a / b).ln() / (last.i as f64 / half.i as f64).ln()
        }
    };
    let r_decay = decay(half.r, last.r);
    let product_decay = decay(half.gamma_prev * half.epsilon, last.gamma_prev * last.epsilon);
    Ok(SummabilityReport {
        n_terms,
        r_decay,
        sc_summable: r_decay > 1.0,
        product_decay,
        asc_condition: product_decay > 0.0,
        partial_sum_r: last.sum_r,
    })
}

/// `k(h) = max{k : Σ_{i≤k} H_i ≤ C}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StoppingIndex {
    Bounded(usize),
    /// `δ(h) = 0`: every `H_i` vanishes.
    Unbounded,
}

impl StoppingIndex {
    pub fn as_option(&self) -> Option<usize> {
        match self {
            StoppingIndex::Bounded(k) => Some(*k),
            StoppingIndex::Unbounded => None,
        }
    }
}

impl std::fmt::Display for StoppingIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StoppingIndex::Bounded(k) => write!(f, "{k}"),
            StoppingIndex::Unbounded => write!(f, "inf"),
        }
    }
}

/// Scan limit for [`stopping_index`]; with bounded `α_k` the sum `Σ H_i`
/// grows at least quadratically, so real budgets stop far earlier.
pub const STOPPING_SCAN_LIMIT: usize = 100_000_000;

/// Largest `k` with `Σ_{i≤k} H_i ≤ C`, by forward accumulation.
pub fn stopping_index(schedules: &Schedules, delta: f64, budget: f64) -> Result<StoppingIndex> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::InvalidParameter(format!("delta must be nonnegative, got {delta}")));
    }
    if !(budget > 0.0 && budget.is_finite()) {
        return Err(Error::InvalidParameter(format!("budget must be positive, got {budget}")));
    }
    if delta == 0.0 {
        return Ok(StoppingIndex::Unbounded);
    }
    let mut acc = TheoremAccumulator::new(delta, Regularity::Source);
    let first = acc.push(schedules.alpha(1), schedules.epsilon(1));
    if first.sum_h > budget {
        return Err(Error::InadmissibleBudget {
            budget,
            first_term: first.h,
        });
    }
    for k in 2..=STOPPING_SCAN_LIMIT {
        let t = acc.push(schedules.alpha(k), schedules.epsilon(k));
        if t.sum_h > budget {
            return Ok(StoppingIndex::Bounded(k - 1));
        }
    }
    Err(Error::InvalidParameter(format!(
        "stopping index exceeds the scan limit {STOPPING_SCAN_LIMIT}"
    )))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoppingEntry {
    pub h: f64,
    pub delta: f64,
    pub k: StoppingIndex,
}

/// Stopping indices over a mesh family.
#[derive(Debug, Clone, PartialEq)]
pub struct StoppingIndexReport {
    pub budget: f64,
    /// Sorted by decreasing `h`.
    pub entries: Vec<StoppingEntry>,
    /// `k(h)` nondecreasing as `h` decreases; `None` for a single mesh.
    pub nondecreasing: Option<bool>,
    /// `k(h_min) > k(h_max)`; `None` for a single mesh.
    pub strictly_increases: Option<bool>,
}

/// Stopping indices for `(h, δ(h))` pairs. The budget must be admissible for
/// the coarsest mesh (largest `δ`).
pub fn stopping_index_report(
    schedules: &Schedules,
    family: &[(f64, f64)],
    budget: f64,
) -> Result<StoppingIndexReport> {
    if family.is_empty() {
        return Err(Error::InvalidParameter("empty mesh family".into()));
    }
    let mut sorted = family.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let entries = sorted
        .iter()
        .map(|&(h, delta)| {
            Ok(StoppingEntry {
                h,
                delta,
                k: stopping_index(schedules, delta, budget)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let key = |k: StoppingIndex| k.as_option().unwrap_or(usize::MAX);
    let (nondecreasing, strictly_increases) = if entries.len() < 2 {
        (None, None)
    } else {
        let nd = entries.windows(2).all(|w| key(w[1].k) >= key(w[0].k));
        let strict = key(entries[entries.len() - 1].k) > key(entries[0].k);
        (Some(nd), Some(strict))
    };
    Ok(StoppingIndexReport {
        budget,
        entries,
        nondecreasing,
        strictly_increases,
    })
}

/// One row of the iteration history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    pub alpha: f64,
    /// Accuracy actually requested from the subproblem solver.
    pub epsilon: f64,
    pub b_value: f64,
    pub newton_iterations: usize,
    /// `½‖S_h u_k − z̃‖²`.
    pub h_value: f64,
    pub err_u: Option<f64>,
    pub err_y: Option<f64>,
    pub err_p: Option<f64>,
    /// `‖γ_k^{-1} λ_k − p†‖`.
    pub dual_err: Option<f64>,
    /// `Σ α_i^{-1}‖u_i − u†‖² / (1 + ΣR + ΣH [+ Σ ASC])`.
    pub bound_ratio: Option<f64>,
    pub gamma: f64,
    pub rho: f64,
    pub r_term: f64,
    pub h_term: f64,
    pub sum_r: f64,
    pub sum_h: f64,
}

pub const HISTORY_COLUMNS: &str =
    "k,alpha,epsilon,b_value,newton_iterations,h_value,err_u,err_y,err_p,dual_err,bound_ratio,gamma,rho,r_term,h_term,sum_r,sum_h";

/// Writes the iteration history as CSV; `comments` are emitted first, each
/// prefixed with `# `.
pub fn write_history_csv<W: Write>(records: &[IterationRecord], comments: &[String], mut out: W) -> std::io::Result<()> {
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    writeln!(out, "{HISTORY_COLUMNS}")?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
    for r in records {
        writeln!(
            out,
            "{},{:e},{:e},{:e},{},{:e},{},{},{},{},{},{:e},{:e},{:e},{:e},{:e},{:e}",
            r.k,
            r.alpha,
            r.epsilon,
            r.b_value,
            r.newton_iterations,
            r.h_value,
            opt(r.err_u),
            opt(r.err_y),
            opt(r.err_p),
            opt(r.dual_err),
            opt(r.bound_ratio),
            r.gamma,
            r.rho,
            r.r_term,
            r.h_term,
            r.sum_r,
            r.sum_h
        )?;
    }
    Ok(())
}

/// State of the outer iteration after `k` steps.
#[derive(Debug, Clone)]
pub struct BregmanState {
    pub k: usize,
    /// `u_k^in`.
    pub u: Control,
    /// `λ_k^in`.
    pub lambda: DualVariable,
    /// `γ_k`, compensated sum.
    pub gamma: f64,
    pub history: Vec<IterationRecord>,
    /// Base fields of `u_1, …, u_k` when [`BregmanOptions::keep_controls`] is set.
    pub controls: Vec<FEFunction>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BregmanOptions {
    pub ssn_max_iter: usize,
    /// Start subproblem `k + 1` from `u_k`.
    pub warm_start: bool,
    /// `δ(h)` used for the `H_i` terms (0 when unknown).
    pub delta: f64,
    pub regularity: Regularity,
    pub keep_controls: bool,
}

impl Default for BregmanOptions {
    fn default() -> Self {
        Self {
            ssn_max_iter: 50,
            warm_start: true,
            delta: 0.0,
            regularity: Regularity::ActiveSet { kappa: 1.0 },
            keep_controls: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunStatus {
    Completed,
    /// The subproblem at iteration `k` did not reach its accuracy.
    SubproblemFailed { k: usize, b_value: f64, epsilon: f64 },
}

#[derive(Debug, Clone)]
pub struct BregmanRun {
    pub state: BregmanState,
    pub status: RunStatus,
}

impl BregmanRun {
    pub fn records(&self) -> &[IterationRecord] {
        &self.state.history
    }
}

/// Runs `k_max` steps of the inexact Bregman iteration.
///
/// A subproblem that fails to reach `ε_k` within `ssn_max_iter` Newton steps
/// halts the run; the partial history is returned with
/// [`RunStatus::SubproblemFailed`].
pub fn run_inexact_bregman(
    problem: &ProblemData,
    schedules: &Schedules,
    k_max: usize,
    options: &BregmanOptions,
    truth: Option<&AnalyticTriple>,
) -> Result<BregmanRun> {
    if k_max == 0 {
        return Err(Error::InvalidParameter("k_max must be at least 1".into()));
    }
    let disc = problem.disc();
    let mesh = Arc::clone(disc.mesh());

    let truth_q = truth.map(|t| TruthSamples {
        u: disc.sample(&t.control()),
        y: disc.sample(&t.state()),
        p: disc.sample(&t.adjoint()),
    });
    let shift_q = disc.eval_p1(problem.shift_state().coeffs());

    let mut state = BregmanState {
        k: 0,
        u: problem.zero_control(),
        lambda: DualVariable::zero(Arc::clone(&mesh)),
        gamma: 0.0,
        history: Vec::with_capacity(k_max),
        controls: Vec::new(),
    };
    let mut sums = TheoremAccumulator::new(options.delta, options.regularity);
    let mut weighted_err = CompensatedSum::new();

    for k in 1..=k_max {
        let alpha = schedules.alpha(k);
        let requested = schedules.epsilon(k);
        let epsilon = if requested > 0.0 { requested } else { EXACT_SOLVE_TOLERANCE };

        let spec = SubproblemSpec::new(problem, alpha, &state.lambda)?;
        let start = options.warm_start.then(|| state.u.base());
        let result = solve_ssn_from(&spec, epsilon, options.ssn_max_iter, start)?;
        if !result.converged {
            return Ok(BregmanRun {
                state,
                status: RunStatus::SubproblemFailed {
                    k,
                    b_value: result.b_value,
                    epsilon,
                },
            });
        }

        state.lambda.accumulate(1.0 / alpha, &result.p_h)?;
        let terms = sums.push(alpha, requested);
        state.gamma = terms.gamma;
        state.k = k;

        let uq = result.u.quad_values(disc)?;
        let yq = disc.eval_p1(result.y_h.coeffs());
        let h_value = 0.5 * disc.dist(&yq, problem.reduced_target()).powi(2);

        let (err_u, err_y, err_p, dual_err, bound_ratio) = match &truth_q {
            Some(t) => {
                let err_u = disc.dist(&uq, &t.u);
                let full_y: Vec<f64> = yq.iter().zip(&shift_q).map(|(a, b)| a + b).collect();
                let err_y = disc.dist(&full_y, &t.y);
                let err_p = disc.dist(&disc.eval_p1(result.p_h.coeffs()), &t.p);
                let avg: Vec<f64> = disc
                    .eval_p1(state.lambda.as_function().coeffs())
                    .iter()
                    .map(|l| l / state.gamma)
                    .collect();
                let dual_err = disc.dist(&avg, &t.p);
                weighted_err.add(err_u * err_u / alpha);
                let ratio = weighted_err.value() / (1.0 + terms.sum_r + terms.sum_h + terms.sum_asc);
                (Some(err_u), Some(err_y), Some(err_p), Some(dual_err), Some(ratio))
            }
            None => (None, None, None, None, None),
        };

        state.history.push(IterationRecord {
            k,
            alpha,
            epsilon,
            b_value: result.b_value,
            newton_iterations: result.newton_iterations,
            h_value,
            err_u,
            err_y,
            err_p,
            dual_err,
            bound_ratio,
            gamma: terms.gamma,
            rho: terms.rho,
            r_term: terms.r,
            h_term: terms.h,
            sum_r: terms.sum_r,
            sum_h: terms.sum_h,
        });
        if options.keep_controls {
            state.controls.push(result.u.base().clone());
        }
        state.u = result.u;
    }

    Ok(BregmanRun {
        state,
        status: RunStatus::Completed,
    })
}

struct TruthSamples {
    u: Vec<f64>,
    y: Vec<f64>,
    p: Vec<f64>,
}

/// Recomputes `λ_k = Σ α_i^{-1} S_h^*(z̃ − S_h u_i)` from stored control bases.
pub fn replay_dual(problem: &ProblemData, schedules: &Schedules, controls: &[FEFunction]) -> Result<DualVariable> {
    let disc = problem.disc();
    let mut lambda = DualVariable::zero(Arc::clone(disc.mesh()));
    for (i, base) in controls.iter().enumerate() {
        let u = project_uad(base.clone(), problem.bounds());
        let (_, p) = problem.state_and_adjoint(&u.quad_values(disc)?);
        lambda.accumulate(1.0 / schedules.alpha(i + 1), &p)?;
    }
    Ok(lambda)
}

/// `‖γ_k^{-1} λ_k − p†‖`.
pub fn weighted_dual_error(problem: &ProblemData, state: &BregmanState, p_truth: &dyn crate::field::ScalarField) -> Result<f64> {
    if !(state.gamma > 0.0) {
        return Err(Error::InvalidParameter("weighted dual error needs gamma > 0".into()));
    }
    let disc = problem.disc();
    let avg: Vec<f64> = disc
        .eval_p1(state.lambda.as_function().coeffs())
        .iter()
        .map(|l| l / state.gamma)
        .collect();
    Ok(disc.dist(&avg, &disc.sample(p_truth)))
}
