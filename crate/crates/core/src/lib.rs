//! Inexact Bregman iterative regularization for control-constrained,
//! linear-quadratic optimal control of the Poisson equation on the unit square.
//!
//! The crate is organised bottom-up:
//!
//! - [`mesh`], [`quadrature`], [`sparse`], [`banded`] and [`fem`] provide the P1
//!   finite-element solution operator `S_h` (and its adjoint, which coincides
//!   with it for `Y = L²`).
//! - [`control`] holds the admissible set, the clamped-control representation,
//!   the regularizer `J(u) = ½‖u‖² + I_Uad(u)` and its Bregman distance.
//! - [`subproblem`] solves the regularized subproblem with a semismooth Newton
//!   (primal-dual active set) method and certifies the result with the
//!   projection-residual estimator `B(α, λ, u)`.
//! - [`schedule`] and [`bregman`] drive the outer inexact Bregman loop and keep
//!   the bookkeeping (`γ_k`, `ρ_k`, the `R_i`/`H_i` error-sum terms and the
//!   stopping index `k(h)`).
//! - [`example`] is the manufactured bang-bang problem with closed-form solution.

pub mod banded;
pub mod bregman;
pub mod control;
pub mod error;
pub mod example;
pub mod fem;
pub mod field;
pub mod mesh;
pub mod quadrature;
pub mod schedule;
pub mod sparse;
pub mod subproblem;
pub mod summation;

pub use error::{Error, Result};
pub use field::{Point, ScalarField};
