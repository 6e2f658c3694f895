//! Solver and verification laboratory for the stationary Kuramoto mean field
//! game on the torus.
//!
//! The dimensionless stationary problem is
//!
//! ```text
//! -v'' + lambda v + v'^2 / 2 = -zeta cos x,    f = e^{-v} / int e^{-v},
//! A(zeta) = int cos(x) f(x) dx.
//! ```
//!
//! [`hjb`] solves for `v`, [`sensitivity`] differentiates the branch in `zeta`
//! and evaluates the exact first- and second-derivative identities for `A`,
//! [`shape`] and [`moments`] numerically certify the inequalities behind the
//! sign of `A''`, [`bifurcation`] maps back to physical parameters and
//! locates the synchronized fixed point, and [`sde`] checks equilibria by
//! Monte Carlo simulation.

// `!(x > t)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bifurcation;
pub mod error;
pub mod grid;
pub mod hjb;
pub mod linear;
pub mod margin;
pub mod moments;
pub mod par;
pub mod quadrature;
pub mod report;
pub mod sde;
pub mod sensitivity;
pub mod shape;

pub use error::{Error, Result};
pub use grid::{make_grid, GridFn, TorusGrid, TrigInterpolant};
pub use hjb::{solve_hjb, HjbSolution, ModelParams, SolverOptions};

pub use margin::{InequalityMargin, MarginReport};
pub use par::Execution;
