//! Solver library for second-order Dirichlet boundary value problems with
//! deviated arguments,
//!
//! ```text
//! -u''(t) = f(t, u(dx(t)), u(dy(t)))   on [0, T],
//!  u(t)   = phi(t)                     on [-r, 0],
//!  u(T)   = B,
//! ```
//!
//! where the deviations map `[0, T]` into `[-r, T]` (delays and advances) and
//! the nonlinearity may be discontinuous and non-monotone.
//!
//! Two solution paths are provided. For Lipschitz right-hand sides passing a
//! smallness condition, [`contraction`] iterates the boundary-matching
//! integral operator to the unique solution. For merely one-sided Lipschitz
//! right-hand sides bracketed by a lower and an upper solution, [`monotone`]
//! runs the generalized monotone method: each outer step solves a linear
//! auxiliary problem via the contraction solver and the two iterate sequences
//! pinch the extremal solutions. [`conditions`] decides the smallness
//! conditions and the maximum-principle variants that make all this valid,
//! and [`jumps`] turns declared upward jumps into certified one-sided
//! Lipschitz coefficients.
//!
//! The `devbvp` binary exposes everything over JSON problem files; see the
//! README.

// negated comparisons like !(x > 0.0) reject NaN, which x <= 0.0 would let through
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conditions;
pub mod config;
pub mod contraction;
pub mod error;
pub mod expr;
pub mod grid;
pub mod jumps;
pub mod model;
pub mod monotone;

pub use error::{Error, Result};
