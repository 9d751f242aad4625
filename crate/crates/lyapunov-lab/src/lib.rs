//! Numerical laboratory for Lyapunov-based stability of positive semigroups.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops mirror the formulas; several solvers take many scalar knobs.
#![allow(clippy::needless_range_loop, clippy::too_many_arguments, clippy::type_complexity)]

pub mod cli;
pub mod contraction;
pub mod core;
pub mod error;
pub mod geometry;
pub mod kernels;
pub mod numerics;
pub mod riccati;
pub mod simulate;
pub mod spectral;
pub mod subgeometric;

pub use error::{Error, Result};
