//! Local random invariant manifolds for spectral Galerkin truncations of
//! stochastic PDEs with quadratic nonlinearity and scalar multiplicative
//! Stratonovich noise.
//!
//! The noise enters through the OU substitution `v = e^{-z} u`, which turns the
//! SPDE into a random PDE that is integrated pathwise. The manifold over the
//! kernel modes is the fixed point of a Lyapunov–Perron integral operator on a
//! weighted space of backward histories.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiments;
pub mod format;
pub mod integrate;
pub mod manifold;
pub mod model;
pub mod noise;

pub use error::{Error, Result};
