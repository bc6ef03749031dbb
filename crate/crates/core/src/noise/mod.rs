//! Two-sided Brownian paths, the stationary OU process driven by them, and the
//! path functionals built on top.

mod grid;
pub mod io;
mod path;
mod rng;

pub use grid::TimeGrid;
pub use path::{
    compute_k_functionals, derive_ou, k2_bound_constant, sample_brownian, shift_path,
    z_at_zero, BrownianPath, KFunctionals, NoisePath, OuInit, ZAtZero,
};
pub use rng::PathSeed;
pub(crate) use rng::Purpose;
