//! Pathwise integrators: the full random PDE, the reduction to the manifold and
//! the amplitude equation.

mod amplitude;
mod full;
mod reduced;
mod trajectory;

pub use amplitude::{amplitude_drift, integrate_amplitude};
pub use full::{integrate_v, integrate_v_from, StepOptions, BLOW_UP_GUARD};
pub use reduced::{integrate_reduced, reduced_drift, ReducedMode, ReducedOptions};
pub use trajectory::{Repr, Trajectory};
