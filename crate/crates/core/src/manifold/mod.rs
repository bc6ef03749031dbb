//! Lyapunov–Perron construction of the random invariant manifold.
//!
//! Histories live on `t_i = -i·h` over a window `[-T, 0]`. With the scaled
//! history `v̂ = e^{-∫₀ᵗ z} v` and forcing `G = e^{-∫₀ᵗ z} e^{-z} B^(R)(e^{z} v)`,
//! the operator becomes
//!
//! ```text
//! ĉ(t) = e^{νt} ξ + ∫₀ᵗ e^{ν(t-τ)} G_c(τ) dτ
//! ŝ(t) = ∫_{-T}^t e^{(-L_s+ν)(t-τ)} G_s(τ) dτ
//! ```
//!
//! and both integrals are taken exactly per mode against the piecewise-linear
//! interpolant of `G`.

mod chain;
mod distance;
mod history;
mod operator;
mod solve;

pub use chain::GChain;
pub use distance::{dist_to_manifold, Distance, ManifoldChart, CACHE_NODES, XI_TOL};
pub use history::HistoryFunction;
pub use operator::{LpOperator, LpParams, TAIL_TOL};
pub use solve::{ManifoldSample, PsiSample};

use crate::error::Result;
use crate::model::SpectralModel;
use crate::noise::NoisePath;

pub fn apply_t(
    model: &SpectralModel,
    path: &NoisePath,
    params: LpParams,
    xi: &[f64],
    v: &HistoryFunction,
) -> Result<HistoryFunction> {
    LpOperator::new(model, path, params)?.apply(xi, v)
}

pub fn solve_fixed_point(
    model: &SpectralModel,
    path: &NoisePath,
    params: LpParams,
    xi: &[f64],
) -> Result<ManifoldSample> {
    LpOperator::new(model, path, params)?.solve(xi, None)
}

pub fn psi_graph(
    model: &SpectralModel,
    path: &NoisePath,
    params: LpParams,
    xi: &[f64],
) -> Result<Vec<f64>> {
    Ok(LpOperator::new(model, path, params)?.psi(xi, None)?.psi)
}
