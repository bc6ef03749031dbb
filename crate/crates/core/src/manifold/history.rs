use serde::{Deserialize, Serialize};

/// A discretized backward history `v(t_i)`, `t_i = -i·h`, `i = 0..=N`.
///
/// Values are stored in the scaled form `v̂_i = e^{-∫₀^{t_i} z} v(t_i)`, in
/// which the weighted norm is simply `max_i e^{η t_i} |v̂_i|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryFunction {
    pub(crate) step: f64,
    pub(crate) n_total: usize,
    pub(crate) eta: f64,
    pub(crate) weight: f64,
    pub(crate) zint: Vec<f64>,
    pub(crate) hat: Vec<f64>,
}

impl HistoryFunction {
    pub fn n_nodes(&self) -> usize {
        self.zint.len()
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn time(&self, i: usize) -> f64 {
        -(i as f64) * self.step
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// `v(t_i)`.
    pub fn value(&self, i: usize) -> Vec<f64> {
        let s = self.zint[i].exp();
        self.hat_value(i).iter().map(|x| x * s).collect()
    }

    pub(crate) fn hat_value(&self, i: usize) -> &[f64] {
        &self.hat[i * self.n_total..(i + 1) * self.n_total]
    }

    /// `max_i e^{η t_i - ∫₀^{t_i} z} |v(t_i)|`.
    pub fn weighted_norm(&self) -> f64 {
        weighted_norm_of(&self.hat, self.n_total, self.step, self.eta, self.weight, ..)
    }

    /// Weighted norm of the modes in `modes` only.
    pub fn weighted_norm_modes(&self, modes: std::ops::Range<usize>) -> f64 {
        weighted_norm_of(&self.hat, self.n_total, self.step, self.eta, self.weight, modes)
    }

    /// Weighted norm of `self - other` restricted to `modes`.
    pub fn weighted_dist_modes(&self, other: &HistoryFunction, modes: std::ops::Range<usize>) -> f64 {
        let diff: Vec<f64> = self.hat.iter().zip(&other.hat).map(|(a, b)| a - b).collect();
        weighted_norm_of(&diff, self.n_total, self.step, self.eta, self.weight, modes)
    }
}

pub(crate) fn weighted_norm_of<R>(hat: &[f64], n: usize, step: f64, eta: f64, weight: f64, modes: R) -> f64
where
    R: std::ops::RangeBounds<usize> + Clone,
{
    hat.chunks_exact(n)
        .enumerate()
        .map(|(i, v)| {
            let sq: f64 = v
                .iter()
                .enumerate()
                .filter(|(k, _)| modes.contains(k))
                .map(|(_, x)| x * x)
                .sum();
            (-eta * i as f64 * step).exp() * (weight * sq).sqrt()
        })
        .fold(0.0, f64::max)
}
