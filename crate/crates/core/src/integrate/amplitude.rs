use super::{Repr, Trajectory};
use crate::error::{Error, Result};

/// `ν₀ a - a³/12`.
pub fn amplitude_drift(nu0: f64, a: f64) -> f64 {
    nu0 * a - a * a * a / 12.0
}

/// Stratonovich Heun for `da = (ν₀ a - a³/12) dT + a ∘ dW̃`.
///
/// `w` holds `W̃` at `T_n = n·dt`, `n = 0..=N`.
pub fn integrate_amplitude(nu0: f64, a0: f64, dt: f64, w: &[f64]) -> Result<Trajectory> {
    if !(dt > 0.0) {
        return Err(Error::config(format!("dt must be positive, got {dt}")));
    }
    if w.is_empty() {
        return Err(Error::config("driving path is empty"));
    }
    let mut a = a0;
    let mut states = Vec::with_capacity(w.len());
    states.push(vec![a]);
    for (n, pair) in w.windows(2).enumerate() {
        let dw = pair[1] - pair[0];
        let f = amplitude_drift(nu0, a);
        let pred = a + f * dt + a * dw;
        a += 0.5 * (f + amplitude_drift(nu0, pred)) * dt + 0.5 * (a + pred) * dw;
        if !a.is_finite() {
            return Err(Error::BlowUp {
                time: (n + 1) as f64 * dt,
                norm: a.abs(),
            });
        }
        states.push(vec![a]);
    }
    Ok(Trajectory {
        times: (0..w.len()).map(|n| n as f64 * dt).collect(),
        states,
        repr: Repr::U,
    })
}
