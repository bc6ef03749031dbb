use serde::{Deserialize, Serialize};

use super::{Repr, Trajectory};
use crate::error::{check_dim, Error, Result};
use crate::model::SpectralModel;
use crate::noise::NoisePath;

pub const BLOW_UP_GUARD: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepOptions {
    pub nu: f64,
    /// Use `B^(R)` instead of `B`.
    pub cutoff: bool,
    /// Heun corrector on top of the exponential Euler predictor.
    pub corrector: bool,
    pub guard: f64,
}

impl Default for StepOptions {
    fn default() -> Self {
        Self {
            nu: 0.0,
            cutoff: true,
            corrector: true,
            guard: BLOW_UP_GUARD,
        }
    }
}

/// Maps integrator steps onto path grid indices.
pub(crate) struct Clock<'p> {
    path: &'p NoisePath,
    i0: usize,
    stride: usize,
    pub n_steps: usize,
}

impl<'p> Clock<'p> {
    pub fn new(path: &'p NoisePath, t_start: f64, t_end: f64, dt: f64) -> Result<Self> {
        let grid = path.grid();
        let stride = (dt / grid.dt()).round();
        if stride < 1.0 || (stride * grid.dt() - dt).abs() > 1e-9 * dt {
            return Err(Error::config(format!(
                "step {dt} is not a multiple of the path step {}",
                grid.dt()
            )));
        }
        if !(t_end >= t_start) {
            return Err(Error::config("t_end precedes the start time"));
        }
        let span = t_end - t_start;
        let n_steps = (span / dt).round() as usize;
        if (n_steps as f64 * dt - span).abs() > 1e-9 * span.max(1.0) {
            return Err(Error::config(format!("span {span} is not a multiple of dt {dt}")));
        }
        let i0 = grid.index_of(t_start)?;
        let last = i0 + n_steps * stride as usize;
        if last > grid.n_steps() {
            return Err(Error::range(format!(
                "integration to {t_end} runs past the noise path end {}",
                grid.t_end()
            )));
        }
        Ok(Self {
            path,
            i0,
            stride: stride as usize,
            n_steps,
        })
    }

    pub fn index(&self, n: usize) -> usize {
        self.i0 + n * self.stride
    }

    pub fn time(&self, n: usize) -> f64 {
        self.path.grid().time(self.index(n))
    }

    pub fn z(&self, n: usize) -> f64 {
        self.path.z()[self.index(n)]
    }

    /// `∫_{t_n}^{t_{n+1}} z`.
    pub fn z_step(&self, n: usize) -> f64 {
        let zi = self.path.z_integral();
        zi[self.index(n + 1)] - zi[self.index(n)]
    }
}

/// Nonlinear term of the random PDE at scaling `e^{z}`.
pub(crate) fn nonlinearity(model: &SpectralModel, cutoff: bool, z: f64, v: &[f64], out: &mut [f64]) {
    let a = z.exp();
    if cutoff {
        let u: Vec<f64> = v.iter().map(|x| x * a).collect();
        let chi = model.chi(&u);
        if chi == 0.0 {
            out.iter_mut().for_each(|x| *x = 0.0);
            return;
        }
        model.apply_b_into(v, v, out);
        out.iter_mut().for_each(|x| *x *= chi * a);
    } else {
        model.apply_b_into(v, v, out);
        out.iter_mut().for_each(|x| *x *= a);
    }
}

/// Integrates `v' = -Lv + (ν + z) v + e^{-z} B^(R)(e^{z} v)` (or with `B` when
/// the cut-off is off) from `t = 0`.
///
/// Lawson exponential Euler, `v* = E (v + dt N(v, t_n))` with
/// `E = diag exp[(-λ_k+ν) dt + ∫ z]`, and optionally the trapezoidal corrector
/// `v_{n+1} = E v_n + dt/2 (E N_n + N(v*, t_{n+1}))`.
pub fn integrate_v(
    model: &SpectralModel,
    path: &NoisePath,
    v0: &[f64],
    t_end: f64,
    dt: f64,
    opts: StepOptions,
) -> Result<Trajectory> {
    integrate_v_from(model, path, 0.0, v0, t_end, dt, opts)
}

pub fn integrate_v_from(
    model: &SpectralModel,
    path: &NoisePath,
    t_start: f64,
    v0: &[f64],
    t_end: f64,
    dt: f64,
    opts: StepOptions,
) -> Result<Trajectory> {
    let n = model.n_total();
    check_dim(n, v0.len())?;
    if v0.iter().any(|x| !x.is_finite()) {
        return Err(Error::domain("initial state is not finite"));
    }
    let clock = Clock::new(path, t_start, t_end, dt)?;
    let mut times = Vec::with_capacity(clock.n_steps + 1);
    let mut states = Vec::with_capacity(clock.n_steps + 1);
    times.push(clock.time(0));
    states.push(v0.to_vec());
    let mut v = v0.to_vec();
    let mut nl = vec![0.0; n];
    let mut nl2 = vec![0.0; n];
    let mut e = vec![0.0; n];
    let mut pred = vec![0.0; n];
    for step in 0..clock.n_steps {
        let zs = clock.z_step(step);
        for (ek, l) in e.iter_mut().zip(model.lambda()) {
            *ek = ((-l + opts.nu) * dt + zs).exp();
        }
        nonlinearity(model, opts.cutoff, clock.z(step), &v, &mut nl);
        for k in 0..n {
            pred[k] = e[k] * (v[k] + dt * nl[k]);
        }
        if opts.corrector {
            nonlinearity(model, opts.cutoff, clock.z(step + 1), &pred, &mut nl2);
            for k in 0..n {
                v[k] = e[k] * v[k] + 0.5 * dt * (e[k] * nl[k] + nl2[k]);
            }
        } else {
            v.copy_from_slice(&pred);
        }
        let norm = model.norm(&v);
        if !(norm <= opts.guard) {
            return Err(Error::BlowUp {
                time: clock.time(step + 1),
                norm,
            });
        }
        times.push(clock.time(step + 1));
        states.push(v.clone());
    }
    Ok(Trajectory {
        times,
        states,
        repr: Repr::V,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TensorEntry;
    use crate::noise::{derive_ou, sample_brownian, OuInit, PathSeed, TimeGrid};

    fn path(sigma: f64, future: f64, dt: f64, idx: u64) -> NoisePath {
        let g = TimeGrid::two_sided(10.0, future, dt).unwrap();
        derive_ou(sample_brownian(&g, PathSeed::new(31, idx)).unwrap(), sigma, OuInit::Stationary)
            .unwrap()
    }

    #[test]
    fn linear_flow_is_exact_per_mode() {
        let e = vec![TensorEntry { j: 0, k: 0, l: 1, coef: 0.0 }];
        let m = SpectralModel::new(vec![0.0, 1.0, 4.0], 1, 1.0, e, 0.5, 1.0).unwrap();
        let p = path(0.0, 2.0, 0.01, 0);
        let v0 = [1.0, -2.0, 0.5];
        let opts = StepOptions { nu: 0.3, ..Default::default() };
        let tr = integrate_v(&m, &p, &v0, 2.0, 0.01, opts).unwrap();
        let t = 2.0;
        for (k, l) in [0.0_f64, 1.0, 4.0].iter().enumerate() {
            let exact = v0[k] * ((-l + 0.3) * t).exp();
            assert!((tr.last()[k] - exact).abs() < 1e-12 * exact.abs().max(1.0));
        }
    }

    #[test]
    fn zero_state_stays_zero() {
        let m = SpectralModel::burgers(8, 0.75, 0.05).unwrap();
        let p = path(0.5, 1.0, 0.005, 1);
        let tr = integrate_v(&m, &p, &m.zeros(), 1.0, 0.005, StepOptions::default()).unwrap();
        assert!(tr.states.iter().all(|s| s.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn stratonovich_linear_benchmark() {
        // u' = -λu + σ u∘Ẇ has u(t) = u0 e^{-λt + σω(t)}
        let e = vec![TensorEntry { j: 0, k: 0, l: 1, coef: 0.0 }];
        let m = SpectralModel::new(vec![0.0, 2.0], 1, 1.0, e, 0.5, 1.0).unwrap();
        let dt = 0.001;
        let p = path(0.7, 1.0, dt, 2);
        let u0 = [0.8, 0.3];
        let z0 = p.z_origin();
        let v0: Vec<f64> = u0.iter().map(|x| x * (-z0).exp()).collect();
        let tr = integrate_v(&m, &p, &v0, 1.0, dt, StepOptions::default()).unwrap();
        let u = tr.to_u(&p).unwrap();
        let w1 = p.w_at(1.0);
        for (k, l) in [0.0_f64, 2.0].iter().enumerate() {
            let exact = u0[k] * (-l + 0.7 * w1).exp();
            assert!((u.last()[k] - exact).abs() < 1e-3 * exact.abs(), "{} vs {exact}", u.last()[k]);
        }
    }

    #[test]
    fn round_trip_u_v() {
        let m = SpectralModel::burgers(6, 0.75, 0.2).unwrap();
        let p = path(0.4, 1.0, 0.01, 3);
        let mut v0 = m.zeros();
        v0[0] = 0.05;
        v0[2] = -0.02;
        let tr = integrate_v(&m, &p, &v0, 1.0, 0.01, StepOptions::default()).unwrap();
        let back = tr.to_u(&p).unwrap().to_v(&p).unwrap();
        for (a, b) in tr.states.iter().flatten().zip(back.states.iter().flatten()) {
            assert!((a - b).abs() <= 4.0 * f64::EPSILON * a.abs());
        }
        let flat = {
            let g = TimeGrid::two_sided(1.0, 1.0, 0.01).unwrap();
            derive_ou(sample_brownian(&g, PathSeed::new(0, 0)).unwrap(), 0.0, OuInit::Zero).unwrap()
        };
        assert_eq!(tr.to_u(&flat).unwrap().states, tr.states);
    }

    #[test]
    fn energy_is_nonincreasing_without_noise() {
        let m = SpectralModel::burgers(16, 0.75, 0.05).unwrap();
        let p = path(0.0, 5.0, 0.005, 4);
        let mut u0 = m.zeros();
        u0[0] = 1.5;
        u0[1] = -0.8;
        u0[4] = 0.4;
        let opts = StepOptions { cutoff: false, ..Default::default() };
        let tr = integrate_v(&m, &p, &u0, 5.0, 0.005, opts).unwrap();
        let norms: Vec<f64> = tr.states.iter().map(|s| m.norm(s)).collect();
        for w in norms.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9), "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn second_order_self_convergence() {
        let m = SpectralModel::burgers(8, 0.75, 0.2).unwrap();
        let g = TimeGrid::two_sided(1.0, 1.0, 0.001).unwrap();
        // smooth test path: σ = 0 keeps z ≡ 0
        let p = derive_ou(sample_brownian(&g, PathSeed::new(0, 0)).unwrap(), 0.0, OuInit::Zero).unwrap();
        let mut v0 = m.zeros();
        v0[0] = 1.0;
        v0[1] = 0.5;
        v0[2] = -0.4;
        let opts = StepOptions { cutoff: false, nu: 0.5, ..Default::default() };
        let end = |dt: f64| integrate_v(&m, &p, &v0, 1.0, dt, opts).unwrap().last().to_vec();
        let (a, b, c) = (end(0.02), end(0.01), end(0.005));
        let order = (m.dist(&a, &b) / m.dist(&b, &c)).log2();
        assert!(order >= 1.8, "order {order}");
    }

    #[test]
    fn cutoff_agrees_inside_ball() {
        let m = SpectralModel::burgers(8, 0.75, 0.5).unwrap();
        let p = path(0.1, 1.0, 0.005, 5);
        let mut v0 = m.zeros();
        v0[0] = 0.05;
        let on = integrate_v(&m, &p, &v0, 1.0, 0.005, StepOptions::default()).unwrap();
        let off = integrate_v(&m, &p, &v0, 1.0, 0.005, StepOptions { cutoff: false, ..Default::default() }).unwrap();
        assert_eq!(on.states, off.states);
    }

    #[test]
    fn blow_up_is_reported() {
        let m = SpectralModel::burgers(4, 0.75, 0.05).unwrap();
        let p = path(0.0, 5.0, 0.01, 6);
        let mut v0 = m.zeros();
        v0[0] = 1.0;
        let opts = StepOptions { nu: 10.0, cutoff: false, guard: 100.0, corrector: true };
        assert!(matches!(integrate_v(&m, &p, &v0, 5.0, 0.01, opts), Err(Error::BlowUp { .. })));
    }

    #[test]
    fn cocycle() {
        let m = SpectralModel::burgers(8, 0.75, 0.2).unwrap();
        let p = path(0.3, 2.0, 0.005, 7);
        let mut v0 = m.zeros();
        v0[0] = 0.1;
        v0[1] = 0.05;
        let opts = StepOptions::default();
        let full = integrate_v(&m, &p, &v0, 2.0, 0.005, opts).unwrap();
        let first = integrate_v(&m, &p, &v0, 0.7, 0.005, opts).unwrap();
        let shifted = crate::noise::shift_path(&p, 0.7, 5.0, 1.3).unwrap();
        let second = integrate_v(&m, &shifted, first.last(), 1.3, 0.005, opts).unwrap();
        assert!(m.dist(full.last(), second.last()) < 1e-12);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(16))]

        // u(x) -> -u(π - x) commutes with the flow
        #[test]
        fn mirror_symmetry(a in -0.03f64..0.03, b in -0.01f64..0.01, idx in 0u64..1000) {
            let m = SpectralModel::burgers(8, 0.75, 0.05).unwrap();
            let p = path(0.2, 0.5, 0.005, idx);
            let mut v = m.zeros();
            v[0] = a;
            v[1] = b;
            let mirror = |x: &[f64]| -> Vec<f64> {
                x.iter().enumerate().map(|(k, y)| if k % 2 == 0 { -y } else { *y }).collect()
            };
            let opts = StepOptions::default();
            let x = integrate_v(&m, &p, &v, 0.5, 0.005, opts).unwrap();
            let y = integrate_v(&m, &p, &mirror(&v), 0.5, 0.005, opts).unwrap();
            proptest::prop_assert!(m.dist(&mirror(x.last()), y.last()) <= 1e-15);
        }
    }
}
