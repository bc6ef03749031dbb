use serde::{Deserialize, Serialize};

use super::full::{nonlinearity, Clock};
use super::{Repr, Trajectory};
use crate::error::{check_dim, Error, Result};
use crate::manifold::{HistoryFunction, LpOperator, LpParams};
use crate::model::SpectralModel;
use crate::noise::{shift_path, NoisePath};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReducedMode {
    /// `h(θ_tω, ξ) ≈ e^{z(t)} L_s⁻¹ B_s(ξ, ξ)`.
    Quadratic,
    /// `h` from Lyapunov–Perron solves on the shifted path.
    ExactLp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReducedOptions {
    pub mode: ReducedMode,
    pub lp: LpParams,
    /// Spacing of the times at which `h` is recomputed.
    pub refresh: f64,
}

impl Default for ReducedOptions {
    fn default() -> Self {
        Self {
            mode: ReducedMode::ExactLp,
            lp: LpParams {
                window: 20.0,
                step: 0.01,
                ..LpParams::default()
            },
            refresh: 0.25,
        }
    }
}

const STENCIL: usize = 5;

/// `h(θ_tω, ·)` on a five-point stencil in one kernel coordinate, at both ends
/// of a refresh interval.
struct Stencil {
    nodes: [f64; STENCIL],
    left: Vec<Vec<f64>>,
    right: Vec<Vec<f64>>,
}

impl Stencil {
    fn eval(&self, theta: f64, s: f64) -> Vec<f64> {
        let n = self.left[0].len();
        let mut out = vec![0.0; n];
        for a in 0..STENCIL {
            let w: f64 = (0..STENCIL)
                .filter(|&b| b != a)
                .map(|b| (s - self.nodes[b]) / (self.nodes[a] - self.nodes[b]))
                .product();
            for ((o, l), r) in out.iter_mut().zip(&self.left[a]).zip(&self.right[a]) {
                *o += w * ((1.0 - theta) * l + theta * r);
            }
        }
        out
    }
}

struct LpGraph<'m, 'p> {
    model: &'m SpectralModel,
    path: &'p NoisePath,
    params: LpParams,
    warm: Vec<Option<HistoryFunction>>,
}

impl LpGraph<'_, '_> {
    fn solve_at(&mut self, t: f64, nodes: &[f64; STENCIL]) -> Result<Vec<Vec<f64>>> {
        let past = t - self.path.grid().t_start();
        let shifted = shift_path(self.path, t, past, 0.0)?;
        let op = LpOperator::new(self.model, &shifted, self.params)?;
        let mut out = Vec::with_capacity(STENCIL);
        for (j, &s) in nodes.iter().enumerate() {
            let mut xi = self.model.zeros();
            xi[0] = s;
            let sample = op.solve(&xi, self.warm[j].as_ref())?;
            out.push(sample.h);
            self.warm[j] = Some(sample.v_star);
        }
        Ok(out)
    }
}

/// Integrates the kernel coordinates on the manifold,
/// `v_c' = (-L_c + ν + z) v_c + [e^{-z} B^(R)(e^{z}(v_c + h(θ_tω, v_c)))]_c`,
/// and returns the lifted states `v_c + h` in `v` coordinates.
///
/// The time stepping matches [`super::integrate_v`]. `nu` comes from the LP
/// parameters.
pub fn integrate_reduced(
    model: &SpectralModel,
    path: &NoisePath,
    xi0: &[f64],
    t_end: f64,
    dt: f64,
    opts: ReducedOptions,
) -> Result<Trajectory> {
    let n = model.n_total();
    let nc = model.n_c();
    check_dim(nc, xi0.len())?;
    let clock = Clock::new(path, 0.0, t_end, dt)?;
    let nu = opts.lp.nu;
    let per = (opts.refresh / dt).round() as usize;
    if opts.mode == ReducedMode::ExactLp {
        if nc != 1 {
            return Err(Error::config("LP-driven reduction supports one kernel mode"));
        }
        if per == 0 || ((per as f64) * dt - opts.refresh).abs() > 1e-9 * dt {
            return Err(Error::config(format!(
                "refresh interval {} is not a multiple of dt {dt}",
                opts.refresh
            )));
        }
    }
    let e_norm = model.norm(&model.unit(0));
    let mut graph = LpGraph {
        model,
        path,
        params: opts.lp,
        warm: vec![None; STENCIL],
    };
    let mut stencil: Option<Stencil> = None;

    let lift = |step: usize, theta: f64, c: &[f64], stencil: &Option<Stencil>| -> Vec<f64> {
        let mut v = model.zeros();
        v[..nc].copy_from_slice(c);
        let h = match opts.mode {
            ReducedMode::Quadratic => {
                let f = clock.z(step).exp();
                let mut q = model.ls_inverse_bs(&v).expect("dimension checked above");
                q.iter_mut().for_each(|x| *x *= f);
                q
            }
            ReducedMode::ExactLp => stencil
                .as_ref()
                .expect("stencil set before use")
                .eval(theta, c[0]),
        };
        v.iter_mut().zip(&h).skip(nc).for_each(|(x, y)| *x = *y);
        v
    };

    let mut c = xi0.to_vec();
    let mut times = vec![clock.time(0)];
    let mut states = Vec::with_capacity(clock.n_steps + 1);
    let mut nl = vec![0.0; n];
    let mut nl2 = vec![0.0; n];
    let mut pred = vec![0.0; nc];
    let (mut start, mut len) = (0, 1);
    for step in 0..clock.n_steps {
        if opts.mode == ReducedMode::ExactLp && step % per == 0 {
            let centre = c[0];
            let delta = 0.1 * centre.abs().max(0.1 * model.r_cut() / e_norm);
            let nodes: [f64; STENCIL] =
                std::array::from_fn(|j| centre + delta * (j as f64 - 2.0));
            let end = (step + per).min(clock.n_steps);
            let left = graph.solve_at(clock.time(step), &nodes)?;
            let right = graph.solve_at(clock.time(end), &nodes)?;
            stencil = Some(Stencil { nodes, left, right });
            (start, len) = (step, end - step);
        }
        let theta0 = (step - start) as f64 / len as f64;
        let theta1 = (step + 1 - start) as f64 / len as f64;
        let v = lift(step, theta0, &c, &stencil);
        if step == 0 {
            states.push(v.clone());
        }
        let zs = clock.z_step(step);
        let e: Vec<f64> = model.lambda()[..nc]
            .iter()
            .map(|l| ((-l + nu) * dt + zs).exp())
            .collect();
        nonlinearity(model, true, clock.z(step), &v, &mut nl);
        for k in 0..nc {
            pred[k] = e[k] * (c[k] + dt * nl[k]);
        }
        let vp = lift(step + 1, theta1, &pred, &stencil);
        nonlinearity(model, true, clock.z(step + 1), &vp, &mut nl2);
        for k in 0..nc {
            c[k] = e[k] * c[k] + 0.5 * dt * (e[k] * nl[k] + nl2[k]);
        }
        if c.iter().any(|x| !x.is_finite()) {
            return Err(Error::BlowUp {
                time: clock.time(step + 1),
                norm: f64::INFINITY,
            });
        }
        times.push(clock.time(step + 1));
        states.push(lift(step + 1, theta1, &c, &stencil));
    }
    if clock.n_steps == 0 {
        if opts.mode == ReducedMode::ExactLp {
            let nodes = std::array::from_fn(|j| c[0] + 1e-3 * (j as f64 - 2.0));
            let left = graph.solve_at(0.0, &nodes)?;
            stencil = Some(Stencil { nodes, right: left.clone(), left });
        }
        states.push(lift(0, 0.0, &c, &stencil));
    }
    Ok(Trajectory {
        times,
        states,
        repr: Repr::V,
    })
}

/// Kernel component of the `v` drift at `t = 0` on the manifold point over `ξ`.
pub fn reduced_drift(op: &LpOperator<'_>, xi: &[f64]) -> Result<Vec<f64>> {
    let model = op.model();
    let nc = model.n_c();
    let s = op.solve(xi, None)?;
    let mut v = xi.to_vec();
    v.iter_mut().zip(&s.h).skip(nc).for_each(|(x, y)| *x = *y);
    let z = op.z_nodes()[0];
    let mut nl = model.zeros();
    nonlinearity(model, true, z, &v, &mut nl);
    Ok((0..nc)
        .map(|k| (-model.lambda()[k] + op.params().nu + z) * v[k] + nl[k])
        .collect())
}
