use std::cell::{Cell, RefCell};

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::brent::BrentOpt;
use serde::{Deserialize, Serialize};

use super::{HistoryFunction, LpOperator};
use crate::error::{check_dim, Error, Result};

pub const CACHE_NODES: usize = 65;
pub const XI_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distance {
    pub distance: f64,
    pub argmin_xi: Vec<f64>,
    /// The minimizer sits on the edge of the chart `|ξ| ≤ 2R`.
    pub at_boundary: bool,
    pub solves: usize,
}

/// Graph of `ψ(ω, ·)` over `|ξ| ≤ 2R` for one path, with a lazily filled
/// node cache for one kernel mode and on-demand exact solves.
pub struct ManifoldChart<'o, 'm> {
    op: &'o LpOperator<'m>,
    half_width: f64,
    cache: RefCell<Vec<Option<Vec<f64>>>>,
    warm: RefCell<Option<HistoryFunction>>,
    solves: Cell<usize>,
    failure: RefCell<Option<Error>>,
}

impl<'o, 'm> ManifoldChart<'o, 'm> {
    pub fn new(op: &'o LpOperator<'m>) -> Self {
        let model = op.model();
        let e_norm = model.norm(&model.unit(0));
        Self {
            op,
            half_width: 2.0 * model.r_cut() / e_norm,
            cache: RefCell::new(vec![None; CACHE_NODES]),
            warm: RefCell::new(None),
            solves: Cell::new(0),
            failure: RefCell::new(None),
        }
    }

    pub fn solves(&self) -> usize {
        self.solves.get()
    }

    fn xi_vec(&self, xi_c: &[f64]) -> Vec<f64> {
        let mut v = self.op.model().zeros();
        v[..xi_c.len()].copy_from_slice(xi_c);
        v
    }

    /// Exact `ψ(ω, ξ)`.
    pub fn psi(&self, xi_c: &[f64]) -> Result<Vec<f64>> {
        let xi = self.xi_vec(xi_c);
        let warm = self.warm.borrow().clone();
        let s = self.op.psi(&xi, warm.as_ref())?;
        self.solves.set(self.solves.get() + 1);
        *self.warm.borrow_mut() = Some(s.sample.v_star);
        Ok(s.psi)
    }

    fn spacing(&self) -> f64 {
        2.0 * self.half_width / (CACHE_NODES - 1) as f64
    }

    fn node(&self, j: usize) -> Result<Vec<f64>> {
        if let Some(p) = &self.cache.borrow()[j] {
            return Ok(p.clone());
        }
        let s = -self.half_width + j as f64 * self.spacing();
        let p = self.psi(&[s])?;
        self.cache.borrow_mut()[j] = Some(p.clone());
        Ok(p)
    }

    /// Cubic interpolation of `ψ` from the four nearest cache nodes.
    pub fn psi_interp(&self, s: f64) -> Result<Vec<f64>> {
        let h = self.spacing();
        let x = ((s + self.half_width) / h).clamp(0.0, (CACHE_NODES - 1) as f64);
        let j0 = (x.floor() as usize).saturating_sub(1).min(CACHE_NODES - 4);
        let nodes: Vec<Vec<f64>> = (j0..j0 + 4).map(|j| self.node(j)).collect::<Result<_>>()?;
        let mut out = self.op.model().zeros();
        for (a, pa) in nodes.iter().enumerate() {
            let xa = (j0 + a) as f64;
            let w: f64 = (0..4)
                .filter(|&b| b != a)
                .map(|b| {
                    let xb = (j0 + b) as f64;
                    (x - xb) / (xa - xb)
                })
                .product();
            out.iter_mut().zip(pa).for_each(|(o, p)| *o += w * p);
        }
        Ok(out)
    }

    fn residual(&self, u: &[f64], xi_c: &[f64], psi: &[f64]) -> f64 {
        let model = self.op.model();
        let mut graph = self.xi_vec(xi_c);
        graph.iter_mut().zip(psi).for_each(|(g, p)| *g += p);
        model.dist(u, &graph)
    }

    fn record<T>(&self, r: Result<T>, fallback: T) -> T {
        match r {
            Ok(v) => v,
            Err(e) => {
                self.failure.borrow_mut().get_or_insert(e);
                fallback
            }
        }
    }

    fn check_failure(&self) -> Result<()> {
        match self.failure.borrow_mut().take() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    /// `min_ξ |u - (ξ + ψ(ω, ξ))|` over the chart.
    pub fn distance(&self, u: &[f64]) -> Result<Distance> {
        let model = self.op.model();
        check_dim(model.n_total(), u.len())?;
        let start = self.solves();
        let nc = model.n_c();
        let (distance, xi, at_boundary) = if nc == 1 {
            self.distance_1d(u)?
        } else {
            self.distance_compass(u)?
        };
        Ok(Distance {
            distance,
            argmin_xi: self.xi_vec(&xi),
            at_boundary,
            solves: self.solves() - start,
        })
    }

    fn minimize(&self, f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> Result<(f64, f64)> {
        if hi - lo <= XI_TOL {
            let m = 0.5 * (lo + hi);
            return Ok((m, f(m)));
        }
        let res = Executor::new(Scalar(f), BrentOpt::new(lo, hi).set_tolerance(1e-12, XI_TOL / 3.0))
            .configure(|s| s.max_iters(200))
            .run()
            .map_err(|e| Error::domain(format!("scalar minimization failed: {e}")))?;
        self.check_failure()?;
        let st = res.state();
        let x = *st.get_best_param().expect("Brent returns a point");
        Ok((x, st.get_best_cost()))
    }

    fn distance_1d(&self, u: &[f64]) -> Result<(f64, Vec<f64>, bool)> {
        let e_norm = self.op.model().norm(&self.op.model().unit(0));
        let s_max = self.half_width;
        let uc = u[0].clamp(-s_max, s_max);
        let p0 = self.psi(&[uc])?;
        let d0 = self.residual(u, &[uc], &p0);
        if d0 == 0.0 {
            return Ok((0.0, vec![uc], uc.abs() >= s_max));
        }
        // the kernel part alone already costs |s - u_c| |e_1|
        let lo = (u[0] - d0 / e_norm).max(-s_max);
        let hi = (u[0] + d0 / e_norm).min(s_max);

        let coarse = |s: f64| {
            let p = self.record(self.psi_interp(s), vec![f64::NAN; u.len()]);
            self.residual(u, &[s], &p)
        };
        let (s_hat, _) = self.minimize(coarse, lo, hi)?;
        let h = self.spacing();
        let (a, b) = ((s_hat - h).max(lo), (s_hat + h).min(hi));
        let exact = |s: f64| {
            let p = self.record(self.psi(&[s]), vec![f64::NAN; u.len()]);
            self.residual(u, &[s], &p)
        };
        let (s, d) = self.minimize(exact, a, b)?;
        let (s, d) = if d0 < d { (uc, d0) } else { (s, d) };
        let boundary = s_max - s.abs() <= 2.0 * XI_TOL;
        Ok((d, vec![s], boundary))
    }

    fn distance_compass(&self, u: &[f64]) -> Result<(f64, Vec<f64>, bool)> {
        let model = self.op.model();
        let nc = model.n_c();
        let s_max = self.half_width;
        let mut x: Vec<f64> = u[..nc].iter().map(|v| v.clamp(-s_max, s_max)).collect();
        let eval = |x: &[f64]| -> Result<f64> {
            let p = self.psi(x)?;
            Ok(self.residual(u, x, &p))
        };
        let mut best = eval(&x)?;
        let mut step = (best / model.weight().sqrt()).max(XI_TOL);
        while step > XI_TOL {
            let mut moved = false;
            for k in 0..nc {
                for sign in [1.0, -1.0] {
                    let mut y = x.clone();
                    y[k] = (y[k] + sign * step).clamp(-s_max, s_max);
                    let f = eval(&y)?;
                    if f < best {
                        best = f;
                        x = y;
                        moved = true;
                    }
                }
            }
            if !moved {
                step /= 2.0;
            }
        }
        let boundary = x.iter().any(|v| s_max - v.abs() <= 2.0 * XI_TOL);
        Ok((best, x, boundary))
    }
}

struct Scalar<F>(F);

impl<F: Fn(f64) -> f64> CostFunction for Scalar<F> {
    type Param = f64;
    type Output = f64;

    fn cost(&self, x: &f64) -> std::result::Result<f64, argmin::core::Error> {
        Ok((self.0)(*x))
    }
}

/// `dist(u, ℳ(ω))` on the chart of `op`.
pub fn dist_to_manifold(op: &LpOperator<'_>, u: &[f64]) -> Result<Distance> {
    ManifoldChart::new(op).distance(u)
}
