use serde::{Deserialize, Serialize};

use super::HistoryFunction;
use crate::error::{check_dim, Error, Result};
use crate::model::{check_conditions, SpectralModel};
use crate::noise::NoisePath;

/// Tail factor `e^{-(λ-η-ν)T}` allowed for the truncated history window.
pub const TAIL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LpParams {
    pub nu: f64,
    pub eta: f64,
    /// Rate `λ` in `(η+ν, λ*)` entering the contraction bound.
    pub lambda: f64,
    /// History window `T`.
    pub window: f64,
    /// Quadrature step; a multiple of the path step.
    pub step: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LpParams {
    fn default() -> Self {
        Self {
            nu: 0.0,
            eta: 1.0,
            lambda: 2.5,
            window: 40.0,
            step: 0.005,
            tol: 1e-12,
            max_iter: 200,
        }
    }
}

pub(crate) fn phi1(x: f64) -> f64 {
    if x.abs() < 1e-5 {
        1.0 + x / 2.0 + x * x / 6.0
    } else {
        x.exp_m1() / x
    }
}

pub(crate) fn phi2(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        0.5 + x / 6.0 + x * x / 24.0 + x * x * x / 120.0
    } else {
        (x.exp_m1() - x) / (x * x)
    }
}

/// Exact integration of `e^{μ r}` against the linear interpolant on one cell.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ExpRule {
    pub decay: f64,
    /// weight of the sample at the far end of the cell
    pub far: f64,
    /// weight of the sample at the near end
    pub near: f64,
}

impl ExpRule {
    pub fn new(mu: f64, h: f64) -> Self {
        let x = mu * h;
        Self {
            decay: x.exp(),
            far: h * (phi1(x) - phi2(x)),
            near: h * phi2(x),
        }
    }
}

/// The Lyapunov–Perron operator on one noise path, discretized on
/// `t_i = -i·h`, `i = 0..=N`, `N h = T`.
#[derive(Debug, Clone)]
pub struct LpOperator<'a> {
    model: &'a SpectralModel,
    params: LpParams,
    z: Vec<f64>,
    zint: Vec<f64>,
    nu_t: Vec<f64>,
    bound: f64,
    c_rule: ExpRule,
    s_rule: Vec<ExpRule>,
}

impl<'a> LpOperator<'a> {
    pub fn new(model: &'a SpectralModel, path: &NoisePath, params: LpParams) -> Result<Self> {
        let report = check_conditions(model, params.nu, params.eta, 1.0, params.lambda)?;
        if !report.condition1 {
            return Err(Error::Precondition(format!(
                "contraction condition fails: bound {} >= 1",
                report.contraction_bound
            )));
        }
        Self::unchecked(model, path, params, report.contraction_bound)
    }

    /// Skips the contraction check; used to probe the operator outside its
    /// validated regime.
    pub fn unchecked(
        model: &'a SpectralModel,
        path: &NoisePath,
        params: LpParams,
        bound: f64,
    ) -> Result<Self> {
        let grid = path.grid();
        let stride = (params.step / grid.dt()).round();
        if stride < 1.0 || (stride * grid.dt() - params.step).abs() > 1e-9 * params.step {
            return Err(Error::config(format!(
                "quadrature step {} is not a multiple of the path step {}",
                params.step,
                grid.dt()
            )));
        }
        let stride = stride as usize;
        let n_steps = (params.window / params.step).round() as usize;
        if n_steps == 0 {
            return Err(Error::config("history window must hold at least one step"));
        }
        if params.window > path.tail_t() + 1e-9 {
            return Err(Error::range(format!(
                "history window {} exceeds the stored path history {}",
                params.window,
                path.tail_t()
            )));
        }
        let gap = params.lambda - params.eta - params.nu;
        if (-gap * params.window).exp() > TAIL_TOL {
            return Err(Error::config(format!(
                "history window {} too short: tail factor e^(-{gap}·T) exceeds {TAIL_TOL}",
                params.window
            )));
        }
        let i0 = path.zero_index();
        let idx = |i: usize| i0 - i * stride;
        let z = (0..=n_steps).map(|i| path.z()[idx(i)]).collect();
        let zint = (0..=n_steps).map(|i| path.z_integral()[idx(i)]).collect();
        let nu_t = (0..=n_steps).map(|i| -params.nu * i as f64 * params.step).collect();
        let c_rule = ExpRule::new(-params.nu, params.step);
        let s_rule = model
            .lambda()
            .iter()
            .map(|l| ExpRule::new(-l + params.nu, params.step))
            .collect();
        Ok(Self {
            model,
            params,
            z,
            zint,
            nu_t,
            bound,
            c_rule,
            s_rule,
        })
    }

    pub fn model(&self) -> &SpectralModel {
        self.model
    }

    pub fn params(&self) -> &LpParams {
        &self.params
    }

    pub fn n_nodes(&self) -> usize {
        self.z.len()
    }

    /// Analytic Lipschitz bound of the operator.
    pub fn contraction_bound(&self) -> f64 {
        self.bound
    }

    /// `z` at the origin of the path.
    pub fn z0(&self) -> f64 {
        self.z[0]
    }

    pub(crate) fn z_nodes(&self) -> &[f64] {
        &self.z
    }

    pub(crate) fn zint_nodes(&self) -> &[f64] {
        &self.zint
    }

    pub(crate) fn nu_t(&self) -> &[f64] {
        &self.nu_t
    }

    pub(crate) fn step(&self) -> f64 {
        self.params.step
    }

    pub fn zero_history(&self) -> HistoryFunction {
        self.wrap(vec![0.0; self.n_nodes() * self.model.n_total()])
    }

    pub(crate) fn wrap(&self, hat: Vec<f64>) -> HistoryFunction {
        HistoryFunction {
            step: self.params.step,
            n_total: self.model.n_total(),
            eta: self.params.eta,
            weight: self.model.weight(),
            zint: self.zint.clone(),
            hat,
        }
    }

    /// History from plain values `v(t_i)`.
    pub fn history_from_values(&self, values: &[Vec<f64>]) -> Result<HistoryFunction> {
        check_dim(self.n_nodes(), values.len())?;
        let n = self.model.n_total();
        let mut hat = Vec::with_capacity(self.n_nodes() * n);
        for (v, zi) in values.iter().zip(&self.zint) {
            check_dim(n, v.len())?;
            let s = (-zi).exp();
            hat.extend(v.iter().map(|x| x * s));
        }
        Ok(self.wrap(hat))
    }

    /// `e^{-∫z} e^{-z} B^(R)(e^{z} v)` at every node, from scaled values.
    pub(crate) fn forcing(&self, hat: &[f64], g: &mut [f64]) {
        let n = self.model.n_total();
        let r = self.model.r_cut();
        let profile = self.model.profile();
        for (i, (w, gi)) in hat.chunks_exact(n).zip(g.chunks_exact_mut(n)).enumerate() {
            let a = (self.z[i] + self.zint[i]).exp();
            let chi = if r > 0.0 {
                profile.chi(a * self.model.norm(w) / r)
            } else {
                0.0
            };
            if chi == 0.0 {
                gi.iter_mut().for_each(|x| *x = 0.0);
                continue;
            }
            self.model.apply_b_into(w, w, gi);
            let f = chi * a;
            gi.iter_mut().for_each(|x| *x *= f);
        }
    }

    /// Cut-off values `χ_R(e^{z(t_i)} v(t_i))` of a history.
    pub(crate) fn chi_nodes(&self, hat: &[f64]) -> Vec<f64> {
        let n = self.model.n_total();
        hat.chunks_exact(n)
            .enumerate()
            .map(|(i, w)| {
                let a = (self.z[i] + self.zint[i]).exp();
                let v: Vec<f64> = w.iter().map(|x| x * a).collect();
                self.model.chi(&v)
            })
            .collect()
    }

    /// Backward recursion `S_i = e^{μh} S_{i+1} + ∫` with `S_N = 0` for the
    /// modes in `modes`; `g` holds the integrand at every node.
    pub(crate) fn s_recursion(
        rules: &[ExpRule],
        n: usize,
        modes: std::ops::Range<usize>,
        g: &[f64],
        out: &mut [f64],
    ) {
        let nodes = g.len() / n;
        for k in modes.clone() {
            out[(nodes - 1) * n + k] = 0.0;
        }
        for i in (0..nodes - 1).rev() {
            for k in modes.clone() {
                let r = rules[k];
                out[i * n + k] =
                    r.decay * out[(i + 1) * n + k] + r.far * g[(i + 1) * n + k] + r.near * g[i * n + k];
            }
        }
    }

    /// Applies the operator to the scaled history `hat`, writing into `out`.
    /// `g` is scratch of the same length.
    pub(crate) fn apply_hat(&self, xi: &[f64], hat: &[f64], out: &mut [f64], g: &mut [f64]) {
        let n = self.model.n_total();
        let nc = self.model.n_c();
        self.forcing(hat, g);
        let c = self.c_rule;
        out[..nc].copy_from_slice(&xi[..nc]);
        for i in 0..self.n_nodes() - 1 {
            for k in 0..nc {
                out[(i + 1) * n + k] =
                    c.decay * out[i * n + k] - (c.near * g[(i + 1) * n + k] + c.far * g[i * n + k]);
            }
        }
        Self::s_recursion(&self.s_rule, n, nc..n, g, out);
    }

    /// `𝒯(v, ξ)`.
    pub fn apply(&self, xi: &[f64], v: &HistoryFunction) -> Result<HistoryFunction> {
        let n = self.model.n_total();
        check_dim(n, xi.len())?;
        if xi[self.model.n_c()..].iter().any(|&x| x != 0.0) {
            return Err(Error::domain("ξ must lie in the kernel modes"));
        }
        if v.n_total != n || v.n_nodes() != self.n_nodes() || (v.step - self.params.step).abs() > 1e-12 {
            return Err(Error::Dimension {
                expected: self.n_nodes() * n,
                got: v.hat.len(),
            });
        }
        let mut out = vec![0.0; v.hat.len()];
        let mut g = vec![0.0; v.hat.len()];
        self.apply_hat(xi, &v.hat, &mut out, &mut g);
        Ok(self.wrap(out))
    }

    /// Weighted distance of two scaled histories.
    pub(crate) fn hat_dist(&self, a: &[f64], b: &[f64]) -> f64 {
        let n = self.model.n_total();
        let w = self.model.weight();
        let h = self.params.step;
        let eta = self.params.eta;
        a.chunks_exact(n)
            .zip(b.chunks_exact(n))
            .enumerate()
            .map(|(i, (x, y))| {
                let sq: f64 = x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum();
                (-eta * i as f64 * h).exp() * (w * sq).sqrt()
            })
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::noise::{derive_ou, sample_brownian, OuInit, PathSeed, TimeGrid};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    pub(crate) fn test_path(sigma: f64, idx: u64) -> NoisePath {
        let g = TimeGrid::two_sided(40.0, 1.0, 0.005).unwrap();
        derive_ou(sample_brownian(&g, PathSeed::new(21, idx)).unwrap(), sigma, OuInit::Stationary)
            .unwrap()
    }

    #[test]
    fn phi_series_matches_closed_form() {
        for x in [-1e-3_f64, -2e-4, 1e-6, 3e-4, 9e-4] {
            let p1 = x.exp_m1() / x;
            let p2 = (x.exp_m1() - x) / (x * x);
            assert!((phi1(x) - p1).abs() < 1e-12);
            // closed form loses digits here; compare loosely
            assert!((phi2(x) - p2).abs() < 1e-7);
        }
        assert_eq!(phi2(0.0), 0.5);
    }

    #[test]
    fn exp_rule_is_exact_for_linear_integrands() {
        // ∫_0^h e^{μ r} (α + β r) dr with samples at r = 0 (near) and h (far)
        let (mu, h, a, b) = (-3.7, 0.3, 0.4, -1.1);
        let rule = ExpRule::new(mu, h);
        let got = rule.near * a + rule.far * (a + b * h);
        let n = 200_000;
        let dr = h / n as f64;
        let exact: f64 = (0..n)
            .map(|i| {
                let r = (i as f64 + 0.5) * dr;
                (mu * r).exp() * (a + b * r) * dr
            })
            .sum();
        assert!((got - exact).abs() < 1e-10, "{got} vs {exact}");
    }

    #[test]
    fn zero_history_maps_to_free_flow() {
        let m = SpectralModel::burgers(16, 0.75, 0.05).unwrap();
        let p = test_path(0.3, 0);
        let op = LpOperator::new(&m, &p, LpParams::default()).unwrap();
        let mut xi = m.zeros();
        xi[0] = 0.02;
        let t0 = op.apply(&xi, &op.zero_history()).unwrap();
        assert!((t0.weighted_norm() - m.norm(&xi)).abs() < 1e-15);
        // c-part is e^{νt + ∫₀ᵗ z} ξ
        for i in [0, 10, 500, 4000] {
            let v = t0.value(i);
            let expect = (op.nu_t()[i] + op.zint_nodes()[i]).exp() * xi[0];
            assert!((v[0] - expect).abs() < 1e-15 * expect.abs().max(1.0));
            assert!(v[1..].iter().all(|&x| x == 0.0));
        }
        let zero = op.apply(&m.zeros(), &op.zero_history()).unwrap();
        assert_eq!(zero.weighted_norm(), 0.0);
    }

    #[test]
    fn measured_lipschitz_below_bound() {
        let m = SpectralModel::burgers(16, 0.75, 0.05).unwrap();
        let p = test_path(0.2, 1);
        let params = LpParams { window: 20.0, step: 0.01, ..Default::default() };
        let op = LpOperator::new(&m, &p, params).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let n = m.n_total();
        let mut xi = m.zeros();
        xi[0] = 0.01;
        for _ in 0..20 {
            let amp = rng.random_range(0.1..1.5) * m.r_cut();
            let mut mk = || {
                let vals: Vec<Vec<f64>> = (0..op.n_nodes())
                    .map(|i| {
                        let t = i as f64 * params.step;
                        (0..n)
                            .map(|k| amp * (t * (k + 1) as f64 * 0.3).sin() * rng.random_range(-1.0..1.0) / (k + 1) as f64)
                            .collect()
                    })
                    .collect();
                op.history_from_values(&vals).unwrap()
            };
            let (a, b) = (mk(), mk());
            let ta = op.apply(&xi, &a).unwrap();
            let tb = op.apply(&xi, &b).unwrap();
            let q = op.hat_dist(&ta.hat, &tb.hat) / op.hat_dist(&a.hat, &b.hat);
            assert!(q <= op.contraction_bound(), "{q} > {}", op.contraction_bound());
        }
    }

    #[test]
    fn rejects_bad_setups() {
        let m = SpectralModel::burgers(16, 0.75, 0.05).unwrap();
        let p = test_path(0.3, 0);
        let bad_step = LpParams { step: 0.0075, ..Default::default() };
        assert!(matches!(LpOperator::new(&m, &p, bad_step), Err(Error::Config(_))));
        let long = LpParams { window: 45.0, ..Default::default() };
        assert!(matches!(LpOperator::new(&m, &p, long), Err(Error::Range(_))));
        let short = LpParams { window: 2.0, ..Default::default() };
        assert!(matches!(LpOperator::new(&m, &p, short), Err(Error::Config(_))));
        let big = m.with_r_cut(1.0);
        assert!(matches!(LpOperator::new(&big, &p, LpParams::default()), Err(Error::Precondition(_))));
    }
}
