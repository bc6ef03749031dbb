use serde::{Deserialize, Serialize};

use super::operator::ExpRule;
use super::{LpOperator, ManifoldSample};

/// Successive approximations of the stable part of the fixed point.
///
/// * `g1`: the stable integral with `B_s(v*, v*)` replaced by `B_s(v*_c, v*_c)`;
/// * `g2 = ∫ e^{L_s τ} χ*(τ) B_s(ξ, v*_c(τ)) e^{z(τ)} dτ`;
/// * `g3 = ∫ e^{L_s τ} χ*(τ) e^{z(τ) + ντ + ∫₀^τ z} dτ B_s(ξ, ξ)`;
/// * `g3_nocut`: `g3` with `χ* = 1`;
/// * `limit = e^{z(0)} L_s⁻¹ B_s(ξ, ξ)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GChain {
    pub g1: Vec<f64>,
    pub g2: Vec<f64>,
    pub g3: Vec<f64>,
    pub g3_nocut: Vec<f64>,
    pub limit: Vec<f64>,
    /// Weighted norm of `v*_s`.
    pub vs_norm: f64,
    /// Weighted norm of `v*_s - g1` over the whole history.
    pub vs_g1_norm: f64,
    /// `|v*_s(0)-g1(0)|, |g1-g2|, |g2-g3|, |g3-g3_nocut|, |g3_nocut-limit|`.
    pub stage_errors: [f64; 5],
}

impl<'a> LpOperator<'a> {
    pub fn g_chain(&self, sample: &ManifoldSample) -> GChain {
        let model = self.model();
        let n = model.n_total();
        let nc = model.n_c();
        let nodes = self.n_nodes();
        let hat = &sample.v_star.hat;
        let xi = &sample.xi;
        let chi = self.chi_nodes(hat);
        let z = self.z_nodes();
        let zint = self.zint_nodes();
        let nu_t = self.nu_t();
        let h = self.step();

        let mut c_only = vec![0.0; n];
        let mut g = vec![0.0; nodes * n];
        let mut buf = vec![0.0; n];

        // g1 over the full history, in scaled form
        for i in 0..nodes {
            c_only[..nc].copy_from_slice(&hat[i * n..i * n + nc]);
            model.apply_b_into(&c_only, &c_only, &mut buf);
            let f = chi[i] * (z[i] + zint[i]).exp();
            for k in nc..n {
                g[i * n + k] = f * buf[k];
            }
        }
        let rules: Vec<ExpRule> = model
            .lambda()
            .iter()
            .map(|l| ExpRule::new(-l + self.params().nu, h))
            .collect();
        let mut g1_hat = vec![0.0; nodes * n];
        Self::s_recursion(&rules, n, nc..n, &g, &mut g1_hat);
        let g1_hist = self.wrap(g1_hat);
        let vs_norm = sample.v_star.weighted_norm_modes(nc..n);
        let vs_g1_norm = sample.v_star.weighted_dist_modes(&g1_hist, nc..n);
        let mut g1 = g1_hist.hat_value(0).to_vec();
        g1[..nc].iter_mut().for_each(|x| *x = 0.0);

        // the remaining stages use the bare kernel e^{L_s τ}
        let bare: Vec<ExpRule> = model.lambda().iter().map(|l| ExpRule::new(-l, h)).collect();
        let mut acc = vec![0.0; nodes * n];
        for i in 0..nodes {
            let vc: Vec<f64> = (0..n)
                .map(|k| if k < nc { hat[i * n + k] * zint[i].exp() } else { 0.0 })
                .collect();
            model.apply_b_into(xi, &vc, &mut buf);
            let f = chi[i] * z[i].exp();
            for k in nc..n {
                g[i * n + k] = f * buf[k];
            }
        }
        Self::s_recursion(&bare, n, nc..n, &g, &mut acc);
        let g2 = stable_head(&acc, n, nc);

        let bxx = model.apply_b(xi, xi).expect("ξ has model dimension");
        let scalar_stage = |weight: &dyn Fn(usize) -> f64, acc: &mut [f64], g: &mut [f64]| {
            for i in 0..nodes {
                let f = weight(i);
                for k in nc..n {
                    g[i * n + k] = f;
                }
            }
            Self::s_recursion(&bare, n, nc..n, g, acc);
            let mut out = stable_head(acc, n, nc);
            out.iter_mut().zip(&bxx).for_each(|(o, b)| *o *= b);
            out
        };
        let g3 = scalar_stage(&|i| chi[i] * (z[i] + nu_t[i] + zint[i]).exp(), &mut acc, &mut g);
        let g3_nocut = scalar_stage(&|i| (z[i] + nu_t[i] + zint[i]).exp(), &mut acc, &mut g);
        let limit: Vec<f64> = model
            .ls_inverse_bs(xi)
            .expect("ξ lies in the kernel")
            .iter()
            .map(|x| x * z[0].exp())
            .collect();

        let vs0 = stable_head(hat, n, nc);
        let stage_errors = [
            model.dist(&vs0, &g1),
            model.dist(&g1, &g2),
            model.dist(&g2, &g3),
            model.dist(&g3, &g3_nocut),
            model.dist(&g3_nocut, &limit),
        ];
        GChain {
            g1,
            g2,
            g3,
            g3_nocut,
            limit,
            vs_norm,
            vs_g1_norm,
            stage_errors,
        }
    }
}

fn stable_head(acc: &[f64], n: usize, nc: usize) -> Vec<f64> {
    (0..n).map(|k| if k < nc { 0.0 } else { acc[k] }).collect()
}
