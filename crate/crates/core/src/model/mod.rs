//! Finite spectral Galerkin model: diagonal linear part, mode split, quadratic
//! nonlinearity stored as a sparse symmetric tensor, and its cut-off version.

mod config;
mod constants;
mod cutoff;

use std::f64::consts::FRAC_PI_2;
use std::io::Write;

use serde::{Deserialize, Serialize};

pub use config::ModelConfig;
pub use constants::{check_conditions, compute_cb, compute_m_alpha_lambda, ConditionReport};
pub use cutoff::CutoffProfile;

use crate::error::{check_dim, Error, Result};
use crate::format::num;

/// Coefficient of mode `l` in `B(e_j, e_k)` (0-based indices, `j <= k`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub j: usize,
    pub k: usize,
    pub l: usize,
    pub coef: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralModel {
    lambda: Vec<f64>,
    n_c: usize,
    // inner-product weight of the basis, ⟨u,v⟩ = weight Σ u_k v_k
    weight: f64,
    entries: Vec<TensorEntry>,
    alpha: f64,
    c_b: f64,
    r_cut: f64,
    profile: CutoffProfile,
}

impl SpectralModel {
    /// General constructor. `entries` must have `j <= k`; `c_b` is computed.
    pub fn new(
        lambda: Vec<f64>,
        n_c: usize,
        weight: f64,
        entries: Vec<TensorEntry>,
        alpha: f64,
        r_cut: f64,
    ) -> Result<Self> {
        let n = lambda.len();
        if n_c == 0 || n_c >= n {
            return Err(Error::config(format!(
                "need 0 < n_c < n_total, got n_c = {n_c}, n_total = {n}"
            )));
        }
        if lambda[..n_c].iter().any(|&l| l != 0.0) {
            return Err(Error::config("kernel eigenvalues must be 0"));
        }
        if !(lambda[n_c] > 0.0) || lambda.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::config("eigenvalues must be nondecreasing with λ* > 0"));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::config(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        if !(r_cut >= 0.0) || !r_cut.is_finite() {
            return Err(Error::config(format!("cut-off radius must be >= 0, got {r_cut}")));
        }
        if !(weight > 0.0) {
            return Err(Error::config("basis weight must be positive"));
        }
        if entries.iter().any(|e| e.j > e.k || e.k >= n || e.l >= n) {
            return Err(Error::config("tensor entries must satisfy j <= k < n_total, l < n_total"));
        }
        let mut m = Self {
            lambda,
            n_c,
            weight,
            entries,
            alpha,
            c_b: 0.0,
            r_cut,
            profile: CutoffProfile::default(),
        };
        m.c_b = compute_cb(&m);
        Ok(m)
    }

    /// Burgers `u_t = u_xx + u + ½(u²)_x` on `(0, π)` with Dirichlet data, in
    /// the unnormalized basis `sin(kx)`.
    pub fn burgers(n_total: usize, alpha: f64, r_cut: f64) -> Result<Self> {
        if n_total < 3 {
            return Err(Error::config(format!("Burgers needs n_total >= 3, got {n_total}")));
        }
        let lambda = (1..=n_total).map(|k| (k * k) as f64 - 1.0).collect();
        let mut entries = Vec::new();
        // B(sin jx, sin kx) = ¼[(j+k) sin (j+k)x − (j−k) sin (j−k)x]
        for j in 1..=n_total {
            for k in j..=n_total {
                if j + k <= n_total {
                    entries.push(TensorEntry {
                        j: j - 1,
                        k: k - 1,
                        l: j + k - 1,
                        coef: 0.25 * (j + k) as f64,
                    });
                }
                if k > j {
                    entries.push(TensorEntry {
                        j: j - 1,
                        k: k - 1,
                        l: k - j - 1,
                        coef: -0.25 * (k - j) as f64,
                    });
                }
            }
        }
        Self::new(lambda, 1, FRAC_PI_2, entries, alpha, r_cut)
    }

    pub fn n_total(&self) -> usize {
        self.lambda.len()
    }

    pub fn n_c(&self) -> usize {
        self.n_c
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    /// First nonzero eigenvalue.
    pub fn lambda_star(&self) -> f64 {
        self.lambda[self.n_c]
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn c_b(&self) -> f64 {
        self.c_b
    }

    pub fn r_cut(&self) -> f64 {
        self.r_cut
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn entries(&self) -> &[TensorEntry] {
        &self.entries
    }

    pub fn profile(&self) -> &CutoffProfile {
        &self.profile
    }

    /// Same model with another cut-off radius.
    pub fn with_r_cut(&self, r_cut: f64) -> Self {
        Self {
            r_cut,
            ..self.clone()
        }
    }

    /// `L_R = 2 R C_B`.
    pub fn l_r(&self) -> f64 {
        2.0 * self.r_cut * self.c_b
    }

    pub fn zeros(&self) -> Vec<f64> {
        vec![0.0; self.n_total()]
    }

    /// The `i`-th basis vector.
    pub fn unit(&self, i: usize) -> Vec<f64> {
        let mut e = self.zeros();
        e[i] = 1.0;
        e
    }

    /// `B(u, v)`, written into `out`.
    pub fn apply_b_into(&self, u: &[f64], v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for e in &self.entries {
            let p = if e.j == e.k {
                u[e.j] * v[e.j]
            } else {
                u[e.j] * v[e.k] + u[e.k] * v[e.j]
            };
            out[e.l] += e.coef * p;
        }
    }

    pub fn apply_b(&self, u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.n_total(), u.len())?;
        check_dim(self.n_total(), v.len())?;
        let mut out = self.zeros();
        self.apply_b_into(u, v, &mut out);
        Ok(out)
    }

    /// `χ(|u|/R)` with the model's profile; 0 when `R = 0`.
    pub fn chi(&self, u: &[f64]) -> f64 {
        if self.r_cut == 0.0 {
            return 0.0;
        }
        self.profile.chi(self.norm(u) / self.r_cut)
    }

    /// `B^(R)(u) = χ(|u|/R) B(u, u)`, written into `out`.
    pub fn apply_b_cutoff_into(&self, u: &[f64], out: &mut [f64]) {
        let chi = self.chi(u);
        if chi == 0.0 {
            out.iter_mut().for_each(|x| *x = 0.0);
            return;
        }
        self.apply_b_into(u, u, out);
        if chi != 1.0 {
            out.iter_mut().for_each(|x| *x *= chi);
        }
    }

    pub fn apply_b_cutoff(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.n_total(), u.len())?;
        let mut out = self.zeros();
        self.apply_b_cutoff_into(u, &mut out);
        Ok(out)
    }

    /// `L_s⁻¹ P_s B(ξ, ξ)`.
    pub fn ls_inverse_bs(&self, xi: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.n_total(), xi.len())?;
        if xi[self.n_c..].iter().any(|&x| x != 0.0) {
            return Err(Error::domain("argument must lie in the kernel modes"));
        }
        let mut b = self.apply_b(xi, xi)?;
        b[..self.n_c].iter_mut().for_each(|x| *x = 0.0);
        for (x, l) in b.iter_mut().zip(&self.lambda).skip(self.n_c) {
            *x /= l;
        }
        Ok(b)
    }

    /// `sqrt(weight Σ (1+λ_k)^s u_k²)`.
    pub fn norm_order(&self, u: &[f64], s: f64) -> f64 {
        (self.weight
            * u.iter()
                .zip(&self.lambda)
                .map(|(x, l)| (1.0 + l).powf(s) * x * x)
                .sum::<f64>())
        .sqrt()
    }

    pub fn norm(&self, u: &[f64]) -> f64 {
        (self.weight * u.iter().map(|x| x * x).sum::<f64>()).sqrt()
    }

    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.weight * u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn dist(&self, u: &[f64], v: &[f64]) -> f64 {
        (self.weight * u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()).sqrt()
    }

    /// Norm of the kernel part.
    pub fn norm_c(&self, u: &[f64]) -> f64 {
        self.norm(&u[..self.n_c])
    }

    /// Norm of the stable part.
    pub fn norm_s(&self, u: &[f64]) -> f64 {
        self.norm(&u[self.n_c..])
    }

    /// Writes the tensor as CSV `j,k,l,coef` with 1-based mode numbers, both
    /// orderings of `(j, k)` listed.
    pub fn write_tensor_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "j,k,l,coef")?;
        for e in &self.entries {
            writeln!(out, "{},{},{},{}", e.j + 1, e.k + 1, e.l + 1, num(e.coef))?;
            if e.j != e.k {
                writeln!(out, "{},{},{},{}", e.k + 1, e.j + 1, e.l + 1, num(e.coef))?;
            }
        }
        Ok(())
    }
}
