use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use super::SpectralModel;
use crate::error::{Error, Result};

const CB_STARTS: usize = 16;
const CB_MAX_ITER: usize = 5000;
const CB_TOL: f64 = 1e-13;

/// `M_y = D B(·, y)` in orthonormal coordinates, `D = diag((1+λ)^{-α/2})`.
fn partial_matrix(model: &SpectralModel, y: &[f64], d: &[f64], m: &mut [f64]) {
    let n = model.n_total();
    m.iter_mut().for_each(|x| *x = 0.0);
    for e in model.entries() {
        m[e.l * n + e.j] += e.coef * y[e.k];
        if e.j != e.k {
            m[e.l * n + e.k] += e.coef * y[e.j];
        }
    }
    for l in 0..n {
        for x in &mut m[l * n..(l + 1) * n] {
            *x *= d[l];
        }
    }
}

/// `x ← Mᵀ M x / |Mᵀ M x|`, returning `|M x|²` at the old x.
fn power_step(m: &[f64], n: usize, x: &mut [f64], tmp: &mut [f64]) -> f64 {
    for l in 0..n {
        tmp[l] = m[l * n..(l + 1) * n].iter().zip(x.iter()).map(|(a, b)| a * b).sum();
    }
    let val: f64 = tmp.iter().map(|t| t * t).sum();
    for (j, xj) in x.iter_mut().enumerate() {
        *xj = (0..n).map(|l| m[l * n + j] * tmp[l]).sum();
    }
    normalize(x);
    val
}

fn normalize(x: &mut [f64]) {
    let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n > 0.0 {
        x.iter_mut().for_each(|v| *v /= n);
    }
}

/// Operator norm of `B : H × H → H^{-α}`.
///
/// Alternating power iteration on the biquadratic `|D B(x, y)|²` over unit
/// `x, y`, which is nondecreasing per step, from several fixed random starts;
/// each run stops once the relative change drops below 1e-13.
pub fn compute_cb(model: &SpectralModel) -> f64 {
    let n = model.n_total();
    if model.entries().iter().all(|e| e.coef == 0.0) {
        return 0.0;
    }
    let d: Vec<f64> = model
        .lambda()
        .iter()
        .map(|l| (1.0 + l).powf(-model.alpha() / 2.0))
        .collect();
    let mut rng = ChaCha20Rng::seed_from_u64(0x00C0_FFEE);
    let mut m = vec![0.0; n * n];
    let mut tmp = vec![0.0; n];
    let mut best = 0.0_f64;
    for _ in 0..CB_STARTS {
        let mut x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let mut y: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        normalize(&mut x);
        normalize(&mut y);
        let mut last = 0.0;
        for _ in 0..CB_MAX_ITER {
            partial_matrix(model, &y, &d, &mut m);
            power_step(&m, n, &mut x, &mut tmp);
            partial_matrix(model, &x, &d, &mut m);
            let val = power_step(&m, n, &mut y, &mut tmp);
            if (val - last).abs() <= CB_TOL * val {
                last = val;
                break;
            }
            last = val;
        }
        best = best.max(last);
    }
    best.sqrt() / model.weight().sqrt()
}

/// `M_{α,λ} = max_k sup_t e^{-(λ_k-λ)t} (1+λ_k)^{α/2} t^α` over stable modes,
/// attained at `t = α/(λ_k-λ)`.
pub fn compute_m_alpha_lambda(model: &SpectralModel, lambda: f64) -> Result<f64> {
    if lambda >= model.lambda_star() {
        return Err(Error::domain(format!(
            "λ = {lambda} must be below λ* = {}",
            model.lambda_star()
        )));
    }
    let a = model.alpha();
    Ok(model.lambda()[model.n_c()..]
        .iter()
        .map(|&lk| (a / (std::f64::consts::E * (lk - lambda))).powf(a) * (1.0 + lk).powf(a / 2.0))
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub c_b: f64,
    pub l_r: f64,
    pub m_alpha_lambda: f64,
    pub gamma_1m_alpha: f64,
    /// Left side of the contraction condition: the Lipschitz bound of 𝒯.
    pub contraction_bound: f64,
    pub condition1: bool,
    pub margin1: f64,
    pub condition2_rhs: f64,
    pub condition2: bool,
    pub margin2: f64,
    pub condition3_rhs: f64,
    pub condition3: bool,
    pub margin3: f64,
}

impl ConditionReport {
    pub fn all(&self) -> bool {
        self.condition1 && self.condition2 && self.condition3
    }
}

/// Evaluates the contraction condition and the two cone conditions.
pub fn check_conditions(
    model: &SpectralModel,
    nu: f64,
    eta: f64,
    delta: f64,
    lambda: f64,
) -> Result<ConditionReport> {
    let ls = model.lambda_star();
    if !(eta + nu > 0.0 && eta + nu < lambda && lambda < ls) {
        return Err(Error::config(format!(
            "need 0 < η+ν < λ < λ*, got η+ν = {}, λ = {lambda}, λ* = {ls}",
            eta + nu
        )));
    }
    if !(delta > 0.0) {
        return Err(Error::config(format!("δ must be positive, got {delta}")));
    }
    let a = model.alpha();
    let l_r = model.l_r();
    let m = compute_m_alpha_lambda(model, lambda)?;
    let g = gamma(1.0 - a);
    let c_alpha = 1.0;
    let bound = l_r * (c_alpha / (eta + nu) + m * g / (lambda - eta - nu).powf(1.0 - a));
    let q = (1.0 + 1.0 / delta).powi(2);
    let rhs2 = 2.0 * q * l_r * l_r + 4.0 * (1.0 + delta) * l_r;
    let rhs3 = 4.0 * nu + 2.0 * l_r * l_r * q;
    Ok(ConditionReport {
        c_b: model.c_b(),
        l_r,
        m_alpha_lambda: m,
        gamma_1m_alpha: g,
        contraction_bound: bound,
        condition1: bound < 1.0,
        margin1: 1.0 - bound,
        condition2_rhs: rhs2,
        condition2: ls >= rhs2,
        margin2: ls - rhs2,
        condition3_rhs: rhs3,
        condition3: ls > rhs3,
        margin3: ls - rhs3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TensorEntry;
    use nalgebra::DMatrix;

    // max over random y of the exact top singular value of D B(·, y)
    fn cb_oracle(model: &SpectralModel, samples: usize) -> f64 {
        let n = model.n_total();
        let d: Vec<f64> = model
            .lambda()
            .iter()
            .map(|l| (1.0 + l).powf(-model.alpha() / 2.0))
            .collect();
        let mut rng = ChaCha20Rng::seed_from_u64(99);
        let mut m = vec![0.0; n * n];
        let mut best = 0.0_f64;
        for _ in 0..samples {
            let mut y: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            normalize(&mut y);
            partial_matrix(model, &y, &d, &mut m);
            let sv = DMatrix::from_row_slice(n, n, &m).singular_values();
            best = best.max(sv.max());
        }
        best / model.weight().sqrt()
    }

    #[test]
    fn cb_matches_brute_force() {
        for (n, alpha) in [(4, 0.5), (6, 0.75), (5, 0.9)] {
            let m = SpectralModel::burgers(n, alpha, 0.1).unwrap();
            let oracle = cb_oracle(&m, 20_000);
            assert!(oracle <= m.c_b() * (1.0 + 1e-9), "n={n}: {oracle} > {}", m.c_b());
            assert!(oracle >= 0.98 * m.c_b(), "n={n}: {oracle} vs {}", m.c_b());
        }
    }

    #[test]
    fn cb_bounds_random_pairs() {
        let m = SpectralModel::burgers(16, 0.75, 0.1).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for _ in 0..2000 {
            let u: Vec<f64> = (0..16).map(|_| rng.sample(StandardNormal)).collect();
            let v: Vec<f64> = (0..16).map(|_| rng.sample(StandardNormal)).collect();
            let b = m.apply_b(&u, &v).unwrap();
            let r = m.norm_order(&b, -m.alpha()) / (m.norm(&u) * m.norm(&v));
            assert!(r <= m.c_b() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn zero_tensor() {
        let e = vec![TensorEntry { j: 0, k: 0, l: 1, coef: 0.0 }];
        let m = SpectralModel::new(vec![0.0, 2.0], 1, 1.0, e, 0.5, 1.0).unwrap();
        assert_eq!(m.c_b(), 0.0);
    }

    #[test]
    fn m_single_mode_closed_form() {
        let m = SpectralModel::new(vec![0.0, 4.0], 1, 1.0, vec![], 0.6, 0.1).unwrap();
        let lam = 1.5;
        let got = compute_m_alpha_lambda(&m, lam).unwrap();
        // dense grid search in t
        let grid = (1..200_000)
            .map(|i| {
                let t = i as f64 * 1e-5;
                (-(4.0 - lam) * t).exp() * 5.0f64.powf(0.3) * t.powf(0.6)
            })
            .fold(0.0, f64::max);
        assert!((got - grid).abs() < 1e-8 * got, "{got} vs {grid}");
        assert!(matches!(compute_m_alpha_lambda(&m, 4.0), Err(Error::Domain(_))));
    }

    #[test]
    fn zero_radius_conditions() {
        let m = SpectralModel::burgers(8, 0.75, 0.0).unwrap();
        let r = check_conditions(&m, 0.0, 1.0, 1.0, 2.5).unwrap();
        assert_eq!(r.contraction_bound, 0.0);
        assert!(r.all());
        assert_eq!(r.condition3_rhs, 0.0);
    }

    #[test]
    fn default_configuration_is_valid() {
        let m = SpectralModel::burgers(16, 0.75, 0.05).unwrap();
        let r = check_conditions(&m, 0.0, 1.0, 1.0, 2.5).unwrap();
        assert!(r.all(), "{r:?}");
        assert!(r.contraction_bound > 0.5 && r.contraction_bound < 0.75);
    }

    #[test]
    fn monotone_in_radius() {
        let m = SpectralModel::burgers(16, 0.75, 0.05).unwrap();
        let mut last = -1.0;
        for r in [0.0, 0.01, 0.05, 0.1, 1.0, 10.0] {
            let c = check_conditions(&m.with_r_cut(r), 0.0, 1.0, 1.0, 2.5).unwrap();
            assert!(c.contraction_bound > last);
            last = c.contraction_bound;
        }
        let c = check_conditions(&m.with_r_cut(10.0), 0.0, 1.0, 1.0, 2.5).unwrap();
        assert!(!c.condition1);
    }

    #[test]
    fn ordering_errors() {
        let m = SpectralModel::burgers(8, 0.75, 0.05).unwrap();
        assert!(matches!(check_conditions(&m, 0.0, 1.0, 1.0, 3.0), Err(Error::Config(_))));
        assert!(matches!(check_conditions(&m, 0.0, 2.0, 1.0, 1.5), Err(Error::Config(_))));
        assert!(matches!(check_conditions(&m, -1.0, 1.0, 1.0, 2.5), Err(Error::Config(_))));
    }
}
