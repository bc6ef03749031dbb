use serde::{Deserialize, Serialize};

use super::{HistoryFunction, LpOperator};
use crate::error::{check_dim, Error, Result};

/// Fixed point of the operator for one `ξ`, with iteration diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifoldSample {
    pub xi: Vec<f64>,
    pub v_star: HistoryFunction,
    /// `h(ω, ξ) = P_s v*(0)`.
    pub h: Vec<f64>,
    /// `L_s⁻¹ B_s(ξ, ξ)`.
    pub quad_pred: Vec<f64>,
    pub iterations: usize,
    /// `|v_{n+1} - v_n|` for every Picard step.
    pub steps: Vec<f64>,
    /// Largest ratio of successive steps.
    pub contraction_estimate: f64,
    /// `|𝒯(v*) - v*|`, recomputed after stopping.
    pub residual: f64,
}

/// The graph value `ψ(ω, ξ) = e^{z(0)} h(ω, e^{-z(0)} ξ)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PsiSample {
    pub xi: Vec<f64>,
    pub z0: f64,
    pub psi: Vec<f64>,
    /// `L_s⁻¹ B_s(ξ, ξ)` at the unscaled argument.
    pub quad_pred: Vec<f64>,
    /// The solve at `e^{-z(0)} ξ`.
    pub sample: ManifoldSample,
}

// Ratios of steps this small are rounding noise.
const NOISE_FLOOR: f64 = 1e-14;

impl<'a> LpOperator<'a> {
    /// Picard iteration from `𝒯(0)`, or from `𝒯(warm)` if given.
    pub fn solve(&self, xi: &[f64], warm: Option<&HistoryFunction>) -> Result<ManifoldSample> {
        let model = self.model();
        let n = model.n_total();
        check_dim(n, xi.len())?;
        if xi[model.n_c()..].iter().any(|&x| x != 0.0) {
            return Err(Error::domain("ξ must lie in the kernel modes"));
        }
        let len = self.n_nodes() * n;
        let mut g = vec![0.0; len];
        let mut cur = vec![0.0; len];
        match warm {
            Some(w) if w.hat.len() == len => self.apply_hat(xi, &w.hat, &mut cur, &mut g),
            Some(w) => {
                return Err(Error::Dimension {
                    expected: len,
                    got: w.hat.len(),
                })
            }
            None => {
                let zero = vec![0.0; len];
                self.apply_hat(xi, &zero, &mut cur, &mut g);
            }
        }
        let tol = self.params().tol;
        let mut next = vec![0.0; len];
        let mut steps: Vec<f64> = Vec::new();
        let mut q_max = 0.0_f64;
        let mut converged = false;
        for _ in 0..self.params().max_iter {
            self.apply_hat(xi, &cur, &mut next, &mut g);
            let step = self.hat_dist(&next, &cur);
            std::mem::swap(&mut cur, &mut next);
            let q = match steps.last() {
                Some(&prev) if prev > NOISE_FLOOR * (1.0 + tol) && step > NOISE_FLOOR => {
                    let r = step / prev;
                    q_max = q_max.max(r);
                    r
                }
                _ => self.contraction_bound(),
            };
            steps.push(step);
            if step == 0.0 || (q < 1.0 && step * q <= tol * (1.0 - q)) || step <= NOISE_FLOOR * tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NoConvergence {
                iterations: steps.len(),
                residual: *steps.last().unwrap_or(&f64::NAN),
            });
        }
        self.apply_hat(xi, &cur, &mut next, &mut g);
        let residual = self.hat_dist(&next, &cur);
        let mut h = cur[..n].to_vec();
        h[..model.n_c()].iter_mut().for_each(|x| *x = 0.0);
        let mut quad_pred = model.ls_inverse_bs(xi)?;
        quad_pred[..model.n_c()].iter_mut().for_each(|x| *x = 0.0);
        Ok(ManifoldSample {
            xi: xi.to_vec(),
            v_star: self.wrap(cur),
            h,
            quad_pred,
            iterations: steps.len(),
            steps,
            contraction_estimate: q_max,
            residual,
        })
    }

    /// `ψ(ω, ξ)` via the solve at `e^{-z(0)} ξ`.
    pub fn psi(&self, xi: &[f64], warm: Option<&HistoryFunction>) -> Result<PsiSample> {
        let z0 = self.z0();
        let scaled: Vec<f64> = xi.iter().map(|x| x * (-z0).exp()).collect();
        let sample = self.solve(&scaled, warm)?;
        let psi = sample.h.iter().map(|x| x * z0.exp()).collect();
        Ok(PsiSample {
            xi: xi.to_vec(),
            z0,
            psi,
            quad_pred: self.model().ls_inverse_bs(xi)?,
            sample,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::operator::tests::test_path;
    use crate::manifold::LpParams;
    use crate::model::SpectralModel;
    use crate::noise::{derive_ou, sample_brownian, OuInit, PathSeed, TimeGrid};

    fn e1(m: &SpectralModel, a: f64) -> Vec<f64> {
        let mut x = m.zeros();
        x[0] = a;
        x
    }

    #[test]
    fn zero_xi_gives_zero() {
        let m = SpectralModel::burgers(16, 0.75, 0.05).unwrap();
        let p = test_path(0.3, 2);
        let op = LpOperator::new(&m, &p, LpParams::default()).unwrap();
        let s = op.solve(&m.zeros(), None).unwrap();
        assert!(s.h.iter().all(|&x| x == 0.0));
        assert_eq!(s.v_star.weighted_norm(), 0.0);
    }

    #[test]
    fn fixed_point_properties() {
        let m = SpectralModel::burgers(16, 0.75, 0.05).unwrap();
        let p = test_path(0.3, 3);
        let op = LpOperator::new(&m, &p, LpParams::default()).unwrap();
        let xi = e1(&m, 0.02);
        let s = op.solve(&xi, None).unwrap();
        assert!(s.residual < 1e-11, "residual {}", s.residual);
        let q = op.contraction_bound();
        assert!(s.v_star.weighted_norm() <= m.norm(&xi) / (1.0 - q));
        assert!(s.contraction_estimate <= q);
        // warm start from the solution converges at once
        let w = op.solve(&xi, Some(&s.v_star)).unwrap();
        assert!(w.iterations <= 2);
        let d: f64 = w.h.iter().zip(&s.h).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(d < 1e-12);
    }

    #[test]
    fn deterministic_quadratic_leading_term() {
        let m = SpectralModel::burgers(16, 0.75, 0.05).unwrap();
        let g = TimeGrid::two_sided(40.0, 0.0, 0.005).unwrap();
        let p = derive_ou(sample_brownian(&g, PathSeed::new(1, 0)).unwrap(), 0.0, OuInit::Zero).unwrap();
        let op = LpOperator::new(&m, &p, LpParams::default()).unwrap();
        let mut errs = Vec::new();
        let amps = [0.002, 0.004, 0.008, 0.016];
        for a in amps {
            let s = op.psi(&e1(&m, a), None).unwrap();
            assert!((s.psi[1] - a * a / 6.0).abs() < 1e-2 * a * a);
            let err = m.dist(&s.psi, &s.quad_pred);
            errs.push(err);
            // mirror symmetry: even modes even in a, odd modes odd
            let r = op.psi(&e1(&m, -a), None).unwrap();
            for k in 1..16 {
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                assert!((r.psi[k] - sign * s.psi[k]).abs() < 1e-14);
            }
        }
        for w in errs.windows(2) {
            let slope = (w[1] / w[0]).log2();
            assert!((slope - 3.0).abs() < 0.1, "slope {slope}");
        }
    }

    #[test]
    fn v_s_scales_with_radius_times_xi() {
        let m = SpectralModel::burgers(16, 0.75, 0.05).unwrap();
        let p = test_path(0.1, 4);
        let op = LpOperator::new(&m, &p, LpParams::default()).unwrap();
        let mut ratios = Vec::new();
        for a in [0.005, 0.01, 0.02, 0.04] {
            let s = op.solve(&e1(&m, a), None).unwrap();
            let vs = s.v_star.weighted_norm_modes(1..16);
            ratios.push(vs / (m.r_cut() * a));
        }
        let max = ratios.iter().cloned().fold(0.0, f64::max);
        assert!(max < 1.0, "{ratios:?}");
    }

    #[test]
    fn step_refinement_is_stable() {
        let m = SpectralModel::burgers(16, 0.75, 0.05).unwrap();
        let p = test_path(0.3, 5);
        let xi = e1(&m, 0.03);
        let coarse = LpOperator::new(&m, &p, LpParams { step: 0.01, ..Default::default() })
            .unwrap()
            .solve(&xi, None)
            .unwrap();
        let fine = LpOperator::new(&m, &p, LpParams::default()).unwrap().solve(&xi, None).unwrap();
        let d = m.dist(&coarse.h, &fine.h);
        assert!(d < 1e-3 * m.norm(&fine.h), "{d}");
    }
}
