use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::ExperimentConfig;
use crate::error::Result;
use crate::manifold::LpOperator;
use crate::noise::PathSeed;

/// Steps below this fraction of the first Picard step are treated as rounding.
const STEP_FLOOR: f64 = 1e-10;
const POWER_ITERATIONS: usize = 30;
const RANDOM_PAIRS: usize = 12;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContractionPath {
    pub path: u64,
    pub bound: f64,
    /// Largest Lipschitz quotient over all probed pairs.
    pub measured: f64,
    pub measured_random: f64,
    pub measured_local: f64,
    /// Largest ratio of successive Picard steps above the rounding floor.
    pub max_step_ratio: f64,
    /// `exp` of the fitted slope of `log step` against the iteration count.
    pub geometric_ratio: f64,
    pub iterations: usize,
}

impl ContractionPath {
    pub fn below_bound(&self) -> bool {
        self.measured <= self.bound
    }

    pub fn geometric(&self) -> bool {
        self.max_step_ratio <= 1.05 * self.measured
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContractionStudy {
    pub bound: f64,
    pub paths: Vec<ContractionPath>,
}

impl ContractionStudy {
    pub fn measured(&self) -> f64 {
        self.paths.iter().map(|p| p.measured).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.paths.iter().all(|p| p.below_bound() && p.geometric())
    }
}

/// Lipschitz quotients of the Lyapunov–Perron operator on `n_paths` noise
/// paths of `cfg`, with `ξ` at half the cut-off radius.
pub fn contraction_study(cfg: &ExperimentConfig, n_paths: usize) -> Result<ContractionStudy> {
    let model = cfg.model()?;
    let lp = cfg.lp_params(cfg.dynamics.nu);
    let n = model.n_total();
    let r = model.r_cut();
    let mut xi = model.zeros();
    xi[0] = 0.5 * r / model.norm(&model.unit(0));
    let mut out = Vec::with_capacity(n_paths);
    let mut bound = f64::NAN;
    for index in 0..n_paths as u64 {
        let path = cfg.path(index, cfg.dynamics.sigma)?;
        let op = LpOperator::new(&model, &path, lp)?;
        bound = op.contraction_bound();
        let len = op.n_nodes() * n;
        let zero = vec![0.0; len];
        let image = |hat: &[f64]| {
            let mut out = vec![0.0; len];
            let mut g = vec![0.0; len];
            op.apply_hat(&xi, hat, &mut out, &mut g);
            out
        };
        let quotient = |a: &[f64], b: &[f64]| {
            let d = op.hat_dist(a, b);
            if d > 0.0 {
                op.hat_dist(&image(a), &image(b)) / d
            } else {
                0.0
            }
        };
        let mut rng = PathSeed::new(cfg.monte_carlo.master_seed, index).auxiliary();

        // smooth random histories with weighted norm up to 1.5 R
        let mut random_history = |amp: f64| -> Vec<f64> {
            let coef: Vec<(f64, f64)> = (0..n)
                .map(|_| (rng.sample::<f64, _>(StandardNormal), rng.random_range(0.1..2.0)))
                .collect();
            let mut hat = vec![0.0; len];
            for (i, row) in hat.chunks_exact_mut(n).enumerate() {
                let t = i as f64 * lp.step;
                for (k, x) in row.iter_mut().enumerate() {
                    let (c, f) = coef[k];
                    *x = c * (f * t).cos() / (k + 1) as f64;
                }
            }
            let norm = op.hat_dist(&hat, &zero);
            hat.iter_mut().for_each(|x| *x *= amp / norm);
            hat
        };
        let mut measured_random = 0.0_f64;
        for _ in 0..RANDOM_PAIRS {
            let a = random_history(1.5 * r);
            let b = random_history(1.5 * r);
            measured_random = measured_random.max(quotient(&a, &b));
        }

        let sample = op.solve(&xi, None)?;
        let star = sample.v_star.hat.clone();
        let mut measured_local = 0.0_f64;
        // small random perturbations of v*
        for _ in 0..RANDOM_PAIRS {
            let d = random_history(1e-4 * r);
            let b: Vec<f64> = star.iter().zip(&d).map(|(x, y)| x + y).collect();
            measured_local = measured_local.max(quotient(&star, &b));
        }
        // power iteration on the linearisation at v*
        let mut d = random_history(1e-4 * r);
        let t_star = image(&star);
        for _ in 0..POWER_ITERATIONS {
            let b: Vec<f64> = star.iter().zip(&d).map(|(x, y)| x + y).collect();
            let next: Vec<f64> = image(&b).iter().zip(&t_star).map(|(x, y)| x - y).collect();
            let dist = op.hat_dist(&b, &star);
            let norm = op.hat_dist(&next, &zero);
            if dist > 0.0 {
                measured_local = measured_local.max(norm / dist);
            }
            if !(norm > 0.0) {
                break;
            }
            d = next.iter().map(|x| x * 1e-4 * r / norm).collect();
        }

        let floor = STEP_FLOOR * sample.steps.first().copied().unwrap_or(0.0);
        let resolved: Vec<(usize, f64)> = sample
            .steps
            .iter()
            .copied()
            .enumerate()
            .filter(|&(_, s)| s > floor)
            .collect();
        let max_step_ratio = resolved
            .windows(2)
            .filter(|w| w[1].0 == w[0].0 + 1)
            .map(|w| w[1].1 / w[0].1)
            .fold(0.0, f64::max);
        let (xs, ys): (Vec<f64>, Vec<f64>) = resolved.iter().map(|&(i, s)| (i as f64, s.ln())).unzip();
        let geometric_ratio = super::stats::linear_fit(&xs, &ys).map_or(f64::NAN, |f| f.slope.exp());
        out.push(ContractionPath {
            path: index,
            bound,
            measured: measured_random.max(measured_local),
            measured_random,
            measured_local,
            max_step_ratio,
            geometric_ratio,
            iterations: sample.iterations,
        });
    }
    Ok(ContractionStudy { bound, paths: out })
}
