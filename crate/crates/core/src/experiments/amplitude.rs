use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{Check, ExperimentReport, Table};
use super::stats::fraction;
use super::{Experiment, ExperimentConfig};
use crate::error::{Error, Result};
use crate::integrate::{integrate_amplitude, integrate_v, StepOptions};
use crate::model::SpectralModel;
use crate::noise::{derive_ou, sample_brownian, NoisePath, OuInit, PathSeed, TimeGrid};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AmplitudeRow {
    pub epsilon: f64,
    pub path: u64,
    /// Blew up or left the guard; excluded from the statistics.
    pub flagged: bool,
    /// `sup_t |u₁(t) - ε a(ε²t)|`.
    pub sup_error: f64,
    pub scaled_error: f64,
    pub within: bool,
    /// `sup_t ‖P_s u(t)‖ / ε²`.
    pub slaved_ratio: f64,
    pub final_a: f64,
}

impl AmplitudeRow {
    fn flagged(epsilon: f64, path: u64) -> Self {
        Self {
            epsilon,
            path,
            flagged: true,
            sup_error: f64::NAN,
            scaled_error: f64::NAN,
            within: false,
            slaved_ratio: f64::NAN,
            final_a: f64::NAN,
        }
    }
}

/// Path with `σ = ε` on `[-tail, ε⁻²]`.
fn amplitude_path(cfg: &ExperimentConfig, index: u64, epsilon: f64) -> Result<NoisePath> {
    let g = &cfg.grid;
    let t_end = (epsilon.powi(-2) / g.dt).round() * g.dt;
    let grid = TimeGrid::two_sided(g.tail, t_end, g.dt)?;
    let bm = sample_brownian(&grid, PathSeed::new(cfg.monte_carlo.master_seed, index))?;
    derive_ou(bm, epsilon, OuInit::Stationary)
}

fn amplitude_row(cfg: &ExperimentConfig, model: &SpectralModel, index: u64, epsilon: f64) -> Result<AmplitudeRow> {
    let a = &cfg.amplitude;
    let dt = cfg.grid.dt;
    let path = amplitude_path(cfg, index, epsilon)?;
    let t_end = path.grid().t_end();
    let mut v0 = model.zeros();
    v0[0] = epsilon * a.a0 * (-path.z_origin()).exp();
    let opts = StepOptions {
        nu: a.nu0 * epsilon * epsilon,
        cutoff: false,
        ..StepOptions::default()
    };
    let full = match integrate_v(model, &path, &v0, t_end, dt, opts) {
        Ok(v) => v.to_u(&path)?,
        Err(Error::BlowUp { .. }) => return Ok(AmplitudeRow::flagged(epsilon, index)),
        Err(e) => return Err(e),
    };
    // W̃(T) = ε ω(T/ε²) sampled on T_n = ε² t_n
    let i0 = path.zero_index();
    let w: Vec<f64> = path.w()[i0..].iter().map(|x| epsilon * x).collect();
    let amp = match integrate_amplitude(a.nu0, a.a0, epsilon * epsilon * dt, &w) {
        Ok(t) => t,
        Err(Error::BlowUp { .. }) => return Ok(AmplitudeRow::flagged(epsilon, index)),
        Err(e) => return Err(e),
    };
    let nc = model.n_c();
    let (mut sup_error, mut sup_s) = (0.0_f64, 0.0_f64);
    for (u, am) in full.states.iter().zip(&amp.states) {
        sup_error = sup_error.max((u[0] - epsilon * am[0]).abs());
        let mut s = u.clone();
        s[..nc].iter_mut().for_each(|x| *x = 0.0);
        sup_s = sup_s.max(model.norm(&s));
    }
    let eps2 = epsilon * epsilon;
    Ok(AmplitudeRow {
        epsilon,
        path: index,
        flagged: false,
        sup_error,
        scaled_error: sup_error / eps2,
        within: sup_error <= a.tol_factor * eps2,
        slaved_ratio: sup_s / eps2,
        final_a: amp.last()[0],
    })
}

fn median(mut x: Vec<f64>) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    x.sort_by(f64::total_cmp);
    x[x.len() / 2]
}

pub fn run_amplitude(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let model = cfg.model()?;
    let a = &cfg.amplitude;
    let n = cfg.monte_carlo.n_paths as u64;
    let jobs: Vec<(f64, u64)> = a
        .epsilons
        .iter()
        .flat_map(|&e| (0..n).map(move |i| (e, i)))
        .collect();
    let rows: Vec<AmplitudeRow> = jobs
        .into_par_iter()
        .map(|(e, i)| amplitude_row(cfg, &model, i, e))
        .collect::<Result<_>>()?;

    let mut report = ExperimentReport::new(Experiment::Amplitude, cfg);
    report.in_hypothesis = rows.iter().filter(|r| !r.flagged).count();
    report.out_of_hypothesis = rows.len() - report.in_hypothesis;
    let mut order = a.epsilons.clone();
    order.sort_by(|x, y| y.total_cmp(x));
    let mut medians = Vec::new();
    for &e in &order {
        let ok: Vec<&AmplitudeRow> = rows.iter().filter(|r| r.epsilon == e && !r.flagged).collect();
        let frac = fraction(ok.iter().map(|r| r.within));
        let med = median(ok.iter().map(|r| r.sup_error).collect());
        let key = crate::format::num(e);
        report.set(&format!("fraction_within[{key}]"), frac);
        report.set(&format!("median_sup_error[{key}]"), med);
        report.set(
            &format!("median_slaved_ratio[{key}]"),
            median(ok.iter().map(|r| r.slaved_ratio).collect()),
        );
        report.set(
            &format!("max_slaved_ratio[{key}]"),
            ok.iter().map(|r| r.slaved_ratio).fold(0.0, f64::max),
        );
        report.checks.push(Check::at_least(&format!("fraction_within[{key}]"), frac, a.min_fraction));
        medians.push(med);
    }
    let decreasing = medians.windows(2).all(|w| w[1] < w[0]);
    report.checks.push(Check::holds("median_error_decreases_with_epsilon", decreasing));

    let mut t = Table::new(
        "rows",
        &["epsilon", "path", "flagged", "sup_error", "scaled_error", "within", "slaved_ratio", "final_a"],
    );
    for r in &rows {
        t.push(vec![
            r.epsilon.into(),
            r.path.into(),
            r.flagged.into(),
            r.sup_error.into(),
            r.scaled_error.into(),
            r.within.into(),
            r.slaved_ratio.into(),
            r.final_a.into(),
        ]);
    }
    report.tables.push(t);
    Ok(report)
}
