use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{Check, ExperimentReport, Table};
use super::stats::{fraction, linear_fit};
use super::{Experiment, ExperimentConfig};
use crate::error::Result;
use crate::integrate::{integrate_v, StepOptions};
use crate::manifold::{LpOperator, ManifoldChart};
use crate::model::SpectralModel;
use crate::noise::{shift_path, NoisePath, PathSeed};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttractionSample {
    pub path: u64,
    pub t: f64,
    pub norm_u: f64,
    pub distance: f64,
    /// `D(t, ω) = e^{z(t) + ∫₀ᵗ z}`.
    pub d_factor: f64,
    pub bound: f64,
    pub within: bool,
    pub at_boundary: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttractionPath {
    pub path: u64,
    /// Left `B_R` before `t_end`.
    pub flagged: bool,
    pub tau0: f64,
    pub all_within: bool,
    pub rate: f64,
    pub rate_r2: f64,
    pub max_distance: f64,
}

/// Initial datum with kernel part `init_c·R` and stable part `init_s·R` in a
/// random direction, or `ξ + ψ(ω, ξ)` when `on_manifold`.
fn initial_datum(cfg: &ExperimentConfig, model: &SpectralModel, op: &LpOperator<'_>, index: u64) -> Result<Vec<f64>> {
    let a = &cfg.attraction;
    let r = model.r_cut();
    let mut rng = PathSeed::new(cfg.monte_carlo.master_seed, index).auxiliary();
    let nc = model.n_c();
    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
    let mut u = model.zeros();
    let e_norm = model.norm(&model.unit(0));
    u[0] = sign * a.init_c * r / e_norm;
    if a.on_manifold {
        let psi = op.psi(&u, None)?.psi;
        u.iter_mut().zip(&psi).skip(nc).for_each(|(x, p)| *x = *p);
        return Ok(u);
    }
    let dir: Vec<f64> = (nc..model.n_total()).map(|_| rng.sample(StandardNormal)).collect();
    let norm = model.norm(&dir);
    for (x, d) in u[nc..].iter_mut().zip(&dir) {
        *x = a.init_s * r * d / norm;
    }
    Ok(u)
}

fn attraction_path(
    cfg: &ExperimentConfig,
    model: &SpectralModel,
    index: u64,
) -> Result<(AttractionPath, Vec<AttractionSample>)> {
    let d = &cfg.dynamics;
    let a = &cfg.attraction;
    let g = &cfg.grid;
    let path = cfg.path(index, d.sigma)?;
    let lp = cfg.lp_params(d.nu);
    let op0 = LpOperator::new(model, &path, lp)?;
    let u0 = initial_datum(cfg, model, &op0, index)?;
    let z0 = path.z_origin();
    let v0: Vec<f64> = u0.iter().map(|x| x * (-z0).exp()).collect();
    let opts = StepOptions {
        nu: d.nu,
        ..StepOptions::default()
    };
    let u = integrate_v(model, &path, &v0, g.t_end, g.dt, opts)?.to_u(&path)?;
    let r = model.r_cut();
    let tau0 = u
        .times
        .iter()
        .zip(&u.states)
        .find(|(_, s)| model.norm(s) >= r)
        .map_or(f64::INFINITY, |(t, _)| *t);

    let every = (a.sample_every / g.dt).round() as usize;
    let lambda_star = model.lambda_star();
    let mut samples = Vec::new();
    for i in (0..u.times.len()).step_by(every.max(1)) {
        let t = u.times[i];
        if t >= tau0 {
            break;
        }
        let shifted = shifted_path(&path, t, g.tail)?;
        let op = LpOperator::new(model, &shifted, lp)?;
        let dist = ManifoldChart::new(&op).distance(&u.states[i])?;
        let d_factor = (path.z_at(t) + path.z_integral_at(t)).exp();
        let bound = 2.0 * r * d_factor * (-lambda_star * t).exp();
        samples.push(AttractionSample {
            path: index,
            t,
            norm_u: model.norm(&u.states[i]),
            distance: dist.distance,
            d_factor,
            bound,
            within: dist.distance <= bound,
            at_boundary: dist.at_boundary,
        });
    }

    // fit only where the distance is resolved above the solver accuracy
    let floor = 1e-9 * r;
    let (ts, ls): (Vec<f64>, Vec<f64>) = samples
        .iter()
        .filter(|s| s.distance > floor)
        .map(|s| (s.t, s.distance.ln()))
        .unzip();
    let fit = linear_fit(&ts, &ls);
    let summary = AttractionPath {
        path: index,
        flagged: tau0 <= g.t_end,
        tau0,
        all_within: samples.iter().all(|s| s.within),
        rate: fit.map_or(f64::NAN, |f| -f.slope),
        rate_r2: fit.map_or(f64::NAN, |f| f.r2),
        max_distance: samples.iter().map(|s| s.distance).fold(0.0, f64::max),
    };
    Ok((summary, samples))
}

/// `θ_t ω` with the full stored history behind it.
fn shifted_path(path: &NoisePath, t: f64, tail: f64) -> Result<NoisePath> {
    shift_path(path, t, t + tail, 0.0)
}

pub fn run_attraction(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let model = cfg.model()?;
    let a = &cfg.attraction;
    let results: Vec<(AttractionPath, Vec<AttractionSample>)> = (0..cfg.monte_carlo.n_paths as u64)
        .into_par_iter()
        .map(|i| attraction_path(cfg, &model, i))
        .collect::<Result<_>>()?;
    let unflagged: Vec<&AttractionPath> = results.iter().map(|r| &r.0).filter(|p| !p.flagged).collect();
    let rate_min = a.rate_factor * model.lambda_star();
    let bound_fraction = fraction(unflagged.iter().map(|p| p.all_within));
    let rate_fraction = fraction(unflagged.iter().map(|p| p.rate >= rate_min));
    let mut rates: Vec<f64> = unflagged.iter().map(|p| p.rate).filter(|r| r.is_finite()).collect();
    rates.sort_by(f64::total_cmp);

    let mut report = ExperimentReport::new(Experiment::Attract, cfg);
    report.in_hypothesis = unflagged.len();
    report.out_of_hypothesis = results.len() - unflagged.len();
    report.set("lambda_star", model.lambda_star());
    report.set("flagged_paths", report.out_of_hypothesis);
    report.set("bound_fraction", bound_fraction);
    report.set("rate_fraction", rate_fraction);
    report.set("rate_threshold", rate_min);
    report.set("median_rate", rates.get(rates.len() / 2).copied().unwrap_or(f64::NAN));
    report.set(
        "max_distance",
        results.iter().map(|r| r.0.max_distance).fold(0.0, f64::max),
    );
    report.checks.push(Check::at_least("pathwise_bound_fraction", bound_fraction, a.min_bound_fraction));
    if a.on_manifold {
        // invariance: the trajectory stays on the moving graph up to the time-stepping error
        let max = results.iter().map(|r| r.0.max_distance).fold(0.0, f64::max);
        report.checks.push(Check::at_most("on_manifold_max_distance", max, 1e-3 * model.r_cut()));
    } else {
        report.checks.push(Check::at_least("decay_rate_fraction", rate_fraction, a.min_rate_fraction));
    }

    let mut t = Table::new(
        "rows",
        &["path", "t", "norm_u", "distance", "d_factor", "bound", "within", "at_boundary"],
    );
    let mut p = Table::new(
        "paths",
        &["path", "flagged", "tau0", "all_within", "rate", "rate_r2", "max_distance"],
    );
    for (s, rows) in &results {
        for r in rows {
            t.push(vec![
                r.path.into(),
                r.t.into(),
                r.norm_u.into(),
                r.distance.into(),
                r.d_factor.into(),
                r.bound.into(),
                r.within.into(),
                r.at_boundary.into(),
            ]);
        }
        p.push(vec![
            s.path.into(),
            s.flagged.into(),
            s.tau0.into(),
            s.all_within.into(),
            s.rate.into(),
            s.rate_r2.into(),
            s.max_distance.into(),
        ]);
    }
    report.tables.push(t);
    report.tables.push(p);
    Ok(report)
}
