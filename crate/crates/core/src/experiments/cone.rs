use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{Check, ExperimentReport, Table};
use super::{Experiment, ExperimentConfig};
use crate::error::Result;
use crate::integrate::{integrate_v, StepOptions};
use crate::model::SpectralModel;
use crate::noise::PathSeed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    Identical,
    KernelOnly,
    ThirdModeOnly,
    Random,
}

impl PairKind {
    fn of(index: u64) -> Self {
        match index % 4 {
            0 => PairKind::Identical,
            1 => PairKind::KernelOnly,
            2 => PairKind::ThirdModeOnly,
            _ => PairKind::Random,
        }
    }

    fn name(self) -> &'static str {
        match self {
            PairKind::Identical => "identical",
            PairKind::KernelOnly => "kernel_only",
            PairKind::ThirdModeOnly => "third_mode_only",
            PairKind::Random => "random",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConePair {
    pub pair: u64,
    pub kind: PairKind,
    pub initially_inside: bool,
    /// First grid time with `|q| ≤ δ|p|`.
    pub entry_time: f64,
    /// Grid times after entry with `|q| - δ|p| > tol·(|p|+|q|)`.
    pub reexit_events: usize,
    /// Largest `(|q| - δ|p|)/(|p|+|q|)` after entry.
    pub max_excess: f64,
    pub decay_checks: usize,
    pub decay_violations: usize,
    /// Largest `|q|²` over the decay envelope before entry.
    pub max_decay_ratio: f64,
    /// Violations of the envelope with a single `z(0)` in the exponent.
    pub literal_violations: usize,
}

fn pair_data(cfg: &ExperimentConfig, model: &SpectralModel, index: u64) -> (PairKind, Vec<f64>, Vec<f64>) {
    let mut rng = PathSeed::new(cfg.monte_carlo.master_seed, index).auxiliary();
    let n = model.n_total();
    let nc = model.n_c();
    let r = model.r_cut();
    let mut unit = |modes: std::ops::Range<usize>| {
        let mut v = model.zeros();
        for k in modes {
            v[k] = rng.sample::<f64, _>(StandardNormal);
        }
        let norm = model.norm(&v);
        v.iter_mut().for_each(|x| *x /= norm);
        v
    };
    let base: Vec<f64> = unit(0..n).iter().map(|x| 0.5 * r * x).collect();
    let kind = PairKind::of(index);
    let spread = cfg.cone.spread * r;
    let diff: Vec<f64> = match kind {
        PairKind::Identical => model.zeros(),
        PairKind::KernelOnly => unit(0..nc).iter().map(|x| spread * x).collect(),
        PairKind::ThirdModeOnly => {
            let mut d = model.zeros();
            d[2] = spread / model.norm(&model.unit(2));
            d
        }
        PairKind::Random => unit(0..n).iter().map(|x| spread * x).collect(),
    };
    let other = base.iter().zip(&diff).map(|(a, b)| a + b).collect();
    (kind, base, other)
}

fn cone_pair(cfg: &ExperimentConfig, model: &SpectralModel, index: u64) -> Result<ConePair> {
    let d = &cfg.dynamics;
    let g = &cfg.grid;
    let tol = cfg.cone.tol;
    let delta = d.delta;
    let (kind, u0, ubar0) = pair_data(cfg, model, index);
    let path = cfg.path(index, d.sigma)?;
    let z0 = path.z_origin();
    let scale = (-z0).exp();
    let v0: Vec<f64> = u0.iter().map(|x| x * scale).collect();
    let vbar0: Vec<f64> = ubar0.iter().map(|x| x * scale).collect();
    let opts = StepOptions {
        nu: d.nu,
        ..StepOptions::default()
    };
    let a = integrate_v(model, &path, &v0, g.t_end, g.dt, opts)?;
    let b = integrate_v(model, &path, &vbar0, g.t_end, g.dt, opts)?;
    let du2 = model.dist(&u0, &ubar0).powi(2);
    let lambda_star = model.lambda_star();

    let mut entry: Option<f64> = None;
    let mut initially_inside = false;
    let (mut reexit, mut max_excess) = (0, f64::NEG_INFINITY);
    let (mut checks, mut violations, mut literal, mut max_ratio) = (0, 0, 0, 0.0_f64);
    for (i, ((t, x), y)) in a.times.iter().zip(&a.states).zip(&b.states).enumerate() {
        let diff: Vec<f64> = x.iter().zip(y).map(|(p, q)| p - q).collect();
        let p = model.norm_c(&diff);
        let q = model.norm_s(&diff);
        if entry.is_none() && q <= delta * p {
            entry = Some(*t);
            initially_inside = i == 0;
        }
        if entry.is_some() {
            let excess = if p + q > 0.0 { (q - delta * p) / (p + q) } else { 0.0 };
            max_excess = max_excess.max(excess);
            if excess > tol {
                reexit += 1;
            }
        } else {
            // still outside: compare |q|² with the decay envelope
            let zi = path.z_integral_at(*t);
            let env = du2 * (-0.5 * lambda_star * t - 2.0 * z0 + 2.0 * zi).exp();
            let lit = du2 * (-0.5 * lambda_star * t - z0 + 2.0 * zi).exp();
            checks += 1;
            let ratio = q * q / env;
            max_ratio = max_ratio.max(ratio);
            if ratio > 1.0 + tol {
                violations += 1;
            }
            if q * q > lit * (1.0 + tol) {
                literal += 1;
            }
        }
    }
    Ok(ConePair {
        pair: index,
        kind,
        initially_inside,
        entry_time: entry.unwrap_or(f64::INFINITY),
        reexit_events: reexit,
        max_excess: if entry.is_some() { max_excess } else { f64::NAN },
        decay_checks: checks,
        decay_violations: violations,
        max_decay_ratio: max_ratio,
        literal_violations: literal,
    })
}

pub fn run_cone(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let model = cfg.model()?;
    let pairs: Vec<ConePair> = (0..cfg.monte_carlo.n_paths as u64)
        .into_par_iter()
        .map(|i| cone_pair(cfg, &model, i))
        .collect::<Result<_>>()?;
    let reexits: usize = pairs.iter().map(|p| p.reexit_events).sum();
    let violations: usize = pairs.iter().map(|p| p.decay_violations).sum();
    let literal: usize = pairs.iter().map(|p| p.literal_violations).sum();
    let checks: usize = pairs.iter().map(|p| p.decay_checks).sum();

    let mut report = ExperimentReport::new(Experiment::Cone, cfg);
    report.in_hypothesis = pairs.len();
    report.set("pairs", pairs.len());
    report.set("pairs_entering_cone", pairs.iter().filter(|p| p.entry_time.is_finite()).count());
    report.set("reexit_events", reexits);
    report.set("decay_checks", checks);
    report.set("decay_violations", violations);
    report.set("literal_decay_violations", literal);
    report.set(
        "max_decay_ratio",
        pairs.iter().map(|p| p.max_decay_ratio).fold(0.0, f64::max),
    );
    report.checks.push(Check::at_most("reexit_events", reexits as f64, 0.0));
    report.checks.push(Check::at_most("decay_violations", violations as f64, 0.0));

    let mut t = Table::new(
        "rows",
        &[
            "pair", "kind", "initially_inside", "entry_time", "reexit_events", "max_excess",
            "decay_checks", "decay_violations", "max_decay_ratio", "literal_violations",
        ],
    );
    for p in &pairs {
        t.push(vec![
            p.pair.into(),
            p.kind.name().into(),
            p.initially_inside.into(),
            p.entry_time.into(),
            p.reexit_events.into(),
            p.max_excess.into(),
            p.decay_checks.into(),
            p.decay_violations.into(),
            p.max_decay_ratio.into(),
            p.literal_violations.into(),
        ]);
    }
    report.tables.push(t);
    Ok(report)
}
