use super::report::{Check, ExperimentReport, Table};
use super::{Experiment, ExperimentConfig};
use crate::error::Result;
use crate::integrate::{
    integrate_amplitude, integrate_reduced, integrate_v, ReducedMode, ReducedOptions, Repr, StepOptions,
    Trajectory,
};

/// One full trajectory, plus the reduced flow and the amplitude prediction
/// `ε a(ε²t)` with `ε = σ` when requested.
pub fn run_simulate(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let s = &cfg.simulate;
    let d = &cfg.dynamics;
    let g = &cfg.grid;
    let model = cfg.model()?;
    let path = cfg.path(s.path_index, d.sigma)?;
    let mut u0 = model.zeros();
    u0[..s.u0.len()].copy_from_slice(&s.u0);
    let scale = (-path.z_origin()).exp();
    let v0: Vec<f64> = u0.iter().map(|x| x * scale).collect();
    let opts = StepOptions {
        nu: d.nu,
        cutoff: s.cutoff,
        ..StepOptions::default()
    };
    let full = integrate_v(&model, &path, &v0, g.t_end, g.dt, opts)?.to_u(&path)?;

    let mut report = ExperimentReport::new(Experiment::Simulate, cfg);
    report.in_hypothesis = 1;
    let max_norm = full.states.iter().map(|x| model.norm(x)).fold(0.0, f64::max);
    report.set("max_norm", max_norm);
    report.set("final_norm", model.norm(full.last()));
    report.checks.push(Check::holds("finite", max_norm.is_finite()));
    report.tables.push(Table::from_trajectory("full", &full, Some(&model)));

    if s.reduced {
        let nc = model.n_c();
        let xi0: Vec<f64> = v0[..nc].to_vec();
        let ropts = ReducedOptions {
            mode: ReducedMode::ExactLp,
            lp: cfg.lp_params(d.nu),
            ..ReducedOptions::default()
        };
        let reduced = integrate_reduced(&model, &path, &xi0, g.t_end, g.dt, ropts)?.to_u(&path)?;
        let gap = full
            .states
            .iter()
            .zip(&reduced.states)
            .map(|(a, b)| model.dist(a, b))
            .fold(0.0, f64::max);
        report.set("max_full_reduced_gap", gap);
        report.tables.push(Table::from_trajectory("reduced", &reduced, Some(&model)));
    }

    if s.amplitude && d.sigma > 0.0 {
        let eps = d.sigma;
        let i0 = path.zero_index();
        let w: Vec<f64> = path.w()[i0..].iter().map(|x| eps * x).collect();
        let amp = integrate_amplitude(d.nu / (eps * eps), u0[0] / eps, eps * eps * g.dt, &w)?;
        let pred = Trajectory {
            times: full.times.clone(),
            states: amp.states.iter().map(|a| vec![eps * a[0]]).collect(),
            repr: Repr::U,
        };
        let gap = full
            .states
            .iter()
            .zip(&pred.states)
            .map(|(u, p)| (u[0] - p[0]).abs())
            .fold(0.0, f64::max);
        report.set("max_first_mode_gap", gap);
        report.tables.push(Table::from_trajectory("amplitude", &pred, None));
    }
    Ok(report)
}
