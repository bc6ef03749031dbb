use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Exp};

use super::report::{Check, ExperimentReport, Table};
use super::stats::{fraction, is_calibration, ks_statistic};
use super::{Experiment, ExperimentConfig};
use crate::error::{Error, Result};
use crate::noise::{compute_k_functionals, k2_bound_constant};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KtailRow {
    pub path: u64,
    pub k_tilde: f64,
    pub k_tilde_grid: f64,
    pub k_tilde_neg: f64,
    pub k_pm: f64,
    pub k2: f64,
    pub z0: f64,
    pub z0_bound: f64,
    /// `e^{σK±}(1+K±)`; the bound is `C` times this.
    pub k2_shape: f64,
    pub calibration: bool,
}

impl KtailRow {
    pub fn z0_ok(&self) -> bool {
        self.z0 <= self.z0_bound
    }
}

fn ktail_row(cfg: &ExperimentConfig, index: u64) -> Result<KtailRow> {
    let d = &cfg.dynamics;
    let path = cfg.path(index, d.sigma)?;
    let k = compute_k_functionals(&path, d.nu, d.eta)?;
    Ok(KtailRow {
        path: index,
        k_tilde: k.k_tilde,
        k_tilde_grid: path.k_tilde_grid(),
        k_tilde_neg: path.k_tilde_neg(),
        k_pm: k.k_pm,
        k2: k.k2,
        z0: path.z0(),
        z0_bound: d.sigma * (path.k_tilde_neg() + 1.0),
        k2_shape: (d.sigma * k.k_pm).exp() * (1.0 + k.k_pm),
        calibration: is_calibration(index),
    })
}

pub fn run_ktail(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let d = &cfg.dynamics;
    let rows: Vec<KtailRow> = (0..cfg.monte_carlo.n_paths as u64)
        .into_par_iter()
        .map(|i| ktail_row(cfg, i))
        .collect::<Result<_>>()?;

    let exp1 = Exp::new(1.0).map_err(|e| Error::domain(e.to_string()))?;
    let doubled: Vec<f64> = rows.iter().map(|r| 2.0 * r.k_tilde).collect();
    let ks = ks_statistic(&doubled, |x| exp1.cdf(x));
    let z0_fraction = fraction(rows.iter().map(KtailRow::z0_ok));

    let in_hypothesis = d.nu.abs() + d.sigma < d.eta / 2.0 && d.nu.abs() <= d.sigma;
    let c = k2_bound_constant(d.eta);
    let k2_fraction = fraction(rows.iter().map(|r| r.k2 <= c * r.k2_shape));
    let c_fit = rows
        .iter()
        .filter(|r| r.calibration)
        .map(|r| r.k2 / r.k2_shape)
        .fold(0.0, f64::max);
    let fit_fraction = fraction(
        rows.iter()
            .filter(|r| !r.calibration)
            .map(|r| r.k2 <= c_fit * r.k2_shape),
    );

    let mut report = ExperimentReport::new(Experiment::Ktail, cfg);
    if in_hypothesis {
        report.in_hypothesis = rows.len();
    } else {
        report.out_of_hypothesis = rows.len();
    }
    report.set("ks_statistic", ks);
    report.set("mean_k_tilde", rows.iter().map(|r| r.k_tilde).sum::<f64>() / rows.len() as f64);
    report.set("z0_fraction", z0_fraction);
    report.set("k2_constant", c);
    report.set("k2_fraction", k2_fraction);
    report.set("k2_fitted_constant", c_fit);
    report.set("k2_fitted_validation_fraction", fit_fraction);
    report.set(
        "max_grid_gap",
        rows.iter().map(|r| r.k_tilde - r.k_tilde_grid).fold(0.0, f64::max),
    );
    report.checks.push(Check::below("ks_statistic", ks, cfg.ktail.max_ks));
    report.checks.push(Check::at_least("z0_bound_fraction", z0_fraction, 1.0));
    if in_hypothesis {
        report.checks.push(Check::at_least("k2_bound_fraction", k2_fraction, 1.0));
    }

    let mut t = Table::new(
        "rows",
        &[
            "path", "k_tilde", "k_tilde_grid", "k_tilde_neg", "k_pm", "k2", "z0", "z0_bound",
            "k2_shape", "calibration",
        ],
    );
    for r in &rows {
        t.push(vec![
            r.path.into(),
            r.k_tilde.into(),
            r.k_tilde_grid.into(),
            r.k_tilde_neg.into(),
            r.k_pm.into(),
            r.k2.into(),
            r.z0.into(),
            r.z0_bound.into(),
            r.k2_shape.into(),
            r.calibration.into(),
        ]);
    }
    report.tables.push(t);
    Ok(report)
}
