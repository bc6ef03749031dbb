use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::LpParams;
use crate::model::{check_conditions, ConditionReport, ModelConfig, SpectralModel};
use crate::noise::{derive_ou, sample_brownian, NoisePath, OuInit, PathSeed, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Shape,
    Attract,
    Cone,
    Ktail,
    Amplitude,
    Simulate,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::Shape,
        Experiment::Attract,
        Experiment::Cone,
        Experiment::Ktail,
        Experiment::Amplitude,
        Experiment::Simulate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Shape => "shape",
            Experiment::Attract => "attract",
            Experiment::Cone => "cone",
            Experiment::Ktail => "ktail",
            Experiment::Amplitude => "amplitude",
            Experiment::Simulate => "simulate",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Experiment::ALL.iter().map(|e| e.name()).collect();
                Error::config(format!("unknown experiment `{s}`; expected one of {}", names.join(", ")))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dynamics {
    pub nu: f64,
    pub sigma: f64,
    pub eta: f64,
    pub delta: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grids {
    /// Path and integrator step.
    pub dt: f64,
    pub t_end: f64,
    /// Stored path history before `t = 0`.
    pub tail: f64,
    pub lp_step: f64,
    pub lp_window: f64,
    pub lp_tol: f64,
    pub lp_max_iter: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarlo {
    pub n_paths: usize,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeConfig {
    pub sigmas: Vec<f64>,
    /// `ν = nu_ratio·σ` along the sweep.
    pub nu_ratio: f64,
    /// Points of the ξ grid on each side of 0, geometric up to `R/2`.
    pub xi_points: usize,
    pub xi_min_ratio: f64,
    /// Safety factor on the calibrated constant.
    pub headroom: f64,
    pub min_fraction: f64,
    pub deterministic_sigma: f64,
    pub deterministic_amplitudes: [f64; 2],
    pub deterministic_points: usize,
    pub slope_tolerance: f64,
    pub r_sweep: Vec<f64>,
    pub chain_paths: usize,
    pub chain_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttractionConfig {
    pub sample_every: f64,
    /// Initial kernel and stable norms as fractions of `R`.
    pub init_c: f64,
    pub init_s: f64,
    pub on_manifold: bool,
    pub min_bound_fraction: f64,
    pub min_rate_fraction: f64,
    /// Required rate as a fraction of `λ*`.
    pub rate_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConeConfig {
    /// Relative slack on the cone and decay inequalities.
    pub tol: f64,
    /// Size of the pair difference as a fraction of `R`.
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KtailConfig {
    pub max_ks: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmplitudeConfig {
    pub epsilons: Vec<f64>,
    pub nu0: f64,
    pub a0: f64,
    /// Error tolerance as a multiple of `ε²`.
    pub tol_factor: f64,
    pub min_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    /// Initial condition in `u` coordinates; padded with zeros.
    pub u0: Vec<f64>,
    pub cutoff: bool,
    pub reduced: bool,
    pub amplitude: bool,
    pub path_index: u64,
}

/// Resolved configuration: a per-experiment preset with the user's file
/// merged on top.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub dynamics: Dynamics,
    pub grid: Grids,
    pub monte_carlo: MonteCarlo,
    pub shape: ShapeConfig,
    pub attraction: AttractionConfig,
    pub cone: ConeConfig,
    pub ktail: KtailConfig,
    pub amplitude: AmplitudeConfig,
    pub simulate: SimulateConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            dynamics: Dynamics {
                nu: 0.0,
                sigma: 0.1,
                eta: 1.0,
                delta: 1.0,
                lambda: 2.5,
            },
            grid: Grids {
                dt: 0.005,
                t_end: 3.0,
                tail: 25.0,
                lp_step: 0.01,
                lp_window: 20.0,
                lp_tol: 1e-12,
                lp_max_iter: 200,
            },
            monte_carlo: MonteCarlo {
                n_paths: 200,
                master_seed: 20_240_601,
            },
            shape: ShapeConfig {
                sigmas: vec![0.04, 0.01, 0.0025],
                nu_ratio: 0.5,
                xi_points: 6,
                xi_min_ratio: 0.1,
                headroom: 1.0,
                min_fraction: 0.99,
                deterministic_sigma: 1e-6,
                deterministic_amplitudes: [0.005, 0.05],
                deterministic_points: 8,
                slope_tolerance: 0.3,
                r_sweep: vec![0.05, 0.1, 0.2],
                chain_paths: 20,
                chain_sigma: 0.04,
            },
            attraction: AttractionConfig {
                sample_every: 0.25,
                init_c: 0.4,
                init_s: 0.4,
                on_manifold: false,
                min_bound_fraction: 0.95,
                min_rate_fraction: 0.9,
                rate_factor: 0.5,
            },
            cone: ConeConfig {
                tol: 1e-8,
                spread: 0.3,
            },
            ktail: KtailConfig { max_ks: 0.05 },
            amplitude: AmplitudeConfig {
                epsilons: vec![0.2, 0.1],
                nu0: 1.0,
                a0: 1.0,
                tol_factor: 2.0,
                min_fraction: 0.9,
            },
            simulate: SimulateConfig {
                u0: vec![0.02, 0.0, 0.005],
                cutoff: true,
                reduced: true,
                amplitude: false,
                path_index: 0,
            },
        }
    }
}

impl ExperimentConfig {
    /// Desk-scale defaults for `exp`.
    pub fn preset(exp: Experiment) -> Self {
        let mut c = Self::default();
        match exp {
            Experiment::Shape => {
                c.model = ModelConfig {
                    n_total: 6,
                    alpha: 0.5,
                    r_cut: 0.2,
                    ..ModelConfig::default()
                };
                c.dynamics.eta = 1.2;
                c.dynamics.lambda = 2.1;
                c.grid.dt = 0.01;
                c.grid.t_end = 0.0;
                c.grid.tail = 30.0;
                c.grid.lp_window = 30.0;
            }
            Experiment::Attract | Experiment::Cone => c.monte_carlo.n_paths = 100,
            Experiment::Ktail => {
                c.monte_carlo.n_paths = 2000;
                c.grid.dt = 0.01;
                c.grid.t_end = 0.0;
                c.grid.tail = 50.0;
            }
            Experiment::Amplitude => {
                c.monte_carlo.n_paths = 50;
                c.grid.tail = 10.0;
            }
            Experiment::Simulate => c.monte_carlo.n_paths = 1,
        }
        c
    }

    /// Preset for `exp` overridden by the TOML document `text`.
    pub fn load(exp: Experiment, text: &str) -> Result<Self> {
        let cfg = Self::merged(exp, text)?;
        cfg.validate(exp)?;
        Ok(cfg)
    }

    /// Like [`load`](Self::load) without the per-experiment hypotheses.
    pub fn merged(exp: Experiment, text: &str) -> Result<Self> {
        let user: toml::Table = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        let mut base = toml::Table::try_from(Self::preset(exp))
            .map_err(|e| Error::config(e.to_string()))?;
        merge(&mut base, user);
        base.try_into().map_err(|e: toml::de::Error| Error::config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn model(&self) -> Result<SpectralModel> {
        self.model.build()
    }

    pub fn lp_params(&self, nu: f64) -> LpParams {
        LpParams {
            nu,
            eta: self.dynamics.eta,
            lambda: self.dynamics.lambda,
            window: self.grid.lp_window,
            step: self.grid.lp_step,
            tol: self.grid.lp_tol,
            max_iter: self.grid.lp_max_iter,
        }
    }

    pub fn conditions(&self) -> Result<ConditionReport> {
        let d = &self.dynamics;
        check_conditions(&self.model()?, d.nu, d.eta, d.delta, d.lambda)
    }

    /// Noise path `index` on `[-tail, t_end]` with stationary OU start.
    pub fn path(&self, index: u64, sigma: f64) -> Result<NoisePath> {
        let g = &self.grid;
        let grid = TimeGrid::two_sided(g.tail, g.t_end, g.dt)?;
        let bm = sample_brownian(&grid, PathSeed::new(self.monte_carlo.master_seed, index))?;
        derive_ou(bm, sigma, OuInit::Stationary)
    }

    /// Hypotheses each experiment needs before it runs.
    pub fn validate(&self, exp: Experiment) -> Result<()> {
        let d = &self.dynamics;
        let g = &self.grid;
        let positive = [("dt", g.dt), ("lp_step", g.lp_step), ("lp_window", g.lp_window), ("lp_tol", g.lp_tol)];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::config(format!("grid.{name} must be positive, got {v}")));
            }
        }
        if !(g.tail >= 0.0 && g.t_end >= 0.0) {
            return Err(Error::config("grid.tail and grid.t_end must be non-negative"));
        }
        if !(d.sigma >= 0.0) {
            return Err(Error::config("dynamics.sigma must be non-negative"));
        }
        if self.monte_carlo.n_paths == 0 {
            return Err(Error::config("monte_carlo.n_paths must be positive"));
        }
        let needs_lp = matches!(exp, Experiment::Shape | Experiment::Attract)
            || (exp == Experiment::Simulate && self.simulate.reduced);
        if needs_lp && g.lp_window > g.tail {
            return Err(Error::config(format!(
                "grid.lp_window {} exceeds the stored history grid.tail {}",
                g.lp_window, g.tail
            )));
        }
        let model = self.model()?;
        match exp {
            Experiment::Shape => {
                let s = &self.shape;
                if s.sigmas.is_empty() || s.sigmas.iter().any(|&x| !(x > 0.0)) {
                    return Err(Error::config("shape.sigmas must be positive"));
                }
                if !(s.nu_ratio.abs() < 1.0) {
                    return Err(Error::config("shape needs |ν| < σ, i.e. |nu_ratio| < 1"));
                }
                if model.r_cut() > 1.0 {
                    return Err(Error::config("shape needs R <= 1"));
                }
                if !(s.xi_min_ratio > 0.0 && s.xi_min_ratio < 1.0) || s.xi_points == 0 {
                    return Err(Error::config("shape.xi_min_ratio must lie in (0, 1)"));
                }
                if !(s.headroom >= 1.0) {
                    return Err(Error::config("shape.headroom must be >= 1"));
                }
                let [lo, hi] = s.deterministic_amplitudes;
                if !(lo > 0.0 && hi > lo) || s.deterministic_points < 2 {
                    return Err(Error::config("shape.deterministic_amplitudes must satisfy 0 < lo < hi"));
                }
                if s.r_sweep.len() < 2 || s.r_sweep.iter().any(|&r| !(r > 0.0)) {
                    return Err(Error::config("shape.r_sweep needs at least two positive radii"));
                }
                for &sigma in &s.sigmas {
                    self.require_conditions(&model, s.nu_ratio * sigma, true)?;
                }
                for &r in &s.r_sweep {
                    self.require_conditions(&model.with_r_cut(r), 0.0, true)?;
                }
            }
            Experiment::Attract => {
                if !(model.lambda_star() > 4.0 * d.nu) {
                    return Err(Error::config("attraction needs λ* > 4ν"));
                }
                let a = &self.attraction;
                if !(a.sample_every > 0.0) || !(a.init_c >= 0.0 && a.init_s >= 0.0) {
                    return Err(Error::config("attraction sampling and initial sizes must be positive"));
                }
                if a.init_c.hypot(a.init_s) >= 1.0 {
                    return Err(Error::config("attraction initial data must lie inside the ball of radius R"));
                }
                self.require_all_conditions(&model)?;
            }
            Experiment::Cone => {
                if !(self.cone.tol >= 0.0 && self.cone.spread > 0.0) {
                    return Err(Error::config("cone.tol must be >= 0 and cone.spread > 0"));
                }
                self.require_all_conditions(&model)?;
            }
            Experiment::Ktail => {
                if !(d.sigma > 0.0) {
                    return Err(Error::config("ktail needs σ > 0"));
                }
            }
            Experiment::Amplitude => {
                let a = &self.amplitude;
                if a.epsilons.is_empty() || a.epsilons.iter().any(|&e| !(e > 0.0 && e <= 0.2)) {
                    return Err(Error::config("amplitude.epsilons must lie in (0, 0.2]"));
                }
            }
            Experiment::Simulate => {
                if self.simulate.u0.len() > model.n_total() {
                    return Err(Error::config("simulate.u0 has more entries than modes"));
                }
                if self.simulate.reduced {
                    self.require_conditions(&model, d.nu, true)?;
                }
            }
        }
        Ok(())
    }

    fn require_conditions(&self, model: &SpectralModel, nu: f64, only_first: bool) -> Result<()> {
        let d = &self.dynamics;
        let r = check_conditions(model, nu, d.eta, d.delta, d.lambda)?;
        let ok = if only_first { r.condition1 } else { r.all() };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!(
                "parameter conditions fail at R = {}: contraction bound {}, margins {} / {}",
                model.r_cut(),
                r.contraction_bound,
                r.margin2,
                r.margin3
            )))
        }
    }

    fn require_all_conditions(&self, model: &SpectralModel) -> Result<()> {
        self.require_conditions(model, self.dynamics.nu, false)
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
