//! Monte-Carlo experiments, their configuration and the run artifacts they
//! write.

mod amplitude;
mod attraction;
mod cone;
mod config;
mod contraction;
mod ktail;
mod report;
mod shape;
mod simulate;
pub mod stats;

use std::time::Instant;

pub use amplitude::{run_amplitude, AmplitudeRow};
pub use attraction::{run_attraction, AttractionPath, AttractionSample};
pub use cone::{run_cone, ConePair, PairKind};
pub use config::{
    AmplitudeConfig, AttractionConfig, ConeConfig, Dynamics, Experiment, ExperimentConfig, Grids,
    KtailConfig, MonteCarlo, ShapeConfig, SimulateConfig,
};
pub use contraction::{contraction_study, ContractionPath, ContractionStudy};
pub use ktail::{run_ktail, KtailRow};
pub use report::{
    config_hash, write_run, Cell, Check, ExperimentReport, RunManifest, Table, SCHEMA_VERSION,
};
pub use shape::{
    chain_scaling, deterministic_slope, run_shape, xi_grid, ChainStudy, ShapeRow, SlopeStudy, SweepPoint,
};
pub use simulate::run_simulate;

use crate::error::Result;

/// Validates `cfg` for `exp` and runs it.
pub fn run(exp: Experiment, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate(exp)?;
    let start = Instant::now();
    let mut report = match exp {
        Experiment::Shape => run_shape(cfg),
        Experiment::Attract => run_attraction(cfg),
        Experiment::Cone => run_cone(cfg),
        Experiment::Ktail => run_ktail(cfg),
        Experiment::Amplitude => run_amplitude(cfg),
        Experiment::Simulate => run_simulate(cfg),
    }?;
    report.wall_clock_s = start.elapsed().as_secs_f64();
    Ok(report)
}
