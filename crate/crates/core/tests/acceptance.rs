//! Acceptance suite: one line per criterion, non-zero exit if any fails.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use stochman::experiments::{
    contraction_study, deterministic_slope, run, write_run, Experiment, ExperimentConfig, ExperimentReport,
    RunManifest,
};
use stochman::integrate::reduced_drift;
use stochman::manifold::LpOperator;
use stochman::model::SpectralModel;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn check(report: &ExperimentReport, names: &[&str]) -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for name in names {
        match report.check(name) {
            Some(c) => {
                ok &= c.pass;
                parts.push(format!("{} = {:.4} ({} {})", c.name, c.value, c.relation, c.threshold));
            }
            None => {
                ok = false;
                parts.push(format!("{name} missing"));
            }
        }
    }
    parts.push(format!("run {:.1}s", report.wall_clock_s));
    (ok, parts.join(", "))
}

fn energy_identity() -> Outcome {
    let m = SpectralModel::burgers(16, 0.75, 0.05).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let mut worst = 0.0_f64;
    for _ in 0..1000 {
        let scale = 10f64.powf(rng.random_range(-3.0..2.0));
        let u: Vec<f64> = (0..16).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
        let b = m.apply_b(&u, &u).unwrap();
        worst = worst.max(m.inner(&b, &u).abs() / m.norm(&u).powi(3));
    }
    outcome(worst < 1e-12, format!("max |<B(u),u>|/|u|^3 = {worst:.3e} over 1000 draws"))
}

// (2/π) ∫₀^π u u_x sin(kx) dx by the midpoint rule
fn b_by_quadrature(u: &[f64], k: usize) -> f64 {
    let n = 20_000;
    let h = PI / n as f64;
    (0..n)
        .map(|i| {
            let x = (i as f64 + 0.5) * h;
            let (mut v, mut vx) = (0.0, 0.0);
            for (j, c) in u.iter().enumerate() {
                let f = (j + 1) as f64;
                v += c * (f * x).sin();
                vx += c * f * (f * x).cos();
            }
            v * vx * (k as f64 * x).sin() * h
        })
        .sum::<f64>()
        * 2.0
        / PI
}

fn quadratic_oracle() -> Outcome {
    let m = SpectralModel::burgers(16, 0.75, 0.05).unwrap();
    let mut exact_err = 0.0_f64;
    for a in [1e-3, 0.05, 0.7, 3.0] {
        let mut xi = m.zeros();
        xi[0] = a;
        let h = m.ls_inverse_bs(&xi).unwrap();
        exact_err = exact_err.max((h[1] - a * a / 6.0).abs() / (a * a / 6.0));
        exact_err = exact_err.max(h.iter().enumerate().filter(|&(k, _)| k != 1).map(|(_, x)| x.abs()).fold(0.0, f64::max));
    }
    let mut quad_err = 0.0_f64;
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    for n in 3..=6 {
        let small = SpectralModel::burgers(n, 0.5, 0.2).unwrap();
        let mut xi = small.zeros();
        xi[0] = 0.4;
        let h = small.ls_inverse_bs(&xi).unwrap();
        for k in 2..=n {
            let q = b_by_quadrature(&xi, k) / small.lambda()[k - 1];
            quad_err = quad_err.max((h[k - 1] - q).abs());
        }
        let u: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let b = small.apply_b(&u, &u).unwrap();
        for k in 1..=n {
            quad_err = quad_err.max((b[k - 1] - b_by_quadrature(&u, k)).abs());
        }
    }
    outcome(
        exact_err <= 4.0 * f64::EPSILON && quad_err < 1e-8,
        format!("closed form rel err {exact_err:.1e}, quadrature oracle err {quad_err:.1e} (n <= 6)"),
    )
}

fn deterministic_limit() -> Outcome {
    let cfg = ExperimentConfig::preset(Experiment::Shape);
    let s = deterministic_slope(&cfg).unwrap();
    outcome(
        (s.slope - 3.0).abs() <= 0.3,
        format!("log-log slope {:.4} over a in [{}, {}]", s.slope, s.amplitudes[0], s.amplitudes[s.amplitudes.len() - 1]),
    )
}

fn cubic_coefficient() -> Outcome {
    let mut cfg = ExperimentConfig::preset(Experiment::Shape);
    cfg.dynamics.nu = 0.0;
    let model = cfg.model().unwrap();
    let path = cfg.path(0, 0.0).unwrap();
    let op = LpOperator::new(&model, &path, cfg.lp_params(0.0)).unwrap();
    let a = 0.05;
    let mut xi = model.zeros();
    xi[0] = a;
    let drift = reduced_drift(&op, &xi).unwrap()[0];
    let expect = -a * a * a / 12.0;
    let rel = (drift - expect).abs() / expect.abs();
    outcome(rel < 0.05, format!("drift {drift:.6e} vs -a^3/12 = {expect:.6e}, rel err {rel:.2e}"))
}

fn contraction() -> Outcome {
    let cfg = ExperimentConfig::preset(Experiment::Attract);
    let study = contraction_study(&cfg, 5).unwrap();
    let ratio = study.paths.iter().map(|p| p.max_step_ratio / p.measured).fold(0.0, f64::max);
    outcome(
        study.passed(),
        format!(
            "measured factor {:.4} <= bound {:.4}; max Picard ratio / measured = {ratio:.3} (<= 1.05)",
            study.measured(),
            study.bound
        ),
    )
}

fn shape_bound(r: &ExperimentReport) -> Outcome {
    let (ok, d) = check(r, &["bound_holds_fraction", "violation_nonincreasing_in_sweep"]);
    outcome(ok, d)
}

fn chain_scaling(r: &ExperimentReport) -> Outcome {
    let (ok, d) = check(r, &["chain_vs_slope_offset", "chain_vs_g1_slope_offset"]);
    outcome(ok, d)
}

fn attraction(r: &ExperimentReport) -> Outcome {
    let (ok, d) = check(r, &["pathwise_bound_fraction", "decay_rate_fraction"]);
    outcome(ok, format!("{d}, flagged {}", r.out_of_hypothesis))
}

fn cone(r: &ExperimentReport) -> Outcome {
    let (ok, d) = check(r, &["reexit_events", "decay_violations"]);
    outcome(ok, d)
}

fn ktail(r: &ExperimentReport) -> Outcome {
    let (ok, d) = check(r, &["ks_statistic", "z0_bound_fraction", "k2_bound_fraction"]);
    outcome(ok && r.config.monte_carlo.n_paths == 2000, d)
}

fn amplitude(r: &ExperimentReport) -> Outcome {
    let (ok, d) = check(
        r,
        &["fraction_within[0.2]", "fraction_within[0.1]", "median_error_decreases_with_epsilon"],
    );
    outcome(ok, d)
}

fn csv_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect()
}

fn determinism(reports: &[ExperimentReport]) -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut failed = Vec::new();
    for r in reports {
        let first = write_run(r, &tmp.path().join("a"), chrono::Utc::now(), 1).unwrap();
        let manifest = RunManifest::load(&first.join("manifest.json")).unwrap();
        let again = run(manifest.experiment, &manifest.config().unwrap()).unwrap();
        let second = write_run(&again, &tmp.path().join("b"), chrono::Utc::now(), 1).unwrap();
        let (x, y) = (csv_files(&first), csv_files(&second));
        if x.is_empty() || x != y {
            failed.push(r.experiment.name());
        }
    }
    outcome(
        failed.is_empty(),
        format!("{} experiments rerun from manifest; differing: {failed:?}", reports.len()),
    )
}

fn main() -> ExitCode {
    let mut all = true;
    let mut report = |n: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = f();
        all &= o.pass;
        println!(
            "criterion {n:>2} {} {name}: {} [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed().as_secs_f64()
        );
    };
    let runs: Vec<ExperimentReport> = Experiment::ALL
        .iter()
        .map(|&e| run(e, &ExperimentConfig::preset(e)).unwrap())
        .collect();
    let by = |e: Experiment| runs.iter().find(|r| r.experiment == e).unwrap();

    report(1, "energy identity", &mut energy_identity);
    report(2, "quadratic prediction oracle", &mut quadratic_oracle);
    report(3, "deterministic center-manifold limit", &mut deterministic_limit);
    report(4, "cubic coefficient", &mut cubic_coefficient);
    report(5, "contraction", &mut contraction);
    report(6, "shape bound", &mut || shape_bound(by(Experiment::Shape)));
    report(7, "g-chain scaling", &mut || chain_scaling(by(Experiment::Shape)));
    report(8, "attraction", &mut || attraction(by(Experiment::Attract)));
    report(9, "cone invariance", &mut || cone(by(Experiment::Cone)));
    report(10, "K-distribution", &mut || ktail(by(Experiment::Ktail)));
    report(11, "amplitude approximation", &mut || amplitude(by(Experiment::Amplitude)));
    report(12, "determinism", &mut || determinism(&runs));
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
