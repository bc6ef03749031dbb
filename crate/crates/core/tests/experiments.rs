use stochman::experiments::{run, Experiment, ExperimentConfig, ExperimentReport};

fn small(exp: Experiment, extra: &str) -> ExperimentConfig {
    let paths = match exp {
        Experiment::Simulate => 1,
        Experiment::Ktail => 40,
        _ => 6,
    };
    ExperimentConfig::load(exp, &format!("[monte_carlo]\nn_paths = {paths}\n{extra}")).unwrap()
}

fn in_pool(threads: usize, exp: Experiment, cfg: &ExperimentConfig) -> ExperimentReport {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(|| run(exp, cfg).unwrap())
}

#[test]
fn serial_and_parallel_runs_agree() {
    for exp in [Experiment::Attract, Experiment::Cone, Experiment::Ktail, Experiment::Amplitude] {
        let cfg = small(exp, "");
        let a = in_pool(1, exp, &cfg);
        let b = in_pool(3, exp, &cfg);
        assert_eq!(a.tables, b.tables, "{exp}");
        assert_eq!(a.aggregates, b.aggregates, "{exp}");
    }
}

#[test]
fn zero_amplitude_is_exact() {
    let cfg = small(Experiment::Amplitude, "[amplitude]\na0 = 0.0\n");
    let r = run(Experiment::Amplitude, &cfg).unwrap();
    let t = r.table("rows").unwrap();
    assert!(t.floats("sup_error").iter().all(|&e| e == 0.0));
}

#[test]
fn trivial_cone_pairs_stay_inside() {
    let r = run(Experiment::Cone, &small(Experiment::Cone, "")).unwrap();
    let t = r.table("rows").unwrap();
    let kind = t.column_index("kind").unwrap();
    let inside = t.column_index("initially_inside").unwrap();
    for row in &t.rows {
        let k = format!("{:?}", row[kind]);
        if k.contains("identical") || k.contains("kernel_only") {
            assert_eq!(row[inside].as_bool(), Some(true));
        }
    }
    assert_eq!(r.aggregate("reexit_events"), Some(0.0));
}

#[test]
fn on_manifold_data_stay_on_the_manifold() {
    let cfg = small(Experiment::Attract, "[attraction]\non_manifold = true\n");
    let r = run(Experiment::Attract, &cfg).unwrap();
    assert!(r.passed(), "{:?}", r.checks);
    assert!(r.aggregate("max_distance").unwrap() < 1e-6 * cfg.model.r_cut);
}

#[test]
fn shape_summary_reports_probability() {
    let cfg = small(Experiment::Shape, "[shape]\nchain_paths = 2\n");
    let r = run(Experiment::Shape, &cfg).unwrap();
    let p = r.aggregate("empirical_probability").unwrap();
    assert!((0.0..=1.0).contains(&p));
    assert!(r.table("rows").is_some() && r.table("deterministic").is_some());
}

#[test]
fn cutoff_is_inactive_inside_the_ball() {
    let on = small(Experiment::Simulate, "[simulate]\nreduced = false\n");
    let off = small(Experiment::Simulate, "[simulate]\nreduced = false\ncutoff = false\n");
    let a = run(Experiment::Simulate, &on).unwrap();
    let b = run(Experiment::Simulate, &off).unwrap();
    assert!(a.aggregate("max_norm").unwrap() < on.model.r_cut);
    assert_eq!(a.table("full"), b.table("full"));
}
