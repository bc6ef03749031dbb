use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use stochman::experiments::{self, contraction_study, write_run, Experiment, ExperimentConfig, RunManifest};
use stochman::format::num;
use stochman::Error;

const EXIT_FAIL: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "stochman", version, about = "Random invariant manifold experiments for Galerkin SPDEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Suppress progress and summary output.
    #[arg(long, short, global = true)]
    quiet: bool,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Check the parameter conditions of a configuration.
    Conditions {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also measure the Picard contraction factor on this many paths.
        #[arg(long, value_name = "PATHS", num_args = 0..=1, default_missing_value = "3")]
        measure: Option<usize>,
    },
    /// Run an experiment and write a run directory.
    Run {
        /// One of shape, attract, cone, ktail, amplitude, simulate.
        experiment: String,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Full, reduced and amplitude trajectories for one path.
    Simulate {
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Re-run from a manifest.json.
    Rerun {
        manifest: PathBuf,
        #[arg(long, env = "STOCHMAN_OUT", default_value = "runs")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunOpts {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for run folders.
    #[arg(long, env = "STOCHMAN_OUT", default_value = "runs")]
    out: PathBuf,
    /// Override monte_carlo.master_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override monte_carlo.n_paths.
    #[arg(long)]
    paths: Option<usize>,
}

enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Format(_) => Failure::Config(e.into()),
            _ => Failure::Runtime(e.into()),
        }
    }
}

fn read_config(path: Option<&Path>) -> Result<String, Failure> {
    match path {
        None => Ok(String::new()),
        Some(p) => fs::read_to_string(p)
            .with_context(|| format!("reading {}", p.display()))
            .map_err(Failure::Config),
    }
}

fn conditions(path: Option<&Path>, measure: Option<usize>, quiet: bool) -> Result<bool, Failure> {
    let text = read_config(path)?;
    let cfg = ExperimentConfig::merged(Experiment::Attract, &text)?;
    let r = cfg.conditions()?;
    if !quiet {
        let d = &cfg.dynamics;
        println!(
            "model: n_total = {}, alpha = {}, R = {}",
            cfg.model.n_total,
            num(cfg.model.alpha),
            num(cfg.model.r_cut)
        );
        println!(
            "nu = {}, eta = {}, delta = {}, lambda = {}",
            num(d.nu),
            num(d.eta),
            num(d.delta),
            num(d.lambda)
        );
        println!("C_B = {}, L_R = {}", num(r.c_b), num(r.l_r));
        println!(
            "condition 1 (contraction): bound {} < 1, margin {}: {}",
            num(r.contraction_bound),
            num(r.margin1),
            verdict(r.condition1)
        );
        println!(
            "condition 2 (cone):        lambda* >= {}, margin {}: {}",
            num(r.condition2_rhs),
            num(r.margin2),
            verdict(r.condition2)
        );
        println!(
            "condition 3 (cone decay):  lambda* > {}, margin {}: {}",
            num(r.condition3_rhs),
            num(r.margin3),
            verdict(r.condition3)
        );
    }
    let mut ok = r.all();
    if let Some(n) = measure {
        if r.condition1 && cfg.model.r_cut > 0.0 {
            let study = contraction_study(&cfg, n.max(1))?;
            if !quiet {
                for p in &study.paths {
                    println!(
                        "path {}: measured factor {}, bound {}, max Picard ratio {}, fitted ratio {}",
                        p.path,
                        num(p.measured),
                        num(p.bound),
                        num(p.max_step_ratio),
                        num(p.geometric_ratio)
                    );
                }
            }
            ok &= study.passed();
        }
    }
    Ok(ok)
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "VIOLATED"
    }
}

fn execute(exp: Experiment, cfg: &ExperimentConfig, out: &Path, threads: usize, quiet: bool) -> Result<bool, Failure> {
    let started = chrono::Utc::now();
    let report = experiments::run(exp, cfg)?;
    let dir = write_run(&report, out, started, threads)?;
    if !quiet {
        for c in &report.checks {
            println!("{:<44} {:>24} {}", c.name, num(c.value), verdict(c.pass));
        }
        println!(
            "in-hypothesis rows: {}, out-of-hypothesis: {}",
            report.in_hypothesis, report.out_of_hypothesis
        );
        println!("wrote {}", dir.display());
    }
    Ok(report.passed())
}

fn run(exp: Experiment, opts: &RunOpts, threads: usize, quiet: bool) -> Result<bool, Failure> {
    let text = read_config(opts.config.as_deref())?;
    let mut cfg = ExperimentConfig::merged(exp, &text)?;
    if let Some(s) = opts.seed {
        cfg.monte_carlo.master_seed = s;
    }
    if let Some(p) = opts.paths {
        cfg.monte_carlo.n_paths = p;
    }
    execute(exp, &cfg, &opts.out, threads, quiet)
}

fn dispatch(cli: &Cli, threads: usize) -> Result<bool, Failure> {
    match &cli.command {
        Command::Conditions { config, measure } => conditions(config.as_deref(), *measure, cli.quiet),
        Command::Run { experiment, opts } => {
            let exp: Experiment = experiment.parse()?;
            run(exp, opts, threads, cli.quiet)
        }
        Command::Simulate { opts } => run(Experiment::Simulate, opts, threads, cli.quiet),
        Command::Rerun { manifest, out } => {
            let m = RunManifest::load(manifest).map_err(|e| match Failure::from(e) {
                Failure::Config(e) => Failure::Config(e.context(format!("manifest {}", manifest.display()))),
                Failure::Runtime(e) => Failure::Runtime(e.context(format!("manifest {}", manifest.display()))),
            })?;
            let cfg = m.config()?;
            execute(m.experiment, &cfg, out, threads, cli.quiet)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli
        .threads
        .or_else(|| std::thread::available_parallelism().ok().map(usize::from))
        .unwrap_or(1)
        .max(1);
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_RUNTIME);
    }
    match dispatch(&cli, threads) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_FAIL),
        Err(Failure::Config(e)) => {
            eprintln!("configuration error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
