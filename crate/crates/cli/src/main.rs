//! Experiment harness: dispatches configured runs to the library and
//! persists CSV results with a reproducibility manifest.

mod config;
mod output;

use std::io::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand};
use rw_markov::{Verdict, DEFAULT_ENUMERATION_CAP};

use config::{initial_law, parse_config, require, CliError, ExperimentConfig, InitialLawSpec};

#[derive(Parser)]
#[command(name = "rwm", version, about = "Markov-switched affine network dynamics harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the forward process and write the trajectory.
    Simulate(RunArgs),
    /// Evaluate the backward compositions along a reversed-chain path.
    Backward(RunArgs),
    /// Certify the expected-log-norm stability condition.
    Stability(RunArgs),
    /// Estimate the top Lyapunov exponent of the matrix products.
    Lyapunov(RunArgs),
    /// Single-trajectory time average against the stationary-mean oracle.
    Ergodic(RunArgs),
    /// Empirical state distribution at a fixed time across trajectories.
    Distribution(RunArgs),
    /// Convergence-in-distribution experiment across initial mode laws.
    Prop1(RunArgs),
    /// Compare two CSV reports field by field.
    Compare {
        report_a: PathBuf,
        report_b: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        tolerance: f64,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    /// Path to the JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: current directory).
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Compare { report_a, report_b, tolerance } => {
            output::compare_reports(&report_a, &report_b, tolerance)
        }
        Command::Simulate(a) => run(a, "simulate", run_simulate),
        Command::Backward(a) => run(a, "backward", run_backward),
        Command::Stability(a) => run(a, "stability", run_stability),
        Command::Lyapunov(a) => run(a, "lyapunov", run_lyapunov),
        Command::Ergodic(a) => run(a, "ergodic", run_ergodic),
        Command::Distribution(a) => run(a, "distribution", run_distribution),
        Command::Prop1(a) => run(a, "prop1", run_prop1),
    };
    if let Err(e) = result {
        eprintln!("rwm: {e}");
        std::process::exit(e.exit_code());
    }
}

type FileSet = Vec<(&'static str, Vec<u8>)>;

fn run(
    args: RunArgs,
    name: &str,
    body: fn(&ExperimentConfig) -> Result<FileSet, CliError>,
) -> Result<(), CliError> {
    let started = Instant::now();
    let text = std::fs::read_to_string(&args.config)?;
    let mut cfg = parse_config(&text)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let files = body(&cfg)?;
    let written = output::write_outputs(&args.out, &files, &cfg, started)?;
    eprintln!(
        "rwm {name}: wrote {}",
        written
            .iter()
            .map(|p| p.display().to_string())
            .collect::<Vec<_>>()
            .join(", ")
    );
    Ok(())
}

fn run_simulate(cfg: &ExperimentConfig) -> Result<FileSet, CliError> {
    let sys = cfg.model.build()?;
    let horizon = require(cfg.horizon, "horizon")?;
    let init = initial_law(cfg, sys.n_agents())?;
    let t = rw_markov::forward_trajectory(&sys, &init, horizon, cfg.seed)?;
    let mut csv = Vec::new();
    t.to_csv(&mut csv)?;
    Ok(vec![("trajectory.csv", csv)])
}

fn run_backward(cfg: &ExperimentConfig) -> Result<FileSet, CliError> {
    let sys = cfg.model.build()?;
    let horizon = require(cfg.horizon, "horizon")?;
    let x0 = match &cfg.init {
        Some(InitialLawSpec::Point { coords }) if coords.len() == sys.n_agents() => {
            nalgebra::DVector::from_row_slice(coords)
        }
        Some(_) => {
            return Err(CliError::Config(
                "backward requires a point initial law of matching dimension".into(),
            ))
        }
        None => nalgebra::DVector::zeros(sys.n_agents()),
    };
    let t = rw_markov::backward_trajectory_sampled(&sys, &x0, horizon, cfg.seed)?;
    let mut csv = Vec::new();
    t.to_csv(&mut csv)?;
    Ok(vec![("trajectory.csv", csv)])
}

fn stability_row(report: &rw_markov::StabilityReport) -> Vec<u8> {
    let mut csv = Vec::new();
    writeln!(csv, "k,norm,method,value,std_error,verdict").unwrap();
    writeln!(
        csv,
        "{},{},{},{:.16e},{:.16e},{}",
        report.k, report.norm, report.method, report.value, report.std_error, report.verdict
    )
    .unwrap();
    csv
}

fn run_stability(cfg: &ExperimentConfig) -> Result<FileSet, CliError> {
    let sys = cfg.model.build()?;
    let n_samples = cfg.n_samples.unwrap_or(100_000);
    let report = if let Some(k) = cfg.k {
        if k == 0 {
            return Err(CliError::Config("k must be positive".into()));
        }
        let count = (sys.n_modes() as u128).checked_pow(k as u32).unwrap_or(u128::MAX);
        if count <= DEFAULT_ENUMERATION_CAP {
            rw_markov::log_norm_expectation_exact(&sys, k, cfg.norm, DEFAULT_ENUMERATION_CAP)?
        } else {
            rw_markov::log_norm_expectation_mc(&sys, k, n_samples, cfg.seed, cfg.norm)?
        }
    } else {
        let k_max = require(cfg.k_max, "k_max (or k)")?;
        match rw_markov::first_negative_k(
            &sys,
            k_max,
            cfg.norm,
            DEFAULT_ENUMERATION_CAP,
            n_samples,
            cfg.seed,
        )? {
            Some(r) => r,
            None => {
                // No certificate up to k_max: report the k_max evaluation,
                // which is inconclusive by construction.
                let count =
                    (sys.n_modes() as u128).checked_pow(k_max as u32).unwrap_or(u128::MAX);
                if count <= DEFAULT_ENUMERATION_CAP {
                    rw_markov::log_norm_expectation_exact(
                        &sys,
                        k_max,
                        cfg.norm,
                        DEFAULT_ENUMERATION_CAP,
                    )?
                } else {
                    rw_markov::log_norm_expectation_mc(
                        &sys,
                        k_max,
                        n_samples,
                        cfg.seed.wrapping_add(k_max as u64),
                        cfg.norm,
                    )?
                }
            }
        }
    };
    if report.verdict == Verdict::Inconclusive {
        eprintln!("rwm stability: no certificate found (inconclusive, not a proof of instability)");
    }
    Ok(vec![("stability.csv", stability_row(&report))])
}

fn run_lyapunov(cfg: &ExperimentConfig) -> Result<FileSet, CliError> {
    let sys = cfg.model.build()?;
    let n_steps = require(cfg.n_steps, "n_steps")?;
    let estimate = rw_markov::lyapunov_exponent(&sys, n_steps, cfg.seed, cfg.norm)?;
    let mut csv = Vec::new();
    writeln!(csv, "n_steps,norm,estimate").unwrap();
    writeln!(csv, "{},{},{:.16e}", n_steps, cfg.norm, estimate).unwrap();
    Ok(vec![("lyapunov.csv", csv)])
}

fn run_ergodic(cfg: &ExperimentConfig) -> Result<FileSet, CliError> {
    let sys = cfg.model.build()?;
    let n_steps = require(cfg.n_steps, "n_steps")?;
    let init = initial_law(cfg, sys.n_agents())?;
    let r = rw_markov::ergodic_average(&sys, &init, n_steps, cfg.seed, cfg.norm)?;
    let mut csv = Vec::new();
    writeln!(csv, "n_steps,coord,avg,oracle,deviation").unwrap();
    for (coord, (avg, oracle)) in r.running_average.iter().zip(&r.oracle_mean).enumerate() {
        writeln!(
            csv,
            "{},{},{:.16e},{:.16e},{:.16e}",
            r.n_steps,
            coord,
            avg,
            oracle,
            (avg - oracle).abs()
        )
        .unwrap();
    }
    Ok(vec![("ergodic.csv", csv)])
}

fn run_distribution(cfg: &ExperimentConfig) -> Result<FileSet, CliError> {
    let sys = cfg.model.build()?;
    let horizon = require(cfg.horizon, "horizon")?;
    let n_traj = require(cfg.n_traj, "n_traj")?;
    let init = initial_law(cfg, sys.n_agents())?;
    let finals = rw_markov::batch_final_states(&sys, &init, horizon, n_traj, cfg.seed)?;
    let mut csv = Vec::new();
    write!(csv, "traj").unwrap();
    for i in 1..=sys.n_agents() {
        write!(csv, ",x_{i}").unwrap();
    }
    writeln!(csv).unwrap();
    for (j, x) in finals.iter().enumerate() {
        write!(csv, "{j}").unwrap();
        for v in x.iter() {
            write!(csv, ",{v:.16e}").unwrap();
        }
        writeln!(csv).unwrap();
    }
    Ok(vec![("distribution.csv", csv)])
}

fn run_prop1(cfg: &ExperimentConfig) -> Result<FileSet, CliError> {
    let sys = cfg.model.build()?;
    let n_traj = require(cfg.n_traj, "n_traj")?;
    let snapshots = cfg
        .snapshots
        .clone()
        .ok_or_else(|| CliError::Config("missing required field snapshots".into()))?;
    let dists = cfg
        .init_dists
        .clone()
        .ok_or_else(|| CliError::Config("missing required field init_dists".into()))?;
    if dists.len() < 2 {
        return Err(CliError::Config("init_dists needs at least two entries".into()));
    }
    let dists = dists
        .iter()
        .map(|w| rw_markov::Distribution64::from_weights(w))
        .collect::<Result<Vec<_>, _>>()?;
    let init = initial_law(cfg, sys.n_agents())?;
    let r = rw_markov::proposition1_experiment(&sys, &init, &dists, &snapshots, n_traj, cfg.seed)?;
    for w in &r.warnings {
        eprintln!("rwm prop1: warning: {w}");
    }
    let mut csv = Vec::new();
    writeln!(csv, "snapshot_k,dist_a,dist_b,ks_distance").unwrap();
    for pair in &r.pairs {
        for (s, d) in pair.by_snapshot.iter().enumerate() {
            writeln!(csv, "{},{},{},{:.16e}", r.snapshots[s], pair.dist_a, pair.dist_b, d)
                .unwrap();
        }
    }
    Ok(vec![("prop1.csv", csv)])
}
