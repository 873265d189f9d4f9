use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use pca_wald::inference;
use pca_wald::mc::{self, ExperimentConfig, Mode};

/// Monte Carlo harness for Wald statistics of spectral projectors.
#[derive(Parser)]
#[command(name = "pca-wald", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replicate the Wald statistic (modes ks_gaussian, ks_chisq, coverage).
    Simulate(RunArgs),
    /// Estimate E[raw] - df over a grid of n and/or p.
    BiasSweep(RunArgs),
    /// Check the deterministic perturbation bounds on random perturbations.
    PerturbCheck(RunArgs),
    /// Compare E‖Σ̂ - Σ‖ with ‖Σ‖ √(r(Σ)/n).
    OpnormCheck(RunArgs),
    /// Print the assumption proxies for the configured model, cluster and n.
    Assumptions(ConfigArg),
}

#[derive(Args)]
struct ConfigArg {
    /// Experiment config, JSON or TOML (chosen by extension).
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Override base_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override reps.
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

/// A failure the user can fix by changing the inputs; exits with status 2.
#[derive(Debug)]
struct Precondition(String);

impl std::fmt::Display for Precondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Precondition {}

fn lib_error(e: pca_wald::Error) -> anyhow::Error {
    if e.is_precondition() {
        Precondition(e.to_string()).into()
    } else {
        e.into()
    }
}

fn load_config(path: &Path, forced_mode: Option<Mode>) -> anyhow::Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
    let mut value: serde_json::Value = if is_toml {
        toml::from_str(&text).map_err(|e| Precondition(format!("{}: {e}", path.display())))?
    } else {
        serde_json::from_str(&text).map_err(|e| Precondition(format!("{}: {e}", path.display())))?
    };
    if let (Some(mode), Some(obj)) = (forced_mode, value.as_object_mut()) {
        obj.insert("mode".into(), serde_json::to_value(mode)?);
    }
    Ok(serde_json::from_value(value).map_err(|e| Precondition(format!("{}: {e}", path.display())))?)
}

fn run_experiment(args: &RunArgs, forced_mode: Option<Mode>) -> anyhow::Result<()> {
    let mut config = load_config(&args.config.config, forced_mode)?;
    if let Some(seed) = args.seed {
        config.base_seed = seed;
    }
    if let Some(reps) = args.reps {
        config.reps = reps;
    }
    if forced_mode.is_none() && !config.mode.is_simulation() {
        return Err(Precondition(format!(
            "simulate runs modes ks_gaussian, ks_chisq and coverage; use the {} subcommand",
            serde_json::to_value(config.mode)?.as_str().unwrap_or_default().replace('_', "-")
        ))
        .into());
    }
    let experiment = mc::run(&config).map_err(lib_error)?;
    let written = mc::write_outputs(&experiment, &args.out_dir).map_err(lib_error)?;
    let s = &experiment.summary;
    match s.mode {
        Mode::KsGaussian | Mode::KsChisq | Mode::Coverage => println!(
            "reps={} df={} ks_distance={:.6} coverage={:.4} mean_normalized={:.4}",
            s.reps,
            s.df.unwrap_or(0),
            s.ks_distance.unwrap_or(f64::NAN),
            s.empirical_coverage.unwrap_or(f64::NAN),
            s.mean_normalized.unwrap_or(f64::NAN)
        ),
        Mode::BiasSweep => {
            for b in &s.bias_table {
                println!(
                    "n={} p={} bias={:.5} se={:.5} ratio={:.4}",
                    b.n, b.p, b.bias, b.std_err, b.ratio
                );
            }
        }
        Mode::PerturbCheck => println!(
            "perturbations={} violations={}",
            experiment.bound_rows.len(),
            s.bound_violations.unwrap_or(0)
        ),
        Mode::OpnormCheck => {
            for o in &s.opnorm_table {
                println!("n={} mean_norm={:.5} scale={:.5} ratio={:.4}", o.n, o.mean_norm, o.scale, o.ratio);
            }
        }
    }
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn assumptions(args: &ConfigArg) -> anyhow::Result<()> {
    let config = load_config(&args.config, None)?;
    let model = config.model.build().map_err(lib_error)?;
    let cluster = model.cluster(config.r).map_err(lib_error)?;
    let report =
        inference::check_assumptions(&model, cluster, config.n, config.gamma, config.c_proxy).map_err(lib_error)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => run_experiment(a, None),
        Command::BiasSweep(a) => run_experiment(a, Some(Mode::BiasSweep)),
        Command::PerturbCheck(a) => run_experiment(a, Some(Mode::PerturbCheck)),
        Command::OpnormCheck(a) => run_experiment(a, Some(Mode::OpnormCheck)),
        Command::Assumptions(a) => assumptions(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<Precondition>() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
