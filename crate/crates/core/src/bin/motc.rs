//! Command-line driver for the seeded experiments.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O error.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use motc_core::bench::{
    emit_results, run_efficiency_comparison, run_gradient_flow, run_gramian_distribution, run_motc_experiment,
    run_unitary_tracking, Artifact, CorrectionConfig, ExperimentConfig, FreeFunctionConfig, IntegratorConfig,
    OutputFormat,
};
use motc_core::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "motc", version, about = "Multiobservable tracking control experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Condition-number distributions of the propagator and observable Gramians over random fields.
    GramianDist,
    /// Observable tracking towards the optimum of the first observable, for each observable count.
    MotcTrack,
    /// Gradient ascent of the first observable.
    GradFlow,
    /// Full-propagator tracking along the geodesic to the optimum.
    UnitaryTrack,
    /// Steps needed by tracking and by gradient ascent to reach the threshold.
    Efficiency,
}

#[derive(Args, Debug)]
struct Overrides {
    /// JSON configuration file; flags below override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// csv, json or both.
    #[arg(long, global = true)]
    format: Option<OutputFormat>,
    #[arg(long, global = true)]
    samples: Option<usize>,
    /// Comma-separated observable counts, e.g. 2,4,10.
    #[arg(long, global = true)]
    observables: Option<String>,
    /// off or beta=<x>.
    #[arg(long, global = true)]
    correction: Option<CorrectionConfig>,
    /// zero or fluence:eta=<x>.
    #[arg(long = "free-fn", global = true)]
    free_fn: Option<FreeFunctionConfig>,
    /// euler:ds=<x>, rk4:ds=<x>, rkck:atol=<x>,rtol=<x> or linesearch:seed=<x>.
    #[arg(long, global = true)]
    integrator: Option<IntegratorConfig>,
    /// Wall-clock limit per experiment in seconds.
    #[arg(long = "time-limit", global = true)]
    time_limit: Option<f64>,
}

fn parse_observables(list: &str) -> Result<Vec<usize>> {
    list.split(',')
        .map(|m| {
            m.trim()
                .parse()
                .map_err(|_| Error::Config(format!("'{m}' is not an observable count")))
        })
        .collect()
}

fn load_config(overrides: &Overrides) -> Result<ExperimentConfig> {
    let mut config = match &overrides.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.clone(),
                source,
            })?;
            ExperimentConfig::from_json(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = overrides.seed {
        config.seed = seed;
    }
    if let Some(dir) = &overrides.out {
        config.output.dir = dir.clone();
    }
    if let Some(format) = overrides.format {
        config.output.format = format;
    }
    if let Some(samples) = overrides.samples {
        config.samples = samples;
    }
    if let Some(list) = &overrides.observables {
        config.observables = parse_observables(list)?;
    }
    if let Some(correction) = overrides.correction {
        config.correction = correction;
    }
    if let Some(free_fn) = overrides.free_fn {
        config.free_function = free_fn;
    }
    if let Some(integrator) = overrides.integrator {
        config.integrator = integrator;
    }
    if let Some(limit) = overrides.time_limit {
        config.time_limit_s = Some(limit);
    }
    config.validate()?;
    Ok(config)
}

/// Writes the artifact and reports whether any recorded run failed numerically.
fn finish<A: Artifact>(artifact: &A, config: &ExperimentConfig, failed: bool) -> Result<bool> {
    for path in emit_results(artifact, config, config.output.format, &config.output.dir)? {
        println!("{}", path.display());
    }
    Ok(failed)
}

fn run(cli: &Cli) -> Result<bool> {
    let config = load_config(&cli.overrides)?;
    match cli.command {
        Command::GramianDist => {
            let result = run_gramian_distribution(&config)?;
            for failure in &result.failures {
                eprintln!("sample {} skipped: {}", failure.sample, failure.error);
            }
            finish(&result, &config, false)
        }
        Command::MotcTrack => {
            let result = run_motc_experiment(&config)?;
            let failed = result.runs.iter().any(|r| r.run.outcome.failed());
            finish(&result, &config, failed)
        }
        Command::GradFlow => {
            let result = run_gradient_flow(&config)?;
            let failed = result.run.outcome.failed();
            finish(&result, &config, failed)
        }
        Command::UnitaryTrack => {
            let result = run_unitary_tracking(&config)?;
            let failed = result.outcome.failed();
            finish(&result, &config, failed)
        }
        Command::Efficiency => {
            let result = run_efficiency_comparison(&config)?;
            let failed = result.motc.outcome.failed() || result.gradient.outcome.failed();
            finish(&result, &config, failed)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => {
            eprintln!("error: a run stopped on a numerical failure; partial logs were written");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
