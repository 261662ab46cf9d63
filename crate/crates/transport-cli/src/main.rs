//! Command-line driver: load a JSON experiment configuration, validate it,
//! dispatch to the named experiment and write CSV/JSON reports plus a run
//! manifest.
//!
//! Exit codes: 0 success, 2 validation failure, 3 numeric/scheme failure,
//! 4 acceptance-threshold failure. Worker counts come from the environment
//! (RAYON_NUM_THREADS) and never affect numeric outputs.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use transport_lab::config::{ExperimentConfig, ExperimentKind};
use transport_lab::experiment;
use transport_lab::LabError;

#[derive(Parser)]
#[command(name = "transport-lab", version, about = "Monte Carlo laboratory for drift transport with Brownian forcing on bounded domains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment configuration
    #[arg(long)]
    config: PathBuf,
    /// output directory (overrides the config)
    #[arg(long)]
    out: Option<PathBuf>,
    /// master seed override
    #[arg(long)]
    seed: Option<u64>,
    /// path count override
    #[arg(long)]
    paths: Option<usize>,
    /// time step override
    #[arg(long)]
    dt: Option<f64>,
    /// suppress the run summary
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo field snapshots of the solution
    Solve(RunArgs),
    /// Weak-formulation residuals and conversion corrections
    Weakform(RunArgs),
    /// Boundary traces by deformation, bound checks and stability
    Trace(RunArgs),
    /// Renormalized expectations and the parabolic residual
    Renorm(RunArgs),
    /// Error-versus-step table against the deterministic oracle
    Convergence(RunArgs),
    /// Drift hypothesis report
    Hypothesis(RunArgs),
    /// Validate a configuration without running numerics
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load(path: &PathBuf) -> Result<ExperimentConfig, LabError> {
    let text = std::fs::read_to_string(path)?;
    ExperimentConfig::from_json(&text)
}

fn exit_for(err: &LabError) -> u8 {
    match err {
        LabError::Config(_) | LabError::Argument(_) | LabError::Usage(_) => 2,
        _ => 3,
    }
}

fn run_command(kind: ExperimentKind, args: &RunArgs) -> u8 {
    let mut config = match load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    if let Some(seed) = args.seed {
        config.numerics.master_seed = seed;
    }
    if let Some(paths) = args.paths {
        config.numerics.n_paths = paths;
    }
    if let Some(dt) = args.dt {
        config.numerics.dt = dt;
    }
    let issues = config.validate();
    if !issues.is_empty() {
        for i in &issues {
            eprintln!("invalid: {}: {}", i.path, i.message);
        }
        return 2;
    }
    let out = args
        .out
        .clone()
        .or_else(|| config.output_dir.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    match experiment::run(&config, kind, &out) {
        Ok(manifest) => {
            if !args.quiet {
                println!(
                    "{}: wrote {} file(s) to {} in {} ms",
                    manifest.kind,
                    manifest.outputs.len(),
                    out.display(),
                    manifest.wall_ms
                );
                println!("checksum: {}", manifest.checksum_sha256);
            }
            if manifest.threshold_failures.is_empty() {
                0
            } else {
                for f in &manifest.threshold_failures {
                    eprintln!("threshold: {f}");
                }
                4
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_for(&e)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match &cli.command {
        Command::Solve(a) => run_command(ExperimentKind::Solve, a),
        Command::Weakform(a) => run_command(ExperimentKind::Weakform, a),
        Command::Trace(a) => run_command(ExperimentKind::Trace, a),
        Command::Renorm(a) => run_command(ExperimentKind::Renorm, a),
        Command::Convergence(a) => run_command(ExperimentKind::Convergence, a),
        Command::Hypothesis(a) => run_command(ExperimentKind::Hypothesis, a),
        Command::Validate { config } => match load(config) {
            Ok(c) => {
                let issues = c.validate();
                if issues.is_empty() {
                    println!("ok");
                    0
                } else {
                    for i in &issues {
                        println!("invalid: {}: {}", i.path, i.message);
                    }
                    2
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                2
            }
        },
    };
    ExitCode::from(code)
}
