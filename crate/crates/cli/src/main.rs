//! `weakkam`: discounted Hamilton-Jacobi experiments on flat tori.

use anyhow::{anyhow, Result};
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use weakkam_cli::{run, ExperimentConfig, StageGoal};

#[derive(Parser)]
#[command(
    name = "weakkam",
    about = "Viscosity solutions, Aubry sets and attractors for discounted Hamilton-Jacobi equations",
    version
)]
struct Cli {
    /// TOML experiment configuration; the built-in cosine reference
    /// experiment is used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<String>,

    /// Grid points per axis (overrides the config).
    #[arg(long, global = true)]
    n: Option<usize>,

    /// Semigroup time step (overrides the config).
    #[arg(long, global = true)]
    dt: Option<f64>,

    /// Discount rate (overrides the config).
    #[arg(long, global = true)]
    lambda: Option<f64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the stationary equation for u^- (emits u_minus.csv,
    /// residual.csv, solve_report.json).
    Solve,
    /// Solve, then apply the double regularization (emits u_reg.csv).
    Regularize,
    /// Detect Aubry candidates and build the strict perturbation
    /// (emits aubry.json).
    Aubry,
    /// Sublevel cloud, attractor image, equilibria and the Lyapunov check
    /// (emits equilibria.json, sigma_cloud.csv, attractor_cloud.csv).
    Attractor,
    /// Semigroup convergence-rate study (emits rate.csv).
    Rate,
    /// Full pipeline with the contract summary (emits report.json);
    /// exits nonzero when any contract fails.
    Check,
}

fn main() -> ExitCode {
    match run_cli() {
        Ok(pass) => {
            if pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run_cli() -> Result<bool> {
    let cli = Cli::parse();
    let base = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| anyhow!("reading {}: {e}", path.display()))?;
            ExperimentConfig::from_toml(&text).map_err(|e| anyhow!("config: {e}"))?
        }
        None => ExperimentConfig::reference(),
    };
    let cfg = base
        .with_overrides(cli.n, cli.dt, cli.lambda, cli.out)
        .map_err(|e| anyhow!("config: {e}"))?;

    let goal = match cli.command {
        Command::Solve => StageGoal::Solve,
        Command::Regularize => StageGoal::Regularize,
        Command::Aubry => StageGoal::Aubry,
        Command::Attractor => StageGoal::Attractor,
        Command::Rate => StageGoal::Rate,
        Command::Check => StageGoal::Check,
    };

    let out = PathBuf::from(&cfg.output.dir);
    let report = match cfg.model.dim {
        1 => run::<1>(&cfg, goal, &out)?,
        2 => run::<2>(&cfg, goal, &out)?,
        d => return Err(anyhow!("unsupported dimension {d}")),
    };

    match report {
        Some(report) => {
            for c in &report.contracts {
                println!(
                    "{} {:<28} measured {:+.6e}  threshold {:+.6e}",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.id,
                    c.measured,
                    c.threshold
                );
            }
            for s in &report.stages {
                if s.status == "skipped" {
                    println!("SKIP {:<28} {}", s.name, s.detail);
                }
            }
            println!(
                "{}: {} contracts, artifacts in {}",
                if report.pass { "PASS" } else { "FAIL" },
                report.contracts.len(),
                out.display()
            );
            Ok(report.pass)
        }
        None => {
            println!("done: artifacts in {}", out.display());
            Ok(true)
        }
    }
}
