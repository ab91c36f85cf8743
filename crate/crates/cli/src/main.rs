//! `phasepop`: run phase-space population scenarios and check them against
//! a direct ensemble simulation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use phasepop::runner::{execute, write_artifacts, RunOutcome};
use phasepop::scenario::Scenario;

const EXIT_CONFIG: u8 = 2;
const EXIT_NON_CONVERGENCE: u8 = 3;
const EXIT_VERIFICATION: u8 = 4;

#[derive(Parser)]
#[command(name = "phasepop", version, about = "Evolve phase-space population distributions from a JSON scenario")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a scenario and write its CSV artifacts.
    Run {
        /// Scenario file (JSON).
        config: PathBuf,
    },
    /// Solve a scenario, run every check against the ensemble oracle and
    /// print a pass/fail table.
    Verify {
        /// Scenario file (JSON); its oracle block must be enabled.
        config: PathBuf,
    },
}

enum Failure {
    Config(String),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

fn load(path: &Path) -> Result<Scenario, Failure> {
    Scenario::load(path).map_err(|e| Failure::Config(e.to_string()))
}

fn report(outcome: &RunOutcome, dir: &Path) -> anyhow::Result<()> {
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    write_artifacts(outcome, dir).with_context(|| format!("writing artifacts to {}", dir.display()))?;
    println!("{:>12} {:>14} {:>12} {:>14} {:>10}", "t", "mass", "drift", "N", "oracle L1");
    for s in &outcome.summaries {
        let l1 = s.oracle_l1.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        println!("{:>12} {:>14.6e} {:>12.3e} {:>14.6e} {:>10}", s.t, s.mass, s.mass_drift, s.total_size, l1);
    }
    println!("artifacts in {}", dir.display());
    Ok(())
}

fn non_converged(outcome: &RunOutcome) -> bool {
    match outcome.non_convergence() {
        Some(r) => {
            eprintln!(
                "error: fixed-point iteration did not converge at t = {} after {} iterations (last mismatch {:e})",
                r.t, r.iterations, r.final_mismatch
            );
            true
        }
        None => false,
    }
}

fn run(path: &Path) -> Result<u8, Failure> {
    let scenario = load(path)?;
    let outcome = execute(&scenario, false).context("solving scenario")?;
    report(&outcome, &scenario.output_dir())?;
    if non_converged(&outcome) {
        return Ok(EXIT_NON_CONVERGENCE);
    }
    let threshold = scenario.config.oracle.l1_threshold;
    let bad = outcome.oracle_failures(threshold);
    for s in &bad {
        eprintln!("error: oracle L1 {} at t = {} exceeds {threshold}", s.oracle_l1.unwrap_or(f64::NAN), s.t);
    }
    Ok(if bad.is_empty() { 0 } else { EXIT_VERIFICATION })
}

fn verify(path: &Path) -> Result<u8, Failure> {
    let scenario = load(path)?;
    if !scenario.config.oracle.enabled {
        return Err(Failure::Config(format!("{}: verify needs an enabled oracle block", path.display())));
    }
    let outcome = execute(&scenario, true).context("solving scenario")?;
    report(&outcome, &scenario.output_dir())?;
    println!();
    for c in &outcome.checks {
        println!("{c}");
    }
    if non_converged(&outcome) {
        return Ok(EXIT_NON_CONVERGENCE);
    }
    let failed = outcome.checks.iter().filter(|c| !c.passed()).count();
    println!("{} checks, {failed} failed", outcome.checks.len());
    Ok(if failed == 0 { 0 } else { EXIT_VERIFICATION })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config } => run(config),
        Command::Verify { config } => verify(config),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
