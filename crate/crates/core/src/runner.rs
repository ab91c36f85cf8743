//! Executes a [`Scenario`] and writes its CSV artifacts.
//!
//! Everything is computed before the output directory is touched, so a
//! failed run leaves no partial files behind (except for fixed-point
//! non-convergence, which is a result rather than an error).
//!
//! Artifacts, with `i` the index into the scenario's `times`:
//!
//! | file | columns |
//! |------|---------|
//! | `field_t{i}.csv` | `# axes:` header, then `n,<param>...,u` |
//! | `marginal_t{i}.csv` | `# axes:` header, then `n,rho` |
//! | `summary.csv` | `t,mass,mass_drift,N,oracle_l1` |
//! | `timeseries.csv` | `t,c,N` or `t,R,N` (coupled models) |
//! | `fixed_point.csv` | `t,converged,iterations,mismatch,residual` (self-interaction) |
//! | `histogram_t{i}.csv` | `bin_lo,bin_hi,density` (oracle enabled) |
//! | `checks.csv` | `check,measured,limit,bound,pass` (`verify` only) |

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::check::{Bound, Check};
use crate::grid::{first_moment_n, integrate, size_distribution, sup_norm_diff, GridError};
use crate::models::{Evolution, ModelError};
use crate::oracle::{
    histogram, integrate_ensemble_at, l1_distance, sample_ensemble, uniform_edges, Histogram, OracleError,
};
use crate::scenario::Scenario;
use crate::self_interaction::FixedPointReport;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("oracle: {0}")]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("writing {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Conservation data for one snapshot.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotSummary {
    pub t: f64,
    pub mass: f64,
    /// `(mass − mass₀) / mass₀` relative to the first snapshot.
    pub mass_drift: f64,
    pub total_size: f64,
    pub oracle_l1: Option<f64>,
}

pub struct RunOutcome {
    pub evolution: Evolution,
    pub summaries: Vec<SnapshotSummary>,
    pub histograms: Vec<Histogram>,
    /// Filled only when checks were requested.
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
}

impl RunOutcome {
    pub fn non_convergence(&self) -> Option<&FixedPointReport> {
        self.evolution.failure.as_ref()
    }

    /// Snapshots whose oracle distance exceeds `threshold`.
    pub fn oracle_failures(&self, threshold: f64) -> Vec<&SnapshotSummary> {
        self.summaries.iter().filter(|s| s.oracle_l1.is_some_and(|l| !(l <= threshold))).collect()
    }

    pub fn all_checks_pass(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }
}

/// Solves, runs the oracle when enabled, and optionally evaluates every check.
pub fn execute(scenario: &Scenario, with_checks: bool) -> Result<RunOutcome, RunError> {
    let Scenario { config, model, grid, u0 } = scenario;
    let evolution = model.evolve(u0, grid, &config.times)?;

    let mut warnings = Vec::new();
    let mass0 = evolution.snapshots.first().map_or(0.0, |(_, f)| integrate(f));
    let mut summaries: Vec<SnapshotSummary> = evolution
        .snapshots
        .iter()
        .map(|(t, f)| {
            if let Some(ratio) = f.boundary_ratio().filter(|_| model.warn_on_boundary() && f.touches_boundary()) {
                warnings.push(format!(
                    "t = {t}: field reaches the domain boundary ({ratio:e} of its max); mass may leave the grid"
                ));
            }
            let mass = integrate(f);
            SnapshotSummary {
                t: *t,
                mass,
                mass_drift: (mass - mass0) / mass0,
                total_size: first_moment_n(f),
                oracle_l1: None,
            }
        })
        .collect();

    let mut histograms = Vec::new();
    let mut oracle_states = Vec::new();
    if config.oracle.enabled && !evolution.snapshots.is_empty() {
        let o = &config.oracle;
        let ensemble = sample_ensemble(u0, grid, o.members)?;
        let member_model = model.member_model(u0, grid, &evolution)?;
        oracle_states = integrate_ensemble_at(&member_model, &ensemble, &evolution.times(), o.dt, |_, _| {})?;
        let axis = grid.n_axis();
        let edges = uniform_edges(axis.lo(), axis.hi(), o.bins);
        for ((summary, (_, field)), state) in summaries.iter_mut().zip(&evolution.snapshots).zip(&oracle_states) {
            let h = histogram(&state.ensemble, &edges)?;
            summary.oracle_l1 = Some(l1_distance(&size_distribution(field), &h)?);
            histograms.push(h);
        }
    }

    let mut checks = Vec::new();
    if with_checks {
        let drift = summaries.iter().map(|s| s.mass_drift.abs()).fold(0.0, f64::max);
        checks.push(Check::at_most("mass drift", drift, config.checks.mass_drift));
        if let Some((0.0, first)) = evolution.snapshots.first() {
            let gap = sup_norm_diff(first, &u0.sample(grid).map_err(ModelError::from)?)?;
            checks.push(Check::at_most("t=0 snapshot equals u0", gap, 0.0));
        }
        for s in &summaries {
            if let Some(l1) = s.oracle_l1 {
                checks.push(Check::at_most(format!("oracle L1 at t={}", s.t), l1, config.oracle.l1_threshold));
            }
        }
        checks.extend(model.checks(u0, grid, &evolution, &config.checks)?);
        if !oracle_states.is_empty() {
            checks.extend(model.oracle_checks(&evolution, &oracle_states));
        }
    }

    Ok(RunOutcome { evolution, summaries, histograms, checks, warnings })
}

fn create(dir: &Path, name: &str) -> Result<(BufWriter<File>, PathBuf), RunError> {
    let path = dir.join(name);
    let file = File::create(&path).map_err(|source| RunError::Io { path: path.clone(), source })?;
    Ok((BufWriter::new(file), path))
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io { path: path.to_path_buf(), source }
}

fn grid_io(path: &Path, e: GridError) -> RunError {
    match e {
        GridError::Io(msg) => RunError::Io { path: path.to_path_buf(), source: std::io::Error::other(msg) },
        other => RunError::Grid(other),
    }
}

/// Writes every artifact of `outcome` into `dir`, creating it if needed.
pub fn write_artifacts(outcome: &RunOutcome, dir: &Path) -> Result<Vec<PathBuf>, RunError> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    let mut written = Vec::new();
    let evo = &outcome.evolution;

    for (i, (_, field)) in evo.snapshots.iter().enumerate() {
        let (mut w, path) = create(dir, &format!("field_t{i}.csv"))?;
        field.write_csv(&mut w, "u").map_err(|e| grid_io(&path, e))?;
        w.flush().map_err(io(&path))?;
        written.push(path);

        let (mut w, path) = create(dir, &format!("marginal_t{i}.csv"))?;
        size_distribution(field).write_csv(&mut w, "rho").map_err(|e| grid_io(&path, e))?;
        w.flush().map_err(io(&path))?;
        written.push(path);
    }

    let (mut w, path) = create(dir, "summary.csv")?;
    let mut write_summary = || -> std::io::Result<()> {
        writeln!(w, "t,mass,mass_drift,N,oracle_l1")?;
        for s in &outcome.summaries {
            let l1 = s.oracle_l1.map(|v| v.to_string()).unwrap_or_default();
            writeln!(w, "{},{},{},{},{}", s.t, s.mass, s.mass_drift, s.total_size, l1)?;
        }
        w.flush()
    };
    write_summary().map_err(io(&path))?;
    written.push(path);

    if let Some(series) = &evo.series {
        let (mut w, path) = create(dir, "timeseries.csv")?;
        series.write_csv(&mut w).and_then(|_| w.flush()).map_err(io(&path))?;
        written.push(path);
    }

    if !evo.fixed_point.is_empty() || evo.failure.is_some() {
        let (mut w, path) = create(dir, "fixed_point.csv")?;
        let mut write_reports = || -> std::io::Result<()> {
            writeln!(w, "t,converged,iterations,mismatch,residual")?;
            for r in evo.fixed_point.iter().chain(&evo.failure) {
                writeln!(w, "{},{},{},{},{}", r.t, r.converged, r.iterations, r.final_mismatch, r.residual)?;
            }
            w.flush()
        };
        write_reports().map_err(io(&path))?;
        written.push(path);
    }

    for (i, h) in outcome.histograms.iter().enumerate() {
        let (mut w, path) = create(dir, &format!("histogram_t{i}.csv"))?;
        h.write_csv(&mut w).and_then(|_| w.flush()).map_err(io(&path))?;
        written.push(path);
    }

    if !outcome.checks.is_empty() {
        let (mut w, path) = create(dir, "checks.csv")?;
        let mut write_checks = || -> std::io::Result<()> {
            writeln!(w, "check,measured,limit,bound,pass")?;
            for c in &outcome.checks {
                let bound = match c.bound {
                    Bound::AtMost => "at_most",
                    Bound::AtLeast => "at_least",
                };
                writeln!(w, "\"{}\",{},{},{bound},{}", c.name, c.measured, c.limit, c.passed())?;
            }
            w.flush()
        };
        write_checks().map_err(io(&path))?;
        written.push(path);
    }
    Ok(written)
}
