//! Distribution-dependent growth `dn/dt = α n u δ`.
//!
//! The phase-space equation is of inviscid Burgers type. Before a shock
//! forms its solution satisfies the pointwise implicit relation
//!
//! ```text
//! u = u₀(n (αδt u − 1)², α) / (αδt · u₀(n (αδt u − 1)², α) + 1)
//! ```
//!
//! which is solved here by plain fixed-point iteration, one synchronous sweep
//! over all nodes per iteration. Past the shock the iteration stops
//! contracting; that breakdown is detected and reported, not repaired.

use rayon::prelude::*;
use thiserror::Error;

use crate::grid::{sup_norm_diff, AxisName, Field, GridError, PhaseGrid};
use crate::initial::{DistributionError, InitialDistribution};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelfInteractionError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite value at node {node} during iteration")]
    NonFinite { node: usize },
    #[error("fixed-point iteration failed at t = {t} after {iterations} iterations (mismatch {mismatch:e})", t = .report.t, iterations = .report.iterations, mismatch = .report.final_mismatch)]
    NonConvergence { report: FixedPointReport, best: Box<Field> },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Distribution(#[from] DistributionError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SelfInteractionConfig {
    /// Phase volume `4ΔαΔn` of the midpoint window.
    pub delta: f64,
    /// Tolerance on the sup-norm change between iterates.
    pub epsilon: f64,
    pub max_iters: usize,
    /// Consecutive increases of the mismatch that count as divergence.
    pub divergence_window: usize,
    /// Optional under-relaxation `u ← (1−ω)u + ω·map(u)`; `None` is the
    /// plain iteration.
    pub relaxation: Option<f64>,
}

impl Default for SelfInteractionConfig {
    fn default() -> Self {
        SelfInteractionConfig { delta: 0.1, epsilon: 1e-4, max_iters: 10_000, divergence_window: 5, relaxation: None }
    }
}

impl SelfInteractionConfig {
    pub fn validate(&self) -> Result<(), SelfInteractionError> {
        let bad = |m: String| Err(SelfInteractionError::InvalidConfig(m));
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return bad(format!("delta must be positive, got {}", self.delta));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1".into());
        }
        if self.divergence_window == 0 {
            return bad("divergence_window must be at least 1".into());
        }
        if let Some(w) = self.relaxation {
            if !(w > 0.0 && w <= 1.0) {
                return bad(format!("relaxation must lie in (0, 1], got {w}"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FixedPointReport {
    pub t: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Last sup-norm change `ε_k`.
    pub final_mismatch: f64,
    /// Sup of `|u − (1 − αδtu) u₀(n(1 − αδtu)², α)|` for the returned field.
    pub residual: f64,
    /// Every `ε_k`, in order.
    pub mismatches: Vec<f64>,
}

impl FixedPointReport {
    /// Whether `ε_k` never increased after the first iteration.
    pub fn monotone(&self) -> bool {
        self.mismatches.windows(2).all(|w| w[1] <= w[0])
    }
}

fn check_grid(grid: &PhaseGrid, u0: &InitialDistribution) -> Result<(), SelfInteractionError> {
    if grid.dim() != 2 || grid.axes()[1].name() != AxisName::Alpha {
        return Err(SelfInteractionError::InvalidConfig("self-interaction needs an (n, alpha) grid".into()));
    }
    if u0.dim() != 2 {
        return Err(DistributionError::DimensionMismatch { expected: 2, got: u0.dim() }.into());
    }
    Ok(())
}

/// Pointwise map `u ↦ g / (αδt·g + 1)` with `g = u₀(n(αδt u − 1)², α)`.
#[inline]
pub fn implicit_map(u0: &InitialDistribution, n: f64, alpha: f64, t: f64, delta: f64, u: f64) -> f64 {
    let a = alpha * delta * t;
    let s = a * u - 1.0;
    let g = u0.value(&[n * s * s, alpha]);
    g / (a * g + 1.0)
}

/// `|u − (1 − αδtu) u₀(n(1 − αδtu)², α)|` at one node.
#[inline]
pub fn implicit_residual(u0: &InitialDistribution, n: f64, alpha: f64, t: f64, delta: f64, u: f64) -> f64 {
    let s = 1.0 - alpha * delta * t * u;
    (u - s * u0.value(&[n * s * s, alpha])).abs()
}

/// One synchronous sweep of the implicit map over every node of `u_k`.
pub fn fixed_point_iterate(
    u_k: &Field,
    u0: &InitialDistribution,
    t: f64,
    config: &SelfInteractionConfig,
) -> Result<Field, SelfInteractionError> {
    let grid = u_k.grid();
    let n_axis = grid.n_axis();
    let a_axis = grid.axes()[1];
    let cn = n_axis.count();
    let omega = config.relaxation;
    let values: Vec<f64> = u_k
        .values()
        .par_iter()
        .enumerate()
        .map(|(flat, &u)| {
            let mapped = implicit_map(u0, n_axis.coord(flat % cn), a_axis.coord(flat / cn), t, config.delta, u);
            let v = match omega {
                Some(w) => (1.0 - w) * u + w * mapped,
                None => mapped,
            };
            if v.is_finite() {
                Ok(v)
            } else {
                Err(SelfInteractionError::NonFinite { node: flat })
            }
        })
        .collect::<Result<_, _>>()?;
    Ok(Field::new(grid.clone(), values)?)
}

/// Sup-norm defect of the product form of the implicit relation.
pub fn residual(field: &Field, u0: &InitialDistribution, t: f64, delta: f64) -> f64 {
    let grid = field.grid();
    let n_axis = grid.n_axis();
    let a_axis = grid.axes()[1];
    let cn = n_axis.count();
    field
        .values()
        .par_iter()
        .enumerate()
        .map(|(flat, &u)| implicit_residual(u0, n_axis.coord(flat % cn), a_axis.coord(flat / cn), t, delta, u))
        .reduce(|| 0.0, f64::max)
}

/// Iterates to tolerance at a single time, starting from `warm_start` or
/// from the sampled `u₀`.
pub fn solve_at_time(
    u0: &InitialDistribution,
    grid: &PhaseGrid,
    t: f64,
    config: &SelfInteractionConfig,
    warm_start: Option<&Field>,
) -> Result<(Field, FixedPointReport), SelfInteractionError> {
    config.validate()?;
    check_grid(grid, u0)?;
    if !(t.is_finite() && t >= 0.0) {
        return Err(SelfInteractionError::InvalidConfig(format!("time must be nonnegative, got {t}")));
    }
    let mut current = match warm_start {
        Some(f) if f.grid() != grid => return Err(GridError::GridMismatch.into()),
        Some(f) => f.clone(),
        None => u0.sample(grid)?,
    };
    let mut mismatches = Vec::new();
    let mut best: Option<(f64, Field)> = None;
    let mut rising = 0usize;
    let mut converged = false;
    for _ in 0..config.max_iters {
        let next = fixed_point_iterate(&current, u0, t, config)?;
        let eps = sup_norm_diff(&next, &current)?;
        if let Some(&prev) = mismatches.last() {
            rising = if eps > prev { rising + 1 } else { 0 };
        }
        mismatches.push(eps);
        current = next;
        if eps <= config.epsilon {
            converged = true;
            break;
        }
        if best.as_ref().is_none_or(|(b, _)| eps < *b) {
            best = Some((eps, current.clone()));
        }
        if rising >= config.divergence_window {
            break;
        }
    }
    let final_mismatch = *mismatches.last().expect("at least one iteration");
    let iterations = mismatches.len();
    if converged {
        let res = residual(&current, u0, t, config.delta);
        let report = FixedPointReport { t, converged, iterations, final_mismatch, residual: res, mismatches };
        return Ok((current, report));
    }
    let best = best.map(|(_, f)| f).unwrap_or(current);
    let res = residual(&best, u0, t, config.delta);
    let report = FixedPointReport { t, converged, iterations, final_mismatch, residual: res, mismatches };
    Err(SelfInteractionError::NonConvergence { report, best: Box::new(best) })
}

#[derive(Clone, Debug)]
pub struct Sweep {
    /// Converged fields in time order.
    pub solutions: Vec<(Field, FixedPointReport)>,
    /// The first failed solve, if any, with its best iterate.
    pub failure: Option<(FixedPointReport, Field)>,
}

/// Solves at each time in turn, warm-starting from the previous solution;
/// stops at the first non-convergence.
pub fn time_sweep(
    u0: &InitialDistribution,
    grid: &PhaseGrid,
    times: &[f64],
    config: &SelfInteractionConfig,
) -> Result<Sweep, SelfInteractionError> {
    if times.first().is_some_and(|t| *t < 0.0) || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SelfInteractionError::InvalidConfig("times must be nonnegative and strictly increasing".into()));
    }
    let mut solutions: Vec<(Field, FixedPointReport)> = Vec::with_capacity(times.len());
    for &t in times {
        let warm = solutions.last().map(|(f, _)| f);
        match solve_at_time(u0, grid, t, config, warm) {
            Ok(sol) => solutions.push(sol),
            Err(SelfInteractionError::NonConvergence { report, best }) => {
                return Ok(Sweep { solutions, failure: Some((report, *best)) });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(Sweep { solutions, failure: None })
}
