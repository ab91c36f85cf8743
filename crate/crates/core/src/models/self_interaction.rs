use serde::Deserialize;
use serde_json::Value;

use crate::check::{Check, CheckSettings};
use crate::grid::{size_distribution, AxisName, Field, PhaseGrid};
use crate::initial::InitialDistribution;
use crate::oracle::{FieldHistory, MemberModel};
use crate::self_interaction::{time_sweep, SelfInteractionConfig};

use super::{invalid, parse_params, Evolution, ModelError, PhaseModel};

/// Growth rate proportional to the local density `u` itself.
#[derive(Clone, Debug)]
pub struct SelfInteraction {
    config: SelfInteractionConfig,
    history_step: f64,
}

fn default_history_step() -> f64 {
    0.002
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SelfInteractionParams {
    delta: f64,
    epsilon: f64,
    max_iters: Option<usize>,
    divergence_window: Option<usize>,
    relaxation: Option<f64>,
    /// Spacing of the solves that give the oracle its time-dependent `u`.
    #[serde(default = "default_history_step")]
    oracle_history_step: f64,
}

impl SelfInteraction {
    pub fn new(config: SelfInteractionConfig, history_step: f64) -> Result<Self, ModelError> {
        config.validate()?;
        if !(history_step.is_finite() && history_step > 0.0) {
            return Err(invalid("self_interaction", "oracle_history_step must be positive"));
        }
        Ok(SelfInteraction { config, history_step })
    }

    pub fn from_params(params: &Value) -> Result<Box<dyn PhaseModel>, ModelError> {
        let p: SelfInteractionParams = parse_params("self_interaction", params)?;
        let d = SelfInteractionConfig::default();
        let config = SelfInteractionConfig {
            delta: p.delta,
            epsilon: p.epsilon,
            max_iters: p.max_iters.unwrap_or(d.max_iters),
            divergence_window: p.divergence_window.unwrap_or(d.divergence_window),
            relaxation: p.relaxation,
        };
        Ok(Box::new(SelfInteraction::new(config, p.oracle_history_step)?))
    }

    pub fn config(&self) -> &SelfInteractionConfig {
        &self.config
    }
}

/// Largest `|∂ρ/∂n|` of the size marginal, by forward differences.
pub fn steepest_slope(field: &Field) -> f64 {
    let rho = size_distribution(field);
    let h = rho.grid().n_axis().spacing();
    rho.values().windows(2).map(|w| ((w[1] - w[0]) / h).abs()).fold(0.0, f64::max)
}

impl PhaseModel for SelfInteraction {
    fn name(&self) -> &'static str {
        "self_interaction"
    }

    fn check_keys(&self) -> &'static [&'static str] {
        &["residual", "front_steepening"]
    }

    fn check_setup(&self, u0: &InitialDistribution, grid: &PhaseGrid) -> Result<(), ModelError> {
        if grid.axis_names() != [AxisName::N, AxisName::Alpha] {
            return Err(invalid(self.name(), "grid axes must be (n, alpha)"));
        }
        if u0.dim() != 2 {
            return Err(invalid(self.name(), "initial distribution must be two-dimensional"));
        }
        Ok(())
    }

    fn evolve(&self, u0: &InitialDistribution, grid: &PhaseGrid, times: &[f64]) -> Result<Evolution, ModelError> {
        let sweep = time_sweep(u0, grid, times, &self.config)?;
        let (snapshots, fixed_point) = sweep.solutions.into_iter().map(|(f, r)| ((r.t, f), r)).unzip();
        Ok(Evolution {
            snapshots,
            series: None,
            fixed_point,
            failure: sweep.failure.map(|(report, _)| report),
            detail: None,
        })
    }

    /// Members move with `α n u δ`, so the oracle needs `u` between
    /// snapshots: it is re-solved on a finer time grid that contains them.
    fn member_model(
        &self,
        u0: &InitialDistribution,
        grid: &PhaseGrid,
        evolution: &Evolution,
    ) -> Result<MemberModel, ModelError> {
        let end = evolution.snapshots.last().map_or(0.0, |(t, _)| *t);
        let steps = (end / self.history_step).ceil() as usize;
        let mut times: Vec<f64> = (0..=steps).map(|i| i as f64 * self.history_step).filter(|t| *t < end).collect();
        times.extend(evolution.times());
        times.sort_by(f64::total_cmp);
        times.dedup();
        let sweep = time_sweep(u0, grid, &times, &self.config)?;
        if let Some((report, _)) = sweep.failure {
            return Err(invalid(self.name(), format!("oracle history solve did not converge at t = {}", report.t)));
        }
        let (times, fields) = sweep.solutions.into_iter().map(|(f, r)| (r.t, f)).unzip();
        Ok(MemberModel::SelfInteraction { delta: self.config.delta, field: FieldHistory::new(times, fields)? })
    }

    fn checks(
        &self,
        _: &InitialDistribution,
        _: &PhaseGrid,
        evolution: &Evolution,
        settings: &CheckSettings,
    ) -> Result<Vec<Check>, ModelError> {
        let reports = &evolution.fixed_point;
        let mut checks = Vec::new();
        let worst = reports.iter().map(|r| r.residual).fold(0.0, f64::max);
        checks.push(Check::at_most("implicit relation residual", worst, settings.residual.unwrap_or(1e-3)));
        // convergence slows as the front steepens
        let positive: Vec<usize> = reports.iter().filter(|r| r.t > 0.0).map(|r| r.iterations).collect();
        let drops = positive.windows(2).filter(|w| w[1] < w[0]).count();
        checks.push(Check::at_most("iteration count nondecreasing in t (drops)", drops as f64, 0.0));
        if let (Some(min), Some((_, first)), Some((t, last))) =
            (settings.front_steepening, evolution.snapshots.first(), evolution.snapshots.last())
        {
            let ratio = steepest_slope(last) / steepest_slope(first);
            checks.push(Check::at_least(format!("front steepening at t={t}"), ratio, min));
        }
        Ok(checks)
    }
}
