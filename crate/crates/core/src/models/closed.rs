use serde::Deserialize;
use serde_json::Value;

use crate::check::{Check, CheckSettings};
use crate::closed_form::{compute_nbar, ClosedForm, ExponentialModel, LogisticModel, RandomMigrationModel};
use crate::grid::{first_moment_n, AxisName, PhaseGrid};
use crate::initial::{DistributionError, InitialDistribution};
use crate::oracle::{MemberModel, OracleState};

use super::{invalid, parse_params, Evolution, ModelError, PhaseModel};

fn require_axes(model: &'static str, grid: &PhaseGrid, names: &[AxisName]) -> Result<(), ModelError> {
    if grid.axis_names() != names {
        let want: Vec<&str> = names.iter().map(|a| a.as_str()).collect();
        return Err(invalid(model, format!("grid axes must be ({})", want.join(", "))));
    }
    Ok(())
}

fn require_dim(u0: &InitialDistribution, grid: &PhaseGrid) -> Result<(), ModelError> {
    if u0.dim() != grid.dim() {
        return Err(DistributionError::DimensionMismatch { expected: grid.dim(), got: u0.dim() }.into());
    }
    Ok(())
}

fn snapshots<M: ClosedForm>(
    model: &M,
    u0: &InitialDistribution,
    grid: &PhaseGrid,
    times: &[f64],
) -> Result<Evolution, ModelError> {
    let snapshots =
        times.iter().map(|&t| Ok((t, model.snapshot(u0, grid, t)?))).collect::<Result<Vec<_>, ModelError>>()?;
    Ok(Evolution::from_snapshots(snapshots))
}

/// Unlimited growth `dn/dt = α n`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Exponential;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NoParams {}

impl Exponential {
    pub fn from_params(params: &Value) -> Result<Box<dyn PhaseModel>, ModelError> {
        let NoParams {} = parse_params("exponential", params)?;
        Ok(Box::new(Exponential))
    }
}

impl PhaseModel for Exponential {
    fn name(&self) -> &'static str {
        "exponential"
    }

    fn check_setup(&self, u0: &InitialDistribution, grid: &PhaseGrid) -> Result<(), ModelError> {
        require_axes(self.name(), grid, &[AxisName::N, AxisName::Alpha])?;
        require_dim(u0, grid)
    }

    fn evolve(&self, u0: &InitialDistribution, grid: &PhaseGrid, times: &[f64]) -> Result<Evolution, ModelError> {
        snapshots(&ExponentialModel, u0, grid, times)
    }

    fn member_model(&self, _: &InitialDistribution, _: &PhaseGrid, _: &Evolution) -> Result<MemberModel, ModelError> {
        Ok(MemberModel::Exponential)
    }
}

/// Logistic growth, with one carrying capacity `k` for all populations or
/// `k` as a third phase-space axis.
#[derive(Clone, Copy, Debug)]
pub struct Logistic {
    model: LogisticModel,
    k: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LogisticParams {
    k: Option<f64>,
}

impl Logistic {
    pub fn new(k: Option<f64>) -> Result<Self, ModelError> {
        let model = match k {
            Some(k) => LogisticModel::fixed_k(k)?,
            None => LogisticModel::full(),
        };
        Ok(Logistic { model, k })
    }

    pub fn from_params(params: &Value) -> Result<Box<dyn PhaseModel>, ModelError> {
        let p: LogisticParams = parse_params("logistic", params)?;
        Ok(Box::new(Logistic::new(p.k)?))
    }
}

impl PhaseModel for Logistic {
    fn name(&self) -> &'static str {
        "logistic"
    }

    /// Populations pile up at `n = k`, which is the last grid node.
    fn warn_on_boundary(&self) -> bool {
        false
    }

    fn check_setup(&self, u0: &InitialDistribution, grid: &PhaseGrid) -> Result<(), ModelError> {
        match self.k {
            Some(_) => require_axes(self.name(), grid, &[AxisName::N, AxisName::Gamma])?,
            None => require_axes(self.name(), grid, &[AxisName::N, AxisName::Gamma, AxisName::K])?,
        }
        self.model.check_grid(grid)?;
        require_dim(u0, grid)
    }

    fn evolve(&self, u0: &InitialDistribution, grid: &PhaseGrid, times: &[f64]) -> Result<Evolution, ModelError> {
        snapshots(&self.model, u0, grid, times)
    }

    fn member_model(&self, _: &InitialDistribution, _: &PhaseGrid, _: &Evolution) -> Result<MemberModel, ModelError> {
        Ok(MemberModel::Logistic { k: self.k })
    }

    /// Nodes with `n = k` never move: `u(k, γ, k, t) = u₀(k, γ, k)`.
    fn checks(
        &self,
        u0: &InitialDistribution,
        grid: &PhaseGrid,
        evolution: &Evolution,
        _: &CheckSettings,
    ) -> Result<Vec<Check>, ModelError> {
        let dim = grid.dim();
        let mut p = [0.0f64; 3];
        let boundary: Vec<usize> = (0..grid.len())
            .filter(|&i| {
                grid.node(i, &mut p[..dim]);
                p[0] == self.k.unwrap_or(p[dim - 1])
            })
            .collect();
        if boundary.is_empty() {
            return Ok(Vec::new());
        }
        let mut worst = 0.0f64;
        for (_, field) in &evolution.snapshots {
            for &i in &boundary {
                grid.node(i, &mut p[..dim]);
                worst = worst.max((field.values()[i] - u0.value(&p[..dim])).abs());
            }
        }
        Ok(vec![Check::at_most("logistic boundary u(k) = u0(k)", worst, 0.0)])
    }
}

/// Random migration towards the mean size `n̄`.
#[derive(Clone, Copy, Debug)]
pub struct RandomMigration {
    beta: f64,
    nbar: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MigrationParams {
    beta: f64,
    nbar: Option<f64>,
}

impl RandomMigration {
    /// `nbar = None` computes `n̄` from `u₀` on the scenario grid.
    pub fn new(beta: f64, nbar: Option<f64>) -> Result<Self, ModelError> {
        RandomMigrationModel::new(beta, nbar.unwrap_or(1.0))?;
        Ok(RandomMigration { beta, nbar })
    }

    pub fn from_params(params: &Value) -> Result<Box<dyn PhaseModel>, ModelError> {
        let p: MigrationParams = parse_params("random_migration", params)?;
        Ok(Box::new(RandomMigration::new(p.beta, p.nbar)?))
    }

    pub fn resolve(&self, u0: &InitialDistribution, grid: &PhaseGrid) -> Result<RandomMigrationModel, ModelError> {
        let nbar = match self.nbar {
            Some(v) => v,
            None => compute_nbar(u0, grid)?,
        };
        Ok(RandomMigrationModel::new(self.beta, nbar)?)
    }
}

impl PhaseModel for RandomMigration {
    fn name(&self) -> &'static str {
        "random_migration"
    }

    fn check_setup(&self, u0: &InitialDistribution, grid: &PhaseGrid) -> Result<(), ModelError> {
        require_axes(self.name(), grid, &[AxisName::N])?;
        require_dim(u0, grid)
    }

    fn evolve(&self, u0: &InitialDistribution, grid: &PhaseGrid, times: &[f64]) -> Result<Evolution, ModelError> {
        snapshots(&self.resolve(u0, grid)?, u0, grid, times)
    }

    fn member_model(&self, _: &InitialDistribution, _: &PhaseGrid, _: &Evolution) -> Result<MemberModel, ModelError> {
        Ok(MemberModel::RandomMigration { beta: self.beta })
    }

    /// Migration moves individuals between populations but never creates
    /// them, so `∫ n u` is conserved.
    fn checks(
        &self,
        _: &InitialDistribution,
        _: &PhaseGrid,
        evolution: &Evolution,
        settings: &CheckSettings,
    ) -> Result<Vec<Check>, ModelError> {
        let Some((_, first)) = evolution.snapshots.first() else { return Ok(Vec::new()) };
        let n0 = first_moment_n(first);
        let drift = evolution.snapshots.iter().map(|(_, f)| ((first_moment_n(f) - n0) / n0).abs()).fold(0.0, f64::max);
        Ok(vec![Check::at_most("total individuals drift", drift, settings.mass_drift)])
    }

    fn oracle_checks(&self, _: &Evolution, states: &[OracleState]) -> Vec<Check> {
        let sum = |s: &OracleState| s.ensemble.sizes().iter().sum::<f64>();
        let Some(first) = states.first() else { return Vec::new() };
        let s0 = sum(first);
        let drift = states.iter().map(|s| ((sum(s) - s0) / s0).abs()).fold(0.0, f64::max);
        vec![Check::at_most("oracle total individuals drift", drift, 1e-8)]
    }
}
