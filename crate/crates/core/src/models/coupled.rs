use serde::Deserialize;
use serde_json::Value;

use crate::check::{Check, CheckSettings};
use crate::closed_form::{ClosedForm, ExponentialModel};
use crate::coupled::{
    biased_run, competition_run, growth_condition, BiasedParams, BiasedRecord, CompetitionParams, CompetitionRecord,
    Termination,
};
use crate::grid::{AxisName, Field, PhaseGrid};
use crate::initial::InitialDistribution;
use crate::oracle::{MemberModel, OracleState};

use super::{invalid, parse_params, relative_sup_diff, Evolution, ModelError, PhaseModel, TimeSeries};

/// Resource level below which the supply counts as spent.
const EXHAUSTED_FRACTION: f64 = 1e-3;

fn default_stride() -> usize {
    1
}

/// Every `stride`-th row, always keeping the last one.
fn strided<T: Copy>(rows: &[T], stride: usize) -> Vec<T> {
    let mut out: Vec<T> = rows.iter().step_by(stride).copied().collect();
    if !(rows.len() - 1).is_multiple_of(stride) {
        out.push(rows[rows.len() - 1]);
    }
    out
}

/// Sup-norm distance from the exponential solution at effective time
/// `rate · t`, relative to the field max.
fn exponential_gap(
    u0: &InitialDistribution,
    grid: &PhaseGrid,
    evolution: &Evolution,
    rate: f64,
) -> Result<f64, ModelError> {
    let mut worst = 0.0f64;
    for (t, field) in &evolution.snapshots {
        let expected = ExponentialModel.snapshot(u0, grid, rate * t)?;
        worst = worst.max(relative_sup_diff(field, &expected)?);
    }
    Ok(worst)
}

/// Growth limited by a shared, consumed resource.
#[derive(Clone, Debug)]
pub struct Competition {
    params: CompetitionParams,
    t_max: Option<f64>,
    stride: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CompetitionConfig {
    c0: f64,
    consumption: f64,
    dt: f64,
    #[serde(default)]
    predictor_corrector: bool,
    /// Keep stepping past the last snapshot, up to this time.
    t_max: Option<f64>,
    #[serde(default = "default_stride")]
    series_stride: usize,
}

struct CompetitionDetail {
    history: Vec<CompetitionRecord>,
    termination: Termination,
    final_field: Field,
}

impl Competition {
    pub fn new(params: CompetitionParams, t_max: Option<f64>, stride: usize) -> Result<Self, ModelError> {
        params.validate()?;
        if stride == 0 {
            return Err(invalid("competition", "series_stride must be at least 1"));
        }
        if t_max.is_some_and(|t| !(t.is_finite() && t >= 0.0)) {
            return Err(invalid("competition", "t_max must be finite and nonnegative"));
        }
        Ok(Competition { params, t_max, stride })
    }

    pub fn from_params(params: &Value) -> Result<Box<dyn PhaseModel>, ModelError> {
        let p: CompetitionConfig = parse_params("competition", params)?;
        let params = CompetitionParams {
            c0: p.c0,
            consumption: p.consumption,
            dt: p.dt,
            predictor_corrector: p.predictor_corrector,
        };
        Ok(Box::new(Competition::new(params, p.t_max, p.series_stride)?))
    }
}

impl PhaseModel for Competition {
    fn name(&self) -> &'static str {
        "competition"
    }

    fn check_keys(&self) -> &'static [&'static str] {
        &["freeze"]
    }

    fn check_setup(&self, u0: &InitialDistribution, grid: &PhaseGrid) -> Result<(), ModelError> {
        if grid.axis_names() != [AxisName::N, AxisName::Beta] {
            return Err(invalid(self.name(), "grid axes must be (n, beta)"));
        }
        if u0.dim() != 2 {
            return Err(invalid(self.name(), "initial distribution must be two-dimensional"));
        }
        Ok(())
    }

    fn evolve(&self, u0: &InitialDistribution, grid: &PhaseGrid, times: &[f64]) -> Result<Evolution, ModelError> {
        let last = times.last().copied().unwrap_or(0.0);
        let t_max = self.t_max.unwrap_or(last);
        if t_max < last {
            return Err(invalid(self.name(), format!("t_max {t_max} precedes the last snapshot time {last}")));
        }
        let traj = competition_run(u0, grid, &self.params, times, t_max)?;
        let history = traj.history().to_vec();
        let rows = strided(&history, self.stride).iter().map(|r| vec![r.t, r.c, r.total_size]).collect();
        Ok(Evolution {
            snapshots: traj.snapshots,
            series: Some(TimeSeries { columns: vec!["t", "c", "N"], rows }),
            fixed_point: Vec::new(),
            failure: None,
            detail: Some(Box::new(CompetitionDetail {
                history,
                termination: traj.termination,
                final_field: traj.final_field,
            })),
        })
    }

    fn member_model(&self, _: &InitialDistribution, _: &PhaseGrid, _: &Evolution) -> Result<MemberModel, ModelError> {
        Ok(MemberModel::Competition { c0: self.params.c0, consumption: self.params.consumption })
    }

    fn checks(
        &self,
        u0: &InitialDistribution,
        grid: &PhaseGrid,
        evolution: &Evolution,
        settings: &CheckSettings,
    ) -> Result<Vec<Check>, ModelError> {
        let detail = evolution
            .detail
            .as_ref()
            .and_then(|d| d.downcast_ref::<CompetitionDetail>())
            .expect("competition evolution carries its history");
        let mut checks = Vec::new();
        let c0 = self.params.c0;
        if self.params.consumption == 0.0 {
            checks.push(Check::at_most(
                "no consumption equals exponential growth at time c0*t",
                exponential_gap(u0, grid, evolution, c0)?,
                1e-12,
            ));
            return Ok(checks);
        }
        let rises = detail.history.windows(2).filter(|w| w[1].total_size > 0.0 && !(w[1].c < w[0].c)).count();
        checks.push(Check::at_most("resource strictly decreasing", rises as f64, 0.0));

        let spent_at = detail.history.iter().find(|r| r.c < EXHAUSTED_FRACTION * c0).map(|r| r.t);
        if let Some(t_spent) = spent_at {
            let mut worst = 0.0f64;
            let mut compared = 0;
            for (t, field) in &evolution.snapshots {
                if *t >= t_spent {
                    worst = worst.max(relative_sup_diff(field, &detail.final_field)?);
                    compared += 1;
                }
            }
            if compared > 0 || detail.termination == Termination::Exhausted {
                checks.push(Check::at_most(
                    "field frozen after resource exhaustion",
                    worst,
                    settings.freeze.unwrap_or(1e-3),
                ));
            }
        }
        Ok(checks)
    }

    /// The oracle integrates `dc/dt = −γ Σn` with RK4, so its resource agrees
    /// with the first-order scheme up to `O(Δt)`.
    fn oracle_checks(&self, evolution: &Evolution, states: &[OracleState]) -> Vec<Check> {
        let Some(detail) = evolution.detail.as_ref().and_then(|d| d.downcast_ref::<CompetitionDetail>()) else {
            return Vec::new();
        };
        let c0 = self.params.c0;
        let half = 0.5 * self.params.dt;
        let mut worst = 0.0f64;
        for s in states {
            if let Some(r) = detail.history.iter().find(|r| (r.t - s.t).abs() <= half) {
                worst = worst.max((r.c.max(0.0) - s.extra[0].max(0.0)).abs() / c0);
            }
        }
        vec![Check::at_most("resource matches oracle (relative to c0)", worst, 0.02)]
    }
}

/// Emigration proportional to size, immigration proportional to growth rate.
#[derive(Clone, Debug)]
pub struct BiasedMigration {
    params: BiasedParams,
    stride: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BiasedConfig {
    beta: f64,
    dt: f64,
    #[serde(default = "default_stride")]
    series_stride: usize,
}

impl BiasedMigration {
    pub fn new(params: BiasedParams, stride: usize) -> Result<Self, ModelError> {
        params.validate()?;
        if stride == 0 {
            return Err(invalid("biased_migration", "series_stride must be at least 1"));
        }
        Ok(BiasedMigration { params, stride })
    }

    pub fn from_params(params: &Value) -> Result<Box<dyn PhaseModel>, ModelError> {
        let p: BiasedConfig = parse_params("biased_migration", params)?;
        Ok(Box::new(BiasedMigration::new(BiasedParams { beta: p.beta, dt: p.dt }, p.series_stride)?))
    }
}

/// Pearson correlation of `n` and the parameter coordinate, weighted by `u`.
pub fn weighted_correlation(field: &Field) -> f64 {
    let grid = field.grid();
    let mut p = [0.0f64; 2];
    let (mut m0, mut mn, mut ma, mut mnn, mut maa, mut mna) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for (i, u) in field.values().iter().enumerate() {
        grid.node(i, &mut p);
        let w = grid.node_weight(i) * u;
        m0 += w;
        mn += w * p[0];
        ma += w * p[1];
        mnn += w * p[0] * p[0];
        maa += w * p[1] * p[1];
        mna += w * p[0] * p[1];
    }
    let (en, ea) = (mn / m0, ma / m0);
    let cov = mna / m0 - en * ea;
    let vn = mnn / m0 - en * en;
    let va = maa / m0 - ea * ea;
    cov / (vn * va).sqrt()
}

impl PhaseModel for BiasedMigration {
    fn name(&self) -> &'static str {
        "biased_migration"
    }

    fn check_keys(&self) -> &'static [&'static str] {
        &["a_drift", "min_correlation"]
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
        let traj = biased_run(u0, grid, &self.params, times)?;
        let history = traj.history().to_vec();
        let rows = strided(&history, self.stride).iter().map(|r| vec![r.t, r.r, r.total_size]).collect();
        Ok(Evolution {
            snapshots: traj.snapshots,
            series: Some(TimeSeries { columns: vec!["t", "R", "N"], rows }),
            fixed_point: Vec::new(),
            failure: None,
            detail: Some(Box::new(history)),
        })
    }

    fn member_model(&self, _: &InitialDistribution, _: &PhaseGrid, _: &Evolution) -> Result<MemberModel, ModelError> {
        Ok(MemberModel::BiasedMigration { beta: self.params.beta })
    }

    fn checks(
        &self,
        u0: &InitialDistribution,
        grid: &PhaseGrid,
        evolution: &Evolution,
        settings: &CheckSettings,
    ) -> Result<Vec<Check>, ModelError> {
        let history = evolution
            .detail
            .as_ref()
            .and_then(|d| d.downcast_ref::<Vec<BiasedRecord>>())
            .expect("biased evolution carries its history");
        let mut checks = Vec::new();
        if self.params.beta == 0.0 {
            checks.push(Check::at_most(
                "zero emigration equals exponential growth",
                exponential_gap(u0, grid, evolution, 1.0)?,
                1e-12,
            ));
        }
        let a = history[0].a_recomputed;
        let drift = history.iter().map(|r| ((r.a_recomputed - a) / a).abs()).fold(0.0, f64::max);
        checks.push(Check::at_most("frozen A matches recomputed A", drift, settings.a_drift.unwrap_or(0.02)));
        if let (Some(min), Some((t, field))) = (settings.min_correlation, evolution.snapshots.last()) {
            checks.push(Check::at_least(format!("n-alpha correlation at t={t}"), weighted_correlation(field), min));
        }
        Ok(checks)
    }

    fn oracle_checks(&self, _: &Evolution, states: &[OracleState]) -> Vec<Check> {
        let beta = self.params.beta;
        if beta <= 0.0 {
            return Vec::new();
        }
        let mut mismatches = 0usize;
        let mut imbalance = 0.0f64;
        for s in states {
            let n = s.ensemble.sizes();
            let alpha = s.ensemble.param(AxisName::Alpha).expect("alpha column");
            let sum_n: f64 = n.iter().sum();
            let sum_alpha: f64 = alpha.iter().sum();
            let ratio = sum_n / sum_alpha;
            let mut migration = 0.0;
            for (ni, ai) in n.iter().zip(alpha) {
                let arrive = ai * beta * ratio;
                migration += arrive - beta * ni;
                let rate = (ai - beta) * ni + arrive;
                // exact ties are ambiguous within rounding
                if rate.abs() <= 1e-12 * (ai * ni + arrive) {
                    continue;
                }
                let grows = growth_condition(*ai, *ni, sum_alpha, sum_n, beta).expect("positive sums and beta");
                if grows != (rate > 0.0) {
                    mismatches += 1;
                }
            }
            imbalance = imbalance.max(migration.abs() / (beta * sum_n));
        }
        vec![
            Check::at_most("growth condition matches member growth sign (mismatches)", mismatches as f64, 0.0),
            Check::at_most("migration terms balance", imbalance, 1e-8),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Axis;

    #[test]
    fn stride_keeps_last_row() {
        assert_eq!(strided(&[0, 1, 2, 3, 4], 2), vec![0, 2, 4]);
        assert_eq!(strided(&[0, 1, 2, 3, 4, 5], 2), vec![0, 2, 4, 5]);
        assert_eq!(strided(&[0], 3), vec![0]);
    }

    #[test]
    fn correlation_of_diagonal_ridge() {
        let g = PhaseGrid::new(vec![
            Axis::new(AxisName::N, 0.0, 10.0, 101).unwrap(),
            Axis::new(AxisName::Alpha, 0.0, 10.0, 101).unwrap(),
        ])
        .unwrap();
        let ridge = Field::from_fn(g.clone(), |p| (-(p[0] - p[1]).powi(2) / 0.1).exp()).unwrap();
        assert!(weighted_correlation(&ridge) > 0.99);
        let anti = Field::from_fn(g.clone(), |p| (-(p[0] + p[1] - 10.0).powi(2) / 0.1).exp()).unwrap();
        assert!(weighted_correlation(&anti) < -0.99);
        let round = Field::from_fn(g, |p| (-((p[0] - 5.0).powi(2) + (p[1] - 5.0).powi(2))).exp()).unwrap();
        assert!(weighted_correlation(&round).abs() < 1e-9);
    }
}
