//! Time stepping for the weakly nonlinear models.
//!
//! Both models have an explicit solution once a scalar history is known (the
//! resource integral `ξ(t)` for competition, `ξ(α, t)` for biased
//! migration), and that history in turn depends on moments of `u`. The
//! steppers advance the scalar history with a first-order rule and rebuild
//! the field from `u₀` at every step.

use thiserror::Error;

use crate::closed_form::{ClosedForm, ClosedFormError, ExponentialModel};
use crate::grid::{first_moment_n, first_moment_param, integrate, AxisName, Field, GridError, PhaseGrid};
use crate::initial::{DistributionError, InitialDistribution};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoupledError {
    #[error("resource already exhausted (c = {0})")]
    ResourceExhausted(f64),
    #[error("∬ α u₀ must be positive, got {0}")]
    NonPositiveA(f64),
    #[error("non-finite {what} at step {step}")]
    NonFinite { step: usize, what: &'static str },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Distribution(#[from] DistributionError),
    #[error(transparent)]
    ClosedForm(#[from] ClosedFormError),
}

fn positive(name: &str, v: f64) -> Result<(), CoupledError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(CoupledError::InvalidParameter(format!("{name} must be positive, got {v}")))
    }
}

fn check_grid(grid: &PhaseGrid, param: AxisName, u0: &InitialDistribution) -> Result<(), CoupledError> {
    if grid.dim() != 2 || grid.axes()[1].name() != param {
        return Err(CoupledError::InvalidParameter(format!("model needs an (n, {param}) grid")));
    }
    if u0.dim() != 2 {
        return Err(DistributionError::DimensionMismatch { expected: 2, got: u0.dim() }.into());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Resource competition

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompetitionParams {
    /// Initial resource `c₀`.
    pub c0: f64,
    /// Consumption rate per individual.
    pub consumption: f64,
    pub dt: f64,
    /// Average `c_k` with the provisional `c_{k+1}` when advancing `ξ`.
    pub predictor_corrector: bool,
}

impl CompetitionParams {
    pub fn validate(&self) -> Result<(), CoupledError> {
        positive("c0", self.c0)?;
        positive("dt", self.dt)?;
        if !(self.consumption.is_finite() && self.consumption >= 0.0) {
            return Err(CoupledError::InvalidParameter(format!(
                "consumption must be nonnegative, got {}",
                self.consumption
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompetitionRecord {
    pub t: f64,
    pub c: f64,
    pub total_size: f64,
    pub mass: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompetitionState {
    pub step: usize,
    pub t: f64,
    /// `ξ = ∫₀ᵗ c dτ`.
    pub xi: f64,
    pub c: f64,
    pub total_size: f64,
    pub history: Vec<CompetitionRecord>,
}

/// `e^{−βξ} u₀(n e^{−βξ}, β)`: exponential growth evaluated at effective time `ξ`.
pub fn competition_field(u0: &InitialDistribution, grid: &PhaseGrid, xi: f64) -> Result<Field, CoupledError> {
    Ok(ExponentialModel.snapshot(u0, grid, xi)?)
}

impl CompetitionState {
    pub fn initial(
        u0: &InitialDistribution,
        grid: &PhaseGrid,
        params: &CompetitionParams,
    ) -> Result<(Self, Field), CoupledError> {
        params.validate()?;
        check_grid(grid, AxisName::Beta, u0)?;
        let field = u0.sample(grid)?;
        let total_size = first_moment_n(&field);
        let record = CompetitionRecord { t: 0.0, c: params.c0, total_size, mass: integrate(&field) };
        let state = CompetitionState { step: 0, t: 0.0, xi: 0.0, c: params.c0, total_size, history: vec![record] };
        Ok((state, field))
    }

    pub fn exhausted(&self) -> bool {
        self.c < 0.0
    }
}

/// One step of the resource scheme:
/// `ξ ← ξ + c Δt`, rebuild `u`, `N ← ∬ n u`, `c ← c − γ N Δt`.
pub fn competition_step(
    state: &CompetitionState,
    u0: &InitialDistribution,
    grid: &PhaseGrid,
    params: &CompetitionParams,
) -> Result<(CompetitionState, Field), CoupledError> {
    if state.c < 0.0 {
        return Err(CoupledError::ResourceExhausted(state.c));
    }
    let dt = params.dt;
    let gamma = params.consumption;
    let step = state.step + 1;

    let (xi, field, total_size, c) = if params.predictor_corrector {
        let xi_pred = state.xi + state.c * dt;
        let n_pred = first_moment_n(&competition_field(u0, grid, xi_pred)?);
        let c_pred = state.c - gamma * n_pred * dt;
        let xi = state.xi + 0.5 * (state.c + c_pred) * dt;
        let field = competition_field(u0, grid, xi)?;
        let total = first_moment_n(&field);
        let c = state.c - gamma * 0.5 * (state.total_size + total) * dt;
        (xi, field, total, c)
    } else {
        let xi = state.xi + state.c * dt;
        let field = competition_field(u0, grid, xi)?;
        let total = first_moment_n(&field);
        (xi, field, total, state.c - gamma * total * dt)
    };

    for (v, what) in [(xi, "xi"), (total_size, "total size"), (c, "resource")] {
        if !v.is_finite() {
            return Err(CoupledError::NonFinite { step, what });
        }
    }
    let t = step as f64 * dt;
    let mut history = state.history.clone();
    history.push(CompetitionRecord { t, c, total_size, mass: integrate(&field) });
    Ok((CompetitionState { step, t, xi, c, total_size, history }, field))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    /// The resource went negative.
    Exhausted,
    /// `t_max` was reached.
    TimeLimit,
}

#[derive(Clone, Debug)]
pub struct CompetitionTrajectory {
    /// Field at each requested time. Times after exhaustion hold the frozen
    /// final field.
    pub snapshots: Vec<(f64, Field)>,
    pub final_state: CompetitionState,
    pub final_field: Field,
    pub termination: Termination,
}

impl CompetitionTrajectory {
    pub fn history(&self) -> &[CompetitionRecord] {
        &self.final_state.history
    }
}

/// Runs the resource scheme until `c < 0` or `t_max`, capturing the field at
/// each of `times` (which must be multiples of `dt`, nondecreasing).
pub fn competition_run(
    u0: &InitialDistribution,
    grid: &PhaseGrid,
    params: &CompetitionParams,
    times: &[f64],
    t_max: f64,
) -> Result<CompetitionTrajectory, CoupledError> {
    if !(t_max >= 0.0) {
        return Err(CoupledError::InvalidParameter(format!("t_max must be nonnegative, got {t_max}")));
    }
    let (mut state, mut field) = CompetitionState::initial(u0, grid, params)?;
    let mut snapshots = Vec::with_capacity(times.len());
    let mut pending = times.iter().copied().peekable();
    let tol = 0.5 * params.dt;
    let termination = loop {
        while let Some(&ts) = pending.peek() {
            if ts <= state.t + tol {
                snapshots.push((ts, field.clone()));
                pending.next();
            } else {
                break;
            }
        }
        if state.t + tol >= t_max {
            break Termination::TimeLimit;
        }
        if state.exhausted() {
            break Termination::Exhausted;
        }
        let (next, next_field) = competition_step(&state, u0, grid, params)?;
        state = next;
        field = next_field;
    };
    for ts in pending {
        if termination == Termination::Exhausted {
            snapshots.push((ts, field.clone()));
        }
    }
    Ok(CompetitionTrajectory { snapshots, final_state: state, final_field: field, termination })
}

// ---------------------------------------------------------------------------
// Biased migration

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BiasedParams {
    /// Emigration frequency.
    pub beta: f64,
    pub dt: f64,
}

impl BiasedParams {
    pub fn validate(&self) -> Result<(), CoupledError> {
        positive("dt", self.dt)?;
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(CoupledError::InvalidParameter(format!("beta must be nonnegative, got {}", self.beta)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BiasedRecord {
    pub t: f64,
    pub r: f64,
    pub total_size: f64,
    /// `∬ α u_k` recomputed from the current field.
    pub a_recomputed: f64,
    pub mass: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiasedState {
    pub step: usize,
    pub t: f64,
    /// `ξ(α_j, t)` at the α nodes.
    pub xi: Vec<f64>,
    /// `R = N / A`.
    pub r: f64,
    /// `A = ∬ α u₀`, fixed for the whole run.
    pub a: f64,
    pub beta: f64,
    pub history: Vec<BiasedRecord>,
    alpha_nodes: Vec<f64>,
}

/// `e^{−(α−β)t} u₀(n e^{−(α−β)t} − αβξ, α)`.
#[inline]
pub fn biased_u(u0: &InitialDistribution, n: f64, alpha: f64, t: f64, xi: f64, beta: f64) -> f64 {
    let decay = (-(alpha - beta) * t).exp();
    decay * u0.value(&[n * decay - alpha * beta * xi, alpha])
}

impl BiasedState {
    pub fn initial(
        u0: &InitialDistribution,
        grid: &PhaseGrid,
        params: &BiasedParams,
    ) -> Result<(Self, Field), CoupledError> {
        params.validate()?;
        check_grid(grid, AxisName::Alpha, u0)?;
        let field = u0.sample(grid)?;
        let a = first_moment_param(&field, AxisName::Alpha)?;
        if !(a > 0.0) {
            return Err(CoupledError::NonPositiveA(a));
        }
        let total_size = first_moment_n(&field);
        let r = total_size / a;
        let alpha_nodes = grid.axes()[1].coords();
        let record = BiasedRecord { t: 0.0, r, total_size, a_recomputed: a, mass: integrate(&field) };
        let state = BiasedState {
            step: 0,
            t: 0.0,
            xi: vec![0.0; alpha_nodes.len()],
            r,
            a,
            beta: params.beta,
            history: vec![record],
            alpha_nodes,
        };
        Ok((state, field))
    }

    pub fn total_size(&self) -> f64 {
        self.r * self.a
    }

    /// `ξ` at an arbitrary α, linearly interpolated between nodes and held
    /// constant beyond the ends.
    pub fn xi_at(&self, alpha: f64) -> f64 {
        let nodes = &self.alpha_nodes;
        let last = nodes.len() - 1;
        if alpha <= nodes[0] {
            return self.xi[0];
        }
        if alpha >= nodes[last] {
            return self.xi[last];
        }
        let h = (nodes[last] - nodes[0]) / last as f64;
        let s = (alpha - nodes[0]) / h;
        let j = (s.floor() as usize).min(last - 1);
        let w = s - j as f64;
        (1.0 - w) * self.xi[j] + w * self.xi[j + 1]
    }

    pub fn field(&self, u0: &InitialDistribution, grid: &PhaseGrid) -> Result<Field, CoupledError> {
        let (t, beta) = (self.t, self.beta);
        let values = grid.map_rows(|row, p, n, out| {
            // `biased_u` with the row constants hoisted
            let alpha = p[1];
            let decay = (-(alpha - beta) * t).exp();
            let shift = alpha * beta * self.xi[row];
            for (v, x) in out.iter_mut().zip(n) {
                p[0] = x * decay - shift;
                *v = decay * u0.value(p);
            }
        });
        Ok(Field::new(grid.clone(), values)?)
    }
}

/// One step of the biased-migration scheme:
/// `ξ(α) ← ξ(α) + R e^{−(α−β)t} Δt`, rebuild `u`, `R ← ∬ n u / A`.
pub fn biased_step(
    state: &BiasedState,
    u0: &InitialDistribution,
    grid: &PhaseGrid,
    dt: f64,
) -> Result<(BiasedState, Field), CoupledError> {
    let step = state.step + 1;
    let mut next = state.clone();
    for (xi, alpha) in next.xi.iter_mut().zip(&state.alpha_nodes) {
        *xi += state.r * (-(alpha - state.beta) * state.t).exp() * dt;
    }
    next.step = step;
    next.t = step as f64 * dt;
    let field = next.field(u0, grid)?;
    let total_size = first_moment_n(&field);
    next.r = total_size / state.a;
    if !next.r.is_finite() || next.xi.iter().any(|x| !x.is_finite()) {
        return Err(CoupledError::NonFinite { step, what: "R or xi" });
    }
    next.history.push(BiasedRecord {
        t: next.t,
        r: next.r,
        total_size,
        a_recomputed: first_moment_param(&field, AxisName::Alpha)?,
        mass: integrate(&field),
    });
    Ok((next, field))
}

#[derive(Clone, Debug)]
pub struct BiasedTrajectory {
    pub snapshots: Vec<(f64, Field)>,
    pub final_state: BiasedState,
}

impl BiasedTrajectory {
    pub fn history(&self) -> &[BiasedRecord] {
        &self.final_state.history
    }
}

/// Steps to the last requested time, capturing the field at each of `times`.
pub fn biased_run(
    u0: &InitialDistribution,
    grid: &PhaseGrid,
    params: &BiasedParams,
    times: &[f64],
) -> Result<BiasedTrajectory, CoupledError> {
    let (mut state, mut field) = BiasedState::initial(u0, grid, params)?;
    let t_max = times.last().copied().unwrap_or(0.0);
    let tol = 0.5 * params.dt;
    let mut snapshots = Vec::with_capacity(times.len());
    let mut pending = times.iter().copied().peekable();
    loop {
        while let Some(&ts) = pending.peek() {
            if ts <= state.t + tol {
                snapshots.push((ts, field.clone()));
                pending.next();
            } else {
                break;
            }
        }
        if state.t + tol >= t_max {
            break;
        }
        let (next, next_field) = biased_step(&state, u0, grid, params.dt)?;
        state = next;
        field = next_field;
    }
    Ok(BiasedTrajectory { snapshots, final_state: state })
}

/// Whether population `i` is currently growing under biased migration:
/// `α_i / Σα > (1 − α_i/β) · n_i / Σn`.
pub fn growth_condition(alpha_i: f64, n_i: f64, sum_alpha: f64, sum_n: f64, beta: f64) -> Result<bool, CoupledError> {
    if !(beta > 0.0) {
        return Err(CoupledError::InvalidParameter(format!("beta must be positive, got {beta}")));
    }
    if !(sum_alpha > 0.0 && sum_n > 0.0) {
        return Err(CoupledError::InvalidParameter("sums must be positive".into()));
    }
    Ok(alpha_i / sum_alpha > (1.0 - alpha_i / beta) * n_i / sum_n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::exp_u;
    use crate::grid::{sup_norm_diff, Axis};

    fn grid(param: AxisName) -> PhaseGrid {
        PhaseGrid::new(vec![Axis::new(AxisName::N, 0.0, 60.0, 121).unwrap(), Axis::new(param, 0.0, 40.0, 81).unwrap()])
            .unwrap()
    }

    fn gaussian() -> InitialDistribution {
        InitialDistribution::gaussian(vec![10.0, 20.0], vec![2.0, 2.0]).unwrap()
    }

    #[test]
    fn competition_without_consumption_is_exponential() {
        let g = grid(AxisName::Beta);
        let u0 = gaussian();
        let params = CompetitionParams { c0: 1.5, consumption: 0.0, dt: 1e-3, predictor_corrector: false };
        let run = competition_run(&u0, &g, &params, &[0.0, 0.01, 0.02], 0.02).unwrap();
        assert_eq!(run.termination, Termination::TimeLimit);
        for (t, field) in &run.snapshots {
            let expected = Field::from_fn(g.clone(), |p| exp_u(&u0, p[0], p[1], 1.5 * t)).unwrap();
            assert!(sup_norm_diff(field, &expected).unwrap() <= 1e-12);
        }
        assert!(run.history().iter().all(|r| r.c == 1.5));
    }

    #[test]
    fn competition_zero_distribution() {
        let g = grid(AxisName::Beta);
        let params = CompetitionParams { c0: 1.0, consumption: 0.7, dt: 1e-3, predictor_corrector: false };
        let run = competition_run(&InitialDistribution::zero(2), &g, &params, &[0.0], 0.01).unwrap();
        assert!(run.history().iter().all(|r| r.c == 1.0 && r.total_size == 0.0));
    }

    #[test]
    fn competition_rejects_exhausted_state() {
        let g = grid(AxisName::Beta);
        let params = CompetitionParams { c0: 1.0, consumption: 1.0, dt: 1e-3, predictor_corrector: false };
        let (mut s, _) = CompetitionState::initial(&gaussian(), &g, &params).unwrap();
        s.c = -1e-9;
        assert_eq!(competition_step(&s, &gaussian(), &g, &params).unwrap_err(), CoupledError::ResourceExhausted(-1e-9));
    }

    #[test]
    fn competition_zero_horizon() {
        let g = grid(AxisName::Beta);
        let params = CompetitionParams { c0: 1.0, consumption: 1.0, dt: 1e-3, predictor_corrector: false };
        let run = competition_run(&gaussian(), &g, &params, &[0.0], 0.0).unwrap();
        assert_eq!(run.snapshots.len(), 1);
        assert_eq!(run.final_state.step, 0);
    }

    #[test]
    fn competition_grid_must_be_beta() {
        let params = CompetitionParams { c0: 1.0, consumption: 1.0, dt: 1e-3, predictor_corrector: false };
        assert!(CompetitionState::initial(&gaussian(), &grid(AxisName::Alpha), &params).is_err());
    }

    #[test]
    fn biased_without_emigration_is_exponential() {
        let g = grid(AxisName::Alpha);
        let u0 = gaussian();
        for t in [0.0, 0.01, 0.5] {
            for (n, a) in [(10.0, 20.0), (12.3, 17.1), (30.0, 25.0)] {
                assert_eq!(biased_u(&u0, n, a, t, 0.37, 0.0), exp_u(&u0, n, a, t));
            }
        }
        let run = biased_run(&u0, &g, &BiasedParams { beta: 0.0, dt: 1e-3 }, &[0.0, 0.01]).unwrap();
        let (t, field) = &run.snapshots[1];
        let expected = Field::from_fn(g.clone(), |p| exp_u(&u0, p[0], p[1], *t)).unwrap();
        assert!(sup_norm_diff(field, &expected).unwrap() <= 1e-12);
    }

    #[test]
    fn biased_rejects_zero_a() {
        let g = grid(AxisName::Alpha);
        let err = BiasedState::initial(&InitialDistribution::zero(2), &g, &BiasedParams { beta: 50.0, dt: 1e-3 })
            .unwrap_err();
        assert_eq!(err, CoupledError::NonPositiveA(0.0));
    }

    #[test]
    fn biased_r_times_a_is_total_size() {
        let g = grid(AxisName::Alpha);
        let u0 = InitialDistribution::gaussian(vec![10.0, 20.0], vec![2.0, 0.3]).unwrap();
        let run = biased_run(&u0, &g, &BiasedParams { beta: 50.0, dt: 1e-3 }, &[0.0, 0.005]).unwrap();
        for rec in run.history() {
            assert!((rec.r * run.final_state.a - rec.total_size).abs() <= 1e-9 * rec.total_size);
        }
    }

    #[test]
    fn xi_interpolation() {
        let g = grid(AxisName::Alpha);
        let (mut s, _) = BiasedState::initial(&gaussian(), &g, &BiasedParams { beta: 50.0, dt: 1e-3 }).unwrap();
        s.xi.iter_mut().enumerate().for_each(|(j, x)| *x = j as f64);
        assert!((s.xi_at(0.75) - 1.5).abs() < 1e-12);
        assert_eq!(s.xi_at(-1.0), 0.0);
        assert_eq!(s.xi_at(100.0), 80.0);
    }

    #[test]
    fn growth_condition_cases() {
        // α_i > β: right-hand side is negative
        assert!(growth_condition(60.0, 1e6, 100.0, 10.0, 50.0).unwrap());
        assert!(!growth_condition(10.0, 1e6, 1000.0, 1e6 + 10.0, 50.0).unwrap());
        assert!(growth_condition(1.0, 1.0, 1.0, 1.0, 0.0).is_err());
        assert!(growth_condition(1.0, 1.0, 0.0, 1.0, 1.0).is_err());
    }
}
