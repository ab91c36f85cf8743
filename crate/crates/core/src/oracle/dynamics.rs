use rayon::prelude::*;

use crate::grid::{AxisName, Field};

use super::{Ensemble, OracleError};

/// Converged self-interaction fields at increasing times; `u` between them
/// is linear in time and bilinear in `(n, α)`.
#[derive(Clone, Debug)]
pub struct FieldHistory {
    times: Vec<f64>,
    fields: Vec<Field>,
}

impl FieldHistory {
    pub fn new(times: Vec<f64>, fields: Vec<Field>) -> Result<Self, OracleError> {
        if times.is_empty() || times.len() != fields.len() || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(OracleError::Shape("field history needs increasing times, one field each".into()));
        }
        Ok(FieldHistory { times, fields })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn value(&self, n: f64, alpha: f64, t: f64) -> f64 {
        let p = [n, alpha];
        let last = self.times.len() - 1;
        if t <= self.times[0] {
            return self.fields[0].interpolate(&p);
        }
        if t >= self.times[last] {
            return self.fields[last].interpolate(&p);
        }
        let j = self.times.partition_point(|s| *s <= t) - 1;
        let w = (t - self.times[j]) / (self.times[j + 1] - self.times[j]);
        (1.0 - w) * self.fields[j].interpolate(&p) + w * self.fields[j + 1].interpolate(&p)
    }
}

/// Member-level ODE for each model.
#[derive(Clone, Debug)]
pub enum MemberModel {
    /// `dn/dt = α n`.
    Exponential,
    /// `dn/dt = γ n (k − n)`; `k` fixed, or read from the `k` parameter.
    Logistic { k: Option<f64> },
    /// `dn/dt = β (n̄ − n)` with `n̄` the ensemble mean.
    RandomMigration { beta: f64 },
    /// `dn/dt = β n c₊`, `dc/dt = −γ Σ n`. Growth stops once `c` is spent.
    Competition { c0: f64, consumption: f64 },
    /// `dn/dt = (α − β) n + αβ Σn / Σα`.
    BiasedMigration { beta: f64 },
    /// `dn/dt = α n u(n, α, t) δ` with `u` from the solver.
    SelfInteraction { delta: f64, field: FieldHistory },
}

impl MemberModel {
    /// Extra global state carried alongside the members.
    pub fn extra_state(&self) -> Vec<f64> {
        match self {
            MemberModel::Competition { c0, .. } => vec![*c0],
            _ => Vec::new(),
        }
    }

    fn required_param(&self) -> Option<AxisName> {
        match self {
            MemberModel::Exponential | MemberModel::BiasedMigration { .. } | MemberModel::SelfInteraction { .. } => {
                Some(AxisName::Alpha)
            }
            MemberModel::Logistic { .. } => Some(AxisName::Gamma),
            MemberModel::Competition { .. } => Some(AxisName::Beta),
            MemberModel::RandomMigration { .. } => None,
        }
    }

    /// Right-hand side for all members at once. `y` holds the sizes followed
    /// by any extra state.
    pub fn rhs(&self, ens: &Ensemble, t: f64, y: &[f64], dy: &mut [f64]) {
        let m = ens.len();
        let (n, extra) = y.split_at(m);
        let (dn, dextra) = dy.split_at_mut(m);
        let col = |name| ens.param(name).expect("validated parameter column");
        match self {
            MemberModel::Exponential => {
                let alpha = col(AxisName::Alpha);
                dn.par_iter_mut().enumerate().for_each(|(i, d)| *d = alpha[i] * n[i]);
            }
            MemberModel::Logistic { k } => {
                let gamma = col(AxisName::Gamma);
                let kcol = ens.param(AxisName::K);
                dn.par_iter_mut().enumerate().for_each(|(i, d)| {
                    let ki = k.unwrap_or_else(|| kcol.expect("k column")[i]);
                    *d = gamma[i] * n[i] * (ki - n[i]);
                });
            }
            MemberModel::RandomMigration { beta } => {
                let nbar = n.iter().sum::<f64>() / m as f64;
                dn.par_iter_mut().enumerate().for_each(|(i, d)| *d = beta * (nbar - n[i]));
            }
            MemberModel::Competition { consumption, .. } => {
                let beta = col(AxisName::Beta);
                let c = extra[0];
                let c_pos = c.max(0.0);
                dn.par_iter_mut().enumerate().for_each(|(i, d)| *d = beta[i] * n[i] * c_pos);
                let total: f64 = n.iter().sum::<f64>() * ens.weight();
                dextra[0] = if c > 0.0 { -consumption * total } else { 0.0 };
            }
            MemberModel::BiasedMigration { beta } => {
                let alpha = col(AxisName::Alpha);
                let ratio = n.iter().sum::<f64>() / alpha.iter().sum::<f64>();
                dn.par_iter_mut()
                    .enumerate()
                    .for_each(|(i, d)| *d = (alpha[i] - beta) * n[i] + alpha[i] * beta * ratio);
            }
            MemberModel::SelfInteraction { delta, field } => {
                let alpha = col(AxisName::Alpha);
                dn.par_iter_mut()
                    .enumerate()
                    .for_each(|(i, d)| *d = alpha[i] * n[i] * field.value(n[i], alpha[i], t) * delta);
            }
        }
    }

    fn check(&self, ens: &Ensemble) -> Result<(), OracleError> {
        if let Some(p) = self.required_param() {
            if ens.param(p).is_none() {
                return Err(OracleError::Shape(format!("ensemble lacks parameter {p}")));
            }
        }
        if let MemberModel::Logistic { k: None } = self {
            if ens.param(AxisName::K).is_none() {
                return Err(OracleError::Shape("logistic ensemble without fixed k needs a k column".into()));
            }
        }
        Ok(())
    }
}

/// Ensemble state at one requested time.
#[derive(Clone, Debug)]
pub struct OracleState {
    pub t: f64,
    pub ensemble: Ensemble,
    /// Extra global state (the resource for competition).
    pub extra: Vec<f64>,
}

/// Classical fourth-order Runge–Kutta with fixed steps, reporting the state
/// at each of `times`. Each interval between reported times is split into
/// whole steps no longer than `dt`. `observe` sees `(t, y)` after every step.
pub fn integrate_ensemble_at<F>(
    model: &MemberModel,
    ensemble: &Ensemble,
    times: &[f64],
    dt: f64,
    mut observe: F,
) -> Result<Vec<OracleState>, OracleError>
where
    F: FnMut(f64, &[f64]),
{
    if !(dt.is_finite() && dt > 0.0) {
        return Err(OracleError::Shape(format!("dt must be positive, got {dt}")));
    }
    if times.first().is_some_and(|t| *t < 0.0) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(OracleError::Shape("times must be nonnegative and nondecreasing".into()));
    }
    model.check(ensemble)?;
    let m = ensemble.len();
    let mut y: Vec<f64> = ensemble.sizes().to_vec();
    y.extend(model.extra_state());
    let len = y.len();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![0.0; len], vec![0.0; len], vec![0.0; len], vec![0.0; len], vec![0.0; len]);
    let mut t = 0.0;
    let mut out = Vec::with_capacity(times.len());
    let mut step = 0usize;
    for &target in times {
        let span = target - t;
        let steps = if span > 0.0 { (span / dt - 1e-9).ceil().max(1.0) as usize } else { 0 };
        let h = if steps > 0 { span / steps as f64 } else { 0.0 };
        let t0 = t;
        for s in 0..steps {
            let ts = t0 + s as f64 * h;
            model.rhs(ensemble, ts, &y, &mut k1);
            axpy(&mut tmp, &y, 0.5 * h, &k1);
            model.rhs(ensemble, ts + 0.5 * h, &tmp, &mut k2);
            axpy(&mut tmp, &y, 0.5 * h, &k2);
            model.rhs(ensemble, ts + 0.5 * h, &tmp, &mut k3);
            axpy(&mut tmp, &y, h, &k3);
            model.rhs(ensemble, ts + h, &tmp, &mut k4);
            y.par_iter_mut().enumerate().for_each(|(i, v)| {
                *v += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            });
            step += 1;
            if y[..m].iter().any(|v| !v.is_finite()) || y[m..].iter().any(|v| !v.is_finite()) {
                return Err(OracleError::NonFinite { step });
            }
            observe(t0 + (s + 1) as f64 * h, &y);
        }
        t = target;
        let sizes: Vec<f64> = y[..m].iter().map(|v| v.max(0.0)).collect();
        out.push(OracleState { t, ensemble: ensemble.with_sizes(sizes)?, extra: y[m..].to_vec() });
    }
    Ok(out)
}

/// Integrates to `t_end` and returns the final ensemble.
pub fn integrate_ensemble(
    model: &MemberModel,
    ensemble: &Ensemble,
    t_end: f64,
    dt: f64,
) -> Result<Ensemble, OracleError> {
    let mut states = integrate_ensemble_at(model, ensemble, &[t_end], dt, |_, _| {})?;
    Ok(states.pop().expect("one state").ensemble)
}

fn axpy(out: &mut [f64], y: &[f64], a: f64, k: &[f64]) {
    out.par_iter_mut().enumerate().for_each(|(i, o)| *o = y[i] + a * k[i]);
}
