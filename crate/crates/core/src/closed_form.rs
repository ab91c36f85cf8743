//! Exact solutions for the uncoupled models.
//!
//! Each kernel maps a phase point back along its characteristic to the
//! initial time and rescales `u₀` by the Jacobian of that map. The formulas
//! are arranged so that `t = 0` reproduces `u₀` bit for bit.

use thiserror::Error;

use crate::grid::{first_moment_n, integrate, Field, GridError, PhaseGrid};
use crate::initial::{DistributionError, InitialDistribution};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClosedFormError {
    #[error("n = {n} lies above the carrying capacity k = {k}")]
    OutsideStrip { n: f64, k: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Distribution(#[from] DistributionError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// `u(n, α, t) = e^{−αt} u₀(n e^{−αt}, α)` for `dn/dt = α n`.
#[inline]
pub fn exp_u(u0: &InitialDistribution, n: f64, alpha: f64, t: f64) -> f64 {
    let decay = (-alpha * t).exp();
    decay * u0.value(&[n * decay, alpha])
}

/// Logistic growth `dn/dt = γ n (k − n)` on the strip `0 ≤ n ≤ k`.
///
/// `u0` is either two-dimensional over `(n, γ)` with `k` fixed, or
/// three-dimensional over `(n, γ, k)`.
pub fn logistic_u(u0: &InitialDistribution, n: f64, gamma: f64, k: f64, t: f64) -> Result<f64, ClosedFormError> {
    if n > k {
        return Err(ClosedFormError::OutsideStrip { n, k });
    }
    Ok(logistic_in_strip(u0, n, gamma, k, t))
}

#[inline]
fn logistic_in_strip(u0: &InitialDistribution, n: f64, gamma: f64, k: f64, t: f64) -> f64 {
    let at = |x: f64| {
        if u0.dim() == 2 {
            u0.value(&[x, gamma])
        } else {
            u0.value(&[x, gamma, k])
        }
    };
    if n == k {
        return at(k);
    }
    // k²e/(ne + k − n)² and kne/(ne + k − n), divided through by k
    let e = (-gamma * k * t).exp();
    let one_minus_e = -(-gamma * k * t).exp_m1();
    let denom = 1.0 - (n / k) * one_minus_e;
    let foot = n * e / denom;
    e / (denom * denom) * at(foot)
}

/// Characteristic foot for randomized migration, `n̄ + (n − n̄) e^{βt}`.
///
/// The lower, middle and upper branches of the solution share this
/// expression; it is written as `n + (n − n̄)(e^{βt} − 1)` so `t = 0` is exact.
#[inline]
pub fn migration_foot(n: f64, t: f64, model: &RandomMigrationModel) -> f64 {
    if n == model.nbar {
        model.nbar
    } else {
        n + (n - model.nbar) * (model.beta * t).exp_m1()
    }
}

/// `dn/dt = β (n̄ − n)`: the initial profile shrinks towards `n̄` while its
/// amplitude grows as `e^{βt}`. Pointwise values diverge at `n̄` as `t → ∞`
/// even though the integral stays fixed.
#[inline]
pub fn random_migration_u(u0: &InitialDistribution, n: f64, t: f64, model: &RandomMigrationModel) -> f64 {
    (model.beta * t).exp() * u0.value(&[migration_foot(n, t, model)])
}

/// Equilibrium size `n̄ = N / P` of the sampled initial distribution.
pub fn compute_nbar(u0: &InitialDistribution, grid: &PhaseGrid) -> Result<f64, ClosedFormError> {
    let f = u0.sample(grid)?;
    let mass = integrate(&f);
    if !(mass > 0.0) {
        return Err(DistributionError::ZeroMass.into());
    }
    Ok(first_moment_n(&f) / mass)
}

/// A model with an explicit solution `u(point, t)`.
pub trait ClosedForm: Sync {
    /// Rejects grids the kernel cannot be evaluated on.
    fn check_grid(&self, grid: &PhaseGrid) -> Result<(), ClosedFormError>;

    /// Kernel value at a grid-compatible point; assumes `check_grid` passed.
    fn value(&self, u0: &InitialDistribution, point: &[f64], t: f64) -> f64;

    /// Values along one `n` row; `p` carries the row's parameters.
    fn fill_row(&self, u0: &InitialDistribution, p: &mut [f64], n: &[f64], t: f64, out: &mut [f64]) {
        for (v, x) in out.iter_mut().zip(n) {
            p[0] = *x;
            *v = self.value(u0, p, t);
        }
    }

    fn snapshot(&self, u0: &InitialDistribution, grid: &PhaseGrid, t: f64) -> Result<Field, ClosedFormError> {
        self.check_grid(grid)?;
        if u0.dim() != grid.dim() {
            return Err(DistributionError::DimensionMismatch { expected: grid.dim(), got: u0.dim() }.into());
        }
        let values = grid.map_rows(|_, p, n, out| self.fill_row(u0, p, n, t, out));
        Ok(Field::new(grid.clone(), values)?)
    }
}

/// `dn/dt = α n` on the `(n, α)` plane.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ExponentialModel;

impl ClosedForm for ExponentialModel {
    fn check_grid(&self, grid: &PhaseGrid) -> Result<(), ClosedFormError> {
        if grid.dim() != 2 {
            return Err(ClosedFormError::InvalidParameter("exponential model needs an (n, alpha) grid".into()));
        }
        Ok(())
    }

    fn value(&self, u0: &InitialDistribution, p: &[f64], t: f64) -> f64 {
        exp_u(u0, p[0], p[1], t)
    }

    fn fill_row(&self, u0: &InitialDistribution, p: &mut [f64], n: &[f64], t: f64, out: &mut [f64]) {
        // same arithmetic as `exp_u`, with the decay hoisted out of the row
        let decay = (-p[1] * t).exp();
        for (v, x) in out.iter_mut().zip(n) {
            p[0] = x * decay;
            *v = decay * u0.value(p);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LogisticMode {
    /// `(n, γ)` grid with one carrying capacity for every population.
    FixedK(f64),
    /// `(n, γ, k)` grid.
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogisticModel {
    pub mode: LogisticMode,
}

impl LogisticModel {
    pub fn fixed_k(k: f64) -> Result<Self, ClosedFormError> {
        if !(k.is_finite() && k > 0.0) {
            return Err(ClosedFormError::InvalidParameter(format!("carrying capacity must be positive, got {k}")));
        }
        Ok(LogisticModel { mode: LogisticMode::FixedK(k) })
    }

    pub fn full() -> Self {
        LogisticModel { mode: LogisticMode::Full }
    }
}

impl ClosedForm for LogisticModel {
    fn check_grid(&self, grid: &PhaseGrid) -> Result<(), ClosedFormError> {
        let n_hi = grid.n_axis().hi();
        match self.mode {
            LogisticMode::FixedK(k) => {
                if grid.dim() != 2 {
                    return Err(ClosedFormError::InvalidParameter(
                        "fixed-k logistic model needs an (n, gamma) grid".into(),
                    ));
                }
                if n_hi > k {
                    return Err(ClosedFormError::OutsideStrip { n: n_hi, k });
                }
            }
            LogisticMode::Full => {
                if grid.dim() != 3 {
                    return Err(ClosedFormError::InvalidParameter(
                        "full logistic model needs an (n, gamma, k) grid".into(),
                    ));
                }
                let k_lo = grid.axes()[2].lo();
                if n_hi > k_lo {
                    return Err(ClosedFormError::OutsideStrip { n: n_hi, k: k_lo });
                }
            }
        }
        Ok(())
    }

    fn value(&self, u0: &InitialDistribution, p: &[f64], t: f64) -> f64 {
        let k = match self.mode {
            LogisticMode::FixedK(k) => k,
            LogisticMode::Full => p[2],
        };
        logistic_in_strip(u0, p[0], p[1], k, t)
    }
}

/// Migrants leave at rate `β n` and settle uniformly at random.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RandomMigrationModel {
    beta: f64,
    nbar: f64,
}

impl RandomMigrationModel {
    pub fn new(beta: f64, nbar: f64) -> Result<Self, ClosedFormError> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(ClosedFormError::InvalidParameter(format!(
                "emigration frequency must be positive, got {beta}"
            )));
        }
        if !(nbar.is_finite() && nbar > 0.0) {
            return Err(ClosedFormError::InvalidParameter(format!("equilibrium size must be positive, got {nbar}")));
        }
        Ok(RandomMigrationModel { beta, nbar })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn nbar(&self) -> f64 {
        self.nbar
    }

    /// Where a population of initial size `n0` sits at time `t`.
    pub fn image(&self, n0: f64, t: f64) -> f64 {
        self.nbar + (n0 - self.nbar) * (-self.beta * t).exp()
    }
}

impl ClosedForm for RandomMigrationModel {
    fn check_grid(&self, grid: &PhaseGrid) -> Result<(), ClosedFormError> {
        if grid.dim() != 1 {
            return Err(ClosedFormError::InvalidParameter("random migration needs a one-dimensional n grid".into()));
        }
        Ok(())
    }

    fn value(&self, u0: &InitialDistribution, p: &[f64], t: f64) -> f64 {
        random_migration_u(u0, p[0], t, self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Axis, AxisName};
    use crate::initial::{GaussianComponent, Support};

    fn fig1() -> InitialDistribution {
        InitialDistribution::gaussian(vec![15.0, 20.0], vec![2.0, 2.0]).unwrap()
    }

    #[test]
    fn exp_identity_at_t0_and_alpha0() {
        let u0 = fig1();
        for (n, a) in [(15.0, 20.0), (13.3, 21.7), (0.1, 0.0), (40.0, 3.3)] {
            assert_eq!(exp_u(&u0, n, a, 0.0), u0.value(&[n, a]));
        }
        let flat = InitialDistribution::gaussian(vec![5.0, 0.5], vec![2.0, 2.0]).unwrap();
        for t in [0.0, 0.1, 3.0] {
            assert_eq!(exp_u(&flat, 4.0, 0.0, t), flat.value(&[4.0, 0.0]));
        }
    }

    #[test]
    fn logistic_identities() {
        let u0 = fig1();
        for (n, g) in [(15.0, 20.0), (0.1, 3.0), (79.9, 25.0), (33.3, 19.1)] {
            assert_eq!(logistic_u(&u0, n, g, 80.0, 0.0).unwrap(), u0.value(&[n, g]));
        }
        for t in [0.0, 0.001, 1.0] {
            assert_eq!(logistic_u(&u0, 80.0, 20.0, 80.0, t).unwrap(), u0.value(&[80.0, 20.0]));
        }
        assert_eq!(logistic_u(&u0, 80.5, 20.0, 80.0, 0.0), Err(ClosedFormError::OutsideStrip { n: 80.5, k: 80.0 }));
    }

    #[test]
    fn logistic_grid_checks() {
        let g = PhaseGrid::new(vec![
            Axis::new(AxisName::N, 0.0, 90.0, 10).unwrap(),
            Axis::new(AxisName::Gamma, 0.0, 40.0, 10).unwrap(),
        ])
        .unwrap();
        let m = LogisticModel::fixed_k(80.0).unwrap();
        assert!(matches!(m.snapshot(&fig1(), &g, 0.0), Err(ClosedFormError::OutsideStrip { .. })));
        assert!(LogisticModel::fixed_k(0.0).is_err());
    }

    #[test]
    fn logistic_three_dimensional() {
        let u0 = InitialDistribution::gaussian(vec![15.0, 20.0, 80.0], vec![2.0, 2.0, 3.0]).unwrap();
        let g = PhaseGrid::new(vec![
            Axis::new(AxisName::N, 0.0, 60.0, 61).unwrap(),
            Axis::new(AxisName::Gamma, 0.0, 40.0, 21).unwrap(),
            Axis::new(AxisName::K, 60.0, 100.0, 21).unwrap(),
        ])
        .unwrap();
        let m = LogisticModel::full();
        let f = m.snapshot(&u0, &g, 0.0).unwrap();
        assert_eq!(f, u0.sample(&g).unwrap());
        let bad = PhaseGrid::new(vec![
            Axis::new(AxisName::N, 0.0, 80.0, 61).unwrap(),
            Axis::new(AxisName::Gamma, 0.0, 40.0, 21).unwrap(),
            Axis::new(AxisName::K, 60.0, 100.0, 21).unwrap(),
        ])
        .unwrap();
        assert!(m.check_grid(&bad).is_err());
    }

    #[test]
    fn migration_branches() {
        let u0 = InitialDistribution::gaussian(vec![5.0], vec![1.0]).unwrap();
        let m = RandomMigrationModel::new(1.0, 5.7).unwrap();
        for n in [1.0, 5.0, 5.7, 6.3, 11.0] {
            assert_eq!(random_migration_u(&u0, n, 0.0, &m), u0.value(&[n]));
        }
        let mid = random_migration_u(&u0, 5.7, 1.0, &m);
        assert!((mid - std::f64::consts::E * u0.value(&[5.7])).abs() < 1e-15);
        assert!(RandomMigrationModel::new(0.0, 5.7).is_err());
        assert!(RandomMigrationModel::new(1.0, -1.0).is_err());
    }

    #[test]
    fn migration_support_contracts() {
        let u0 = InitialDistribution::gaussian(vec![5.7], vec![1.0])
            .unwrap()
            .with_support(Support::new(vec![3.7], vec![8.7]).unwrap())
            .unwrap();
        let m = RandomMigrationModel::new(1.0, 5.7).unwrap();
        for t in [0.3, 1.0, 2.0] {
            let lo = m.image(3.7, t);
            let hi = m.image(8.7, t);
            let shrink = (-t).exp();
            assert!(((5.7 - lo) - 2.0 * shrink).abs() < 1e-9);
            assert!(((hi - 5.7) - 3.0 * shrink).abs() < 1e-9);
            assert!(random_migration_u(&u0, lo + 1e-6, t, &m) > 0.0);
            assert_eq!(random_migration_u(&u0, lo - 1e-6, t, &m), 0.0);
            assert!(random_migration_u(&u0, hi - 1e-6, t, &m) > 0.0);
            assert_eq!(random_migration_u(&u0, hi + 1e-6, t, &m), 0.0);
        }
    }

    #[test]
    fn nbar_of_mixtures() {
        let g = PhaseGrid::new(vec![Axis::new(AxisName::N, 0.0, 12.0, 601).unwrap()]).unwrap();
        let single = InitialDistribution::gaussian(vec![5.7], vec![0.6]).unwrap();
        assert!((compute_nbar(&single, &g).unwrap() - 5.7).abs() < 1e-3);
        let narrow = InitialDistribution::gaussian(vec![3.0], vec![0.05]).unwrap();
        assert!((compute_nbar(&narrow, &g).unwrap() - 3.0).abs() < 1e-6);
        let pair = InitialDistribution::mixture(vec![
            GaussianComponent::new(vec![4.0], vec![0.6], 1.0).unwrap(),
            GaussianComponent::new(vec![8.0], vec![0.6], 1.0).unwrap(),
        ])
        .unwrap();
        assert!((compute_nbar(&pair, &g).unwrap() - 6.0).abs() < 1e-3);
        assert!(compute_nbar(&InitialDistribution::zero(1), &g).is_err());
    }

    #[test]
    fn snapshot_at_zero_is_sample() {
        let g = PhaseGrid::new(vec![
            Axis::new(AxisName::N, 0.0, 60.0, 121).unwrap(),
            Axis::new(AxisName::Alpha, 0.0, 40.0, 81).unwrap(),
        ])
        .unwrap();
        let u0 = fig1();
        assert_eq!(ExponentialModel.snapshot(&u0, &g, 0.0).unwrap(), u0.sample(&g).unwrap());
    }
}
