//! Analytic initial distributions `u₀`.
//!
//! Every closed-form and implicit solution evaluates `u₀` at characteristic
//! feet that fall between grid nodes, so the primary representation is a
//! truncated sum of axis-aligned Gaussians evaluated exactly. A tabulated
//! form with multilinear interpolation exists for data-driven inputs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{integrate, Field, GridError, PhaseGrid};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistributionError {
    #[error("point has {got} coordinates, distribution has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("distribution has zero mass on the grid")]
    ZeroMass,
    #[error("invalid component: {0}")]
    InvalidComponent(String),
    #[error("target count must be positive and finite, got {0}")]
    InvalidCount(f64),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// One weighted Gaussian bump. `weight` is the untruncated mass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianComponent {
    pub center: Vec<f64>,
    pub sigma: Vec<f64>,
    pub weight: f64,
}

impl GaussianComponent {
    pub fn new(center: Vec<f64>, sigma: Vec<f64>, weight: f64) -> Result<Self, DistributionError> {
        let c = GaussianComponent { center, sigma, weight };
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> Result<(), DistributionError> {
        let bad = |m: &str| Err(DistributionError::InvalidComponent(m.to_string()));
        if self.center.is_empty() || self.center.len() != self.sigma.len() {
            return bad("center and sigma must have the same nonzero length");
        }
        if self.center.iter().any(|c| !c.is_finite()) {
            return bad("center must be finite");
        }
        if self.sigma.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return bad("sigma must be positive");
        }
        if !(self.weight.is_finite() && self.weight > 0.0) {
            return bad("weight must be positive");
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Density at `point` (no support truncation).
    #[inline]
    pub fn density(&self, point: &[f64]) -> f64 {
        let mut expo = 0.0;
        let mut norm = self.weight;
        for ((x, c), s) in point.iter().zip(&self.center).zip(&self.sigma) {
            let z = (x - c) / s;
            expo += z * z;
            norm /= s * SQRT_2PI;
        }
        norm * (-0.5 * expo).exp()
    }

    /// Peak value `weight / Π(√(2π)·σ)`.
    pub fn peak(&self) -> f64 {
        self.density(&self.center)
    }
}

const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

/// Closed box outside which `u₀` vanishes. `hi` entries may be infinite.
#[derive(Clone, Debug, PartialEq)]
pub struct Support {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Support {
    /// The nonnegative orthant.
    pub fn orthant(dim: usize) -> Self {
        Support { lo: vec![0.0; dim], hi: vec![f64::INFINITY; dim] }
    }

    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, DistributionError> {
        if lo.len() != hi.len() || lo.iter().zip(&hi).any(|(l, h)| !(l < h) || l.is_nan()) {
            return Err(DistributionError::InvalidComponent("support box must satisfy lo < hi".into()));
        }
        Ok(Support { lo, hi })
    }

    #[inline]
    pub fn contains(&self, point: &[f64]) -> bool {
        point.iter().zip(self.lo.iter().zip(&self.hi)).all(|(x, (l, h))| *x >= *l && *x <= *h)
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Source {
    Mixture(Vec<GaussianComponent>),
    Tabulated(Field),
}

/// The initial count density `u₀`, evaluable anywhere in phase space.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialDistribution {
    dim: usize,
    source: Source,
    support: Support,
}

impl InitialDistribution {
    /// Sum of Gaussians truncated to the nonnegative orthant.
    pub fn mixture(components: Vec<GaussianComponent>) -> Result<Self, DistributionError> {
        let dim = components
            .first()
            .map(GaussianComponent::dim)
            .ok_or_else(|| DistributionError::InvalidComponent("at least one component required".into()))?;
        for c in &components {
            c.validate()?;
            if c.dim() != dim {
                return Err(DistributionError::DimensionMismatch { expected: dim, got: c.dim() });
            }
        }
        Ok(InitialDistribution { dim, source: Source::Mixture(components), support: Support::orthant(dim) })
    }

    /// Single Gaussian of unit mass.
    pub fn gaussian(center: Vec<f64>, sigma: Vec<f64>) -> Result<Self, DistributionError> {
        Self::mixture(vec![GaussianComponent::new(center, sigma, 1.0)?])
    }

    /// The identically zero distribution.
    pub fn zero(dim: usize) -> Self {
        InitialDistribution { dim, source: Source::Mixture(Vec::new()), support: Support::orthant(dim) }
    }

    /// Tabulated samples, interpolated multilinearly and zero off the grid.
    pub fn tabulated(field: Field) -> Self {
        let dim = field.grid().dim();
        InitialDistribution { dim, source: Source::Tabulated(field), support: Support::orthant(dim) }
    }

    pub fn with_support(mut self, support: Support) -> Result<Self, DistributionError> {
        if support.lo.len() != self.dim {
            return Err(DistributionError::DimensionMismatch { expected: self.dim, got: support.lo.len() });
        }
        self.support = support;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn support(&self) -> &Support {
        &self.support
    }

    pub fn components(&self) -> &[GaussianComponent] {
        match &self.source {
            Source::Mixture(c) => c,
            Source::Tabulated(_) => &[],
        }
    }

    pub fn eval_u0(&self, point: &[f64]) -> Result<f64, DistributionError> {
        if point.len() != self.dim {
            return Err(DistributionError::DimensionMismatch { expected: self.dim, got: point.len() });
        }
        Ok(self.value(point))
    }

    /// Unchecked evaluation for solver inner loops; `point.len()` must equal
    /// [`dim`](Self::dim).
    #[inline]
    pub fn value(&self, point: &[f64]) -> f64 {
        debug_assert_eq!(point.len(), self.dim);
        if !self.support.contains(point) {
            return 0.0;
        }
        match &self.source {
            Source::Mixture(cs) => cs.iter().map(|c| c.density(point)).sum(),
            Source::Tabulated(f) => f.interpolate(point),
        }
    }

    /// Copy with every value multiplied by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Self {
        let source = match &self.source {
            Source::Mixture(cs) => Source::Mixture(
                cs.iter().map(|c| GaussianComponent { weight: c.weight * factor, ..c.clone() }).collect(),
            ),
            Source::Tabulated(f) => {
                let values = f.values().iter().map(|v| v * factor).collect();
                Source::Tabulated(Field::new(f.grid().clone(), values).expect("positive scaling keeps samples valid"))
            }
        };
        InitialDistribution { dim: self.dim, source, support: self.support.clone() }
    }

    pub fn sample(&self, grid: &PhaseGrid) -> Result<Field, DistributionError> {
        if grid.dim() != self.dim {
            return Err(DistributionError::DimensionMismatch { expected: self.dim, got: grid.dim() });
        }
        Ok(Field::from_fn(grid.clone(), |p| self.value(p))?)
    }

    /// Rescales so the trapezoid integral of the sampled distribution is `count`.
    pub fn normalize_to_count(&self, count: f64, grid: &PhaseGrid) -> Result<Self, DistributionError> {
        if !(count.is_finite() && count > 0.0) {
            return Err(DistributionError::InvalidCount(count));
        }
        let mass = integrate(&self.sample(grid)?);
        if !(mass > 0.0) {
            return Err(DistributionError::ZeroMass);
        }
        Ok(self.scaled(count / mass))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Axis, AxisName};
    use std::f64::consts::PI;

    fn grid_1d(hi: f64, m: usize) -> PhaseGrid {
        PhaseGrid::new(vec![Axis::new(AxisName::N, 0.0, hi, m).unwrap()]).unwrap()
    }

    fn fig1() -> InitialDistribution {
        InitialDistribution::gaussian(vec![15.0, 20.0], vec![2.0, 2.0]).unwrap()
    }

    #[test]
    fn zero_outside_support() {
        let d = fig1();
        assert_eq!(d.eval_u0(&[-0.1, 20.0]).unwrap(), 0.0);
        assert_eq!(d.eval_u0(&[15.0, -1e-9]).unwrap(), 0.0);
        let boxed = fig1().with_support(Support::new(vec![10.0, 10.0], vec![20.0, 30.0]).unwrap()).unwrap();
        assert_eq!(boxed.value(&[20.5, 20.0]), 0.0);
        assert!(boxed.value(&[20.0, 20.0]) > 0.0);
    }

    #[test]
    fn peak_value() {
        let d = fig1();
        let expected = 1.0 / (2.0 * PI * 2.0 * 2.0);
        assert!((d.eval_u0(&[15.0, 20.0]).unwrap() - expected).abs() < 1e-16);
        assert_eq!(d.components()[0].peak(), d.value(&[15.0, 20.0]));
    }

    #[test]
    fn dimension_mismatch() {
        assert_eq!(fig1().eval_u0(&[1.0]), Err(DistributionError::DimensionMismatch { expected: 2, got: 1 }));
        assert!(fig1().sample(&grid_1d(1.0, 3)).is_err());
        assert!(InitialDistribution::mixture(vec![
            GaussianComponent::new(vec![1.0], vec![1.0], 1.0).unwrap(),
            GaussianComponent::new(vec![1.0, 1.0], vec![1.0, 1.0], 1.0).unwrap(),
        ])
        .is_err());
    }

    #[test]
    fn component_validation() {
        assert!(GaussianComponent::new(vec![1.0], vec![0.0], 1.0).is_err());
        assert!(GaussianComponent::new(vec![1.0], vec![1.0], 0.0).is_err());
        assert!(GaussianComponent::new(vec![1.0, 2.0], vec![1.0], 1.0).is_err());
    }

    #[test]
    fn zero_distribution_samples_to_zero() {
        let f = InitialDistribution::zero(1).sample(&grid_1d(10.0, 11)).unwrap();
        assert!(f.values().iter().all(|v| *v == 0.0));
        assert_eq!(
            InitialDistribution::zero(1).normalize_to_count(1.0, &grid_1d(10.0, 11)),
            Err(DistributionError::ZeroMass)
        );
    }

    #[test]
    fn sample_matches_eval_at_nodes() {
        let g = PhaseGrid::new(vec![
            Axis::new(AxisName::N, 0.0, 30.0, 31).unwrap(),
            Axis::new(AxisName::Alpha, 0.0, 40.0, 21).unwrap(),
        ])
        .unwrap();
        let d = fig1();
        let f = d.sample(&g).unwrap();
        let mut p = [0.0; 2];
        for i in [0, 17, 300, 650] {
            g.node(i, &mut p);
            assert_eq!(f.values()[i], d.eval_u0(&p).unwrap());
        }
    }

    #[test]
    fn double_peak_has_two_maxima() {
        let d = InitialDistribution::mixture(vec![
            GaussianComponent::new(vec![4.2], vec![0.6], 0.5).unwrap(),
            GaussianComponent::new(vec![7.2], vec![0.6], 0.5).unwrap(),
        ])
        .unwrap();
        let f = d.sample(&grid_1d(12.0, 601)).unwrap();
        let v = f.values();
        let maxima = (1..v.len() - 1).filter(|&i| v[i] > v[i - 1] && v[i] > v[i + 1]).count();
        assert_eq!(maxima, 2);
    }

    #[test]
    fn normalization() {
        let g = grid_1d(30.0, 301);
        let d = InitialDistribution::gaussian(vec![15.0], vec![2.0]).unwrap();
        let once = d.normalize_to_count(1.0, &g).unwrap();
        // already unit mass up to truncation far in the tails
        assert!((once.components()[0].weight - 1.0).abs() < 1e-9);
        let doubled = once.normalize_to_count(2.0, &g).unwrap();
        assert!((doubled.components()[0].weight - 2.0 * once.components()[0].weight).abs() < 1e-12);
        assert_eq!(d.normalize_to_count(0.0, &g), Err(DistributionError::InvalidCount(0.0)));
    }

    #[test]
    fn tabulated_interpolates() {
        let g = grid_1d(4.0, 5);
        let f = Field::from_fn(g, |p| p[0]).unwrap();
        let d = InitialDistribution::tabulated(f);
        assert!((d.value(&[2.5]) - 2.5).abs() < 1e-15);
        assert_eq!(d.value(&[4.5]), 0.0);
        assert!((d.scaled(2.0).value(&[1.5]) - 3.0).abs() < 1e-15);
    }
}
