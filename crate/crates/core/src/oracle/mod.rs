//! Brute-force validation by direct simulation of discrete populations.
//!
//! `u₀` is discretised into a deterministic ensemble, every member's ODE is
//! integrated with fixed-step RK4, and the resulting size histogram is
//! compared with the predicted marginal `ρ(n, t)`.

mod dynamics;
mod ensemble;
mod histogram;

use thiserror::Error;

use crate::grid::GridError;
use crate::initial::DistributionError;

pub use dynamics::{integrate_ensemble, integrate_ensemble_at, FieldHistory, MemberModel, OracleState};
pub use ensemble::{sample_ensemble, sample_field, Ensemble};
pub use histogram::{histogram, l1_distance, uniform_edges, Histogram};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("ensemble must have at least one member")]
    EmptyEnsemble,
    #[error("distribution has zero mass")]
    ZeroMass,
    #[error("histogram edges must be strictly increasing with at least two entries")]
    BadEdges,
    #[error("non-finite member state at step {step}")]
    NonFinite { step: usize },
    #[error("{0}")]
    Shape(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Distribution(#[from] DistributionError),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Axis, AxisName, Field, PhaseGrid};
    use crate::initial::InitialDistribution;

    fn one_member(n: f64, name: AxisName, p: f64) -> Ensemble {
        Ensemble::new(vec![name], vec![n], vec![vec![p]], 1.0).unwrap()
    }

    #[test]
    fn exponential_scalar() {
        let e =
            integrate_ensemble(&MemberModel::Exponential, &one_member(1.0, AxisName::Alpha, 2.0), 1.0, 1e-3).unwrap();
        assert!((e.sizes()[0] - 2f64.exp()).abs() < 1e-8);
    }

    #[test]
    fn logistic_equilibrium() {
        let e = integrate_ensemble(
            &MemberModel::Logistic { k: Some(80.0) },
            &one_member(80.0, AxisName::Gamma, 20.0),
            0.1,
            1e-5,
        )
        .unwrap();
        assert_eq!(e.sizes()[0], 80.0);
    }

    #[test]
    fn competition_without_consumption() {
        let ens = Ensemble::new(vec![AxisName::Beta], vec![1.0, 2.0, 3.0], vec![vec![10.0, 20.0, 30.0]], 1.0).unwrap();
        let model = MemberModel::Competition { c0: 1.5, consumption: 0.0 };
        let out = integrate_ensemble(&model, &ens, 0.05, 1e-5).unwrap();
        for (i, (n0, b)) in [(1.0, 10.0), (2.0, 20.0), (3.0, 30.0)].iter().enumerate() {
            let exact: f64 = n0 * (b * 1.5 * 0.05f64).exp();
            assert!((out.sizes()[i] - exact).abs() <= 1e-8 * exact);
        }
    }

    #[test]
    fn sampling_quota() {
        // uniform on four equal cells
        let g = PhaseGrid::new(vec![Axis::new(AxisName::N, 0.0, 4.0, 5).unwrap()]).unwrap();
        let f = Field::new(g, vec![1.0; 5]).unwrap();
        let e = sample_field(&f, 8).unwrap();
        // first member of each cell at the centre, the second a golden-ratio step on
        let second = (0.5f64 + 0.618_033_988_749_894_9).fract();
        let expected: Vec<f64> = (0..4).flat_map(|c| [c as f64 + 0.5, c as f64 + second]).collect();
        assert_eq!(e.sizes(), expected.as_slice());
        assert!((e.weight() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn sampling_narrow_peak() {
        let g = PhaseGrid::new(vec![
            Axis::new(AxisName::N, 0.0, 10.0, 11).unwrap(),
            Axis::new(AxisName::Alpha, 0.0, 10.0, 11).unwrap(),
        ])
        .unwrap();
        let mut values = vec![0.0; 121];
        // all four corners of cell (3, 6)
        for (i, j) in [(3, 6), (4, 6), (3, 7), (4, 7)] {
            values[i + 11 * j] = 1.0;
        }
        // neighbouring cells share corners: centre 1, edge neighbours 1/2, diagonal 1/4, total 4
        let e = sample_field(&Field::new(g, values).unwrap(), 1000).unwrap();
        assert_eq!(e.len(), 1000);
        let alpha = e.param(AxisName::Alpha).unwrap();
        let centre =
            (0..e.len()).filter(|&i| (3.0..4.0).contains(&e.sizes()[i]) && (6.0..7.0).contains(&alpha[i])).count();
        assert_eq!(centre, 250);
        assert!(e.sizes().iter().all(|n| (2.0..=5.0).contains(n)));
        assert!((e.represented_count() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn sampling_rejects_empty() {
        let g = PhaseGrid::new(vec![Axis::new(AxisName::N, 0.0, 4.0, 5).unwrap()]).unwrap();
        assert_eq!(sample_ensemble(&InitialDistribution::zero(1), &g, 10), Err(OracleError::ZeroMass));
        assert_eq!(sample_ensemble(&InitialDistribution::zero(1), &g, 0), Err(OracleError::EmptyEnsemble));
    }

    #[test]
    fn histogram_densities() {
        let e = Ensemble::new(vec![], vec![1.0; 10], vec![], 1.0).unwrap();
        let h = histogram(&e, &[0.0, 2.0, 4.0]).unwrap();
        assert_eq!(h.densities(), &[5.0, 0.0]);
        assert!(histogram(&e, &[0.0]).is_err());
        assert!(histogram(&e, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn histogram_overflow_bins() {
        let e = Ensemble::new(vec![], vec![0.5, 1.5, 9.0], vec![], 2.0).unwrap();
        let h = histogram(&e, &[1.0, 2.0]).unwrap();
        assert_eq!(h.edges(), &[0.5, 1.0, 2.0, 9.0]);
        assert!((h.total() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn l1_cases() {
        let g = PhaseGrid::new(vec![Axis::new(AxisName::N, 0.0, 4.0, 5).unwrap()]).unwrap();
        let rho = Field::new(g, vec![1.0; 5]).unwrap();
        // four members of weight 1, one per unit bin: identical piecewise-constant densities
        let e = Ensemble::new(vec![], vec![0.5, 1.5, 2.5, 3.5], vec![], 1.0).unwrap();
        let h = histogram(&e, &uniform_edges(0.0, 4.0, 4)).unwrap();
        assert!(l1_distance(&rho, &h).unwrap() < 1e-15);
        let h0 = Histogram::new(uniform_edges(0.0, 4.0, 4), vec![0.0; 4]).unwrap();
        assert!((l1_distance(&rho, &h0).unwrap() - 1.0).abs() < 1e-12);
        let zero = Field::zeros(rho.grid().clone());
        assert_eq!(l1_distance(&zero, &h), Err(OracleError::ZeroMass));
    }
}
