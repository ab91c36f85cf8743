//! Phase-space distribution dynamics for large collections of populations.
//!
//! Instead of integrating one ODE per population, the count density
//! `u(n, params, t)` over population size and growth parameters is evolved
//! with a phase-space continuity equation. Uncoupled models have closed-form
//! solutions ([`closed_form`]); resource competition and biased migration
//! are stepped in time ([`coupled`]); growth that depends on `u` itself is
//! solved by fixed-point iteration ([`self_interaction`]). Every model can
//! be checked against a direct ensemble simulation ([`oracle`]).
//!
//! Models are exposed behind the [`models::PhaseModel`] trait and looked up
//! by name in a [`models::ModelRegistry`]; [`scenario`] parses the JSON
//! scenario files that drive the `phasepop` command-line tool and
//! [`runner`] executes them.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod check;
pub mod closed_form;
pub mod coupled;
pub mod grid;
pub mod initial;
pub mod models;
pub mod oracle;
pub mod runner;
pub mod scenario;
pub mod self_interaction;

pub use grid::{Axis, AxisName, Field, PhaseGrid};
pub use initial::{GaussianComponent, InitialDistribution};
