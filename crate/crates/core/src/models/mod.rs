//! Uniform interface over the six phase-space models.
//!
//! Each model implements [`PhaseModel`] and is built from a JSON parameter
//! object by a factory registered under its name in a [`ModelRegistry`].

mod closed;
mod coupled;
mod self_interaction;

use std::any::Any;
use std::collections::BTreeMap;
use std::io::Write;

use serde::de::DeserializeOwned;
use serde_json::Value;
use thiserror::Error;

use crate::check::{Check, CheckSettings};
use crate::closed_form::ClosedFormError;
use crate::coupled::CoupledError;
use crate::grid::{Field, GridError, PhaseGrid};
use crate::initial::{DistributionError, InitialDistribution};
use crate::oracle::{MemberModel, OracleError, OracleState};
use crate::self_interaction::{FixedPointReport, SelfInteractionError};

pub use self::closed::{Exponential, Logistic, RandomMigration};
pub use self::coupled::{BiasedMigration, Competition};
pub use self::self_interaction::SelfInteraction;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unknown model `{name}` (known: {known})")]
    Unknown { name: String, known: String },
    #[error("{model} parameters: {message}")]
    Params { model: &'static str, message: String },
    #[error(transparent)]
    ClosedForm(#[from] ClosedFormError),
    #[error(transparent)]
    Coupled(#[from] CoupledError),
    #[error(transparent)]
    SelfInteraction(#[from] SelfInteractionError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Distribution(#[from] DistributionError),
}

/// A model-specific scalar history, written as one CSV row per record.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<f64>>,
}

impl TimeSeries {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", self.columns.join(","))?;
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// Everything a model produces for one list of snapshot times.
pub struct Evolution {
    /// `(t, u(·, t))` for every requested time that was reached.
    pub snapshots: Vec<(f64, Field)>,
    pub series: Option<TimeSeries>,
    /// One report per converged fixed-point solve.
    pub fixed_point: Vec<FixedPointReport>,
    /// The solve that failed to converge, if any. Snapshots stop before it.
    pub failure: Option<FixedPointReport>,
    /// Model-private state kept for [`PhaseModel::checks`].
    pub detail: Option<Box<dyn Any + Send + Sync>>,
}

impl Evolution {
    pub fn from_snapshots(snapshots: Vec<(f64, Field)>) -> Self {
        Evolution { snapshots, series: None, fixed_point: Vec::new(), failure: None, detail: None }
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|(t, _)| *t).collect()
    }
}

pub trait PhaseModel: Send + Sync {
    fn name(&self) -> &'static str;

    /// Keys of [`CheckSettings`] beyond `mass_drift` that this model reads.
    fn check_keys(&self) -> &'static [&'static str] {
        &[]
    }

    /// Whether mass on the outer faces of the grid means the domain is too
    /// small. False when a face is a natural barrier.
    fn warn_on_boundary(&self) -> bool {
        true
    }

    /// Rejects grids and distributions the model cannot be evaluated on.
    fn check_setup(&self, u0: &InitialDistribution, grid: &PhaseGrid) -> Result<(), ModelError>;

    fn evolve(&self, u0: &InitialDistribution, grid: &PhaseGrid, times: &[f64]) -> Result<Evolution, ModelError>;

    /// The member-level ODE used by the ensemble oracle.
    fn member_model(
        &self,
        u0: &InitialDistribution,
        grid: &PhaseGrid,
        evolution: &Evolution,
    ) -> Result<MemberModel, ModelError>;

    /// Model-specific checks on the solver output.
    fn checks(
        &self,
        _u0: &InitialDistribution,
        _grid: &PhaseGrid,
        _evolution: &Evolution,
        _settings: &CheckSettings,
    ) -> Result<Vec<Check>, ModelError> {
        Ok(Vec::new())
    }

    /// Model-specific checks on the oracle ensemble at the snapshot times
    /// (the first state is the sampled initial ensemble).
    fn oracle_checks(&self, _evolution: &Evolution, _states: &[OracleState]) -> Vec<Check> {
        Vec::new()
    }
}

pub type Factory = fn(&Value) -> Result<Box<dyn PhaseModel>, ModelError>;

/// Model factories by name.
#[derive(Clone, Default)]
pub struct ModelRegistry {
    factories: BTreeMap<&'static str, Factory>,
}

impl ModelRegistry {
    pub fn empty() -> Self {
        ModelRegistry::default()
    }

    /// Registry holding every built-in model.
    pub fn builtin() -> Self {
        let mut r = ModelRegistry::empty();
        r.register("exponential", Exponential::from_params);
        r.register("logistic", Logistic::from_params);
        r.register("random_migration", RandomMigration::from_params);
        r.register("competition", Competition::from_params);
        r.register("biased_migration", BiasedMigration::from_params);
        r.register("self_interaction", SelfInteraction::from_params);
        r
    }

    /// Adds or replaces a factory.
    pub fn register(&mut self, name: &'static str, factory: Factory) {
        self.factories.insert(name, factory);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.factories.keys().copied().collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn build(&self, name: &str, params: &Value) -> Result<Box<dyn PhaseModel>, ModelError> {
        let factory = self
            .factories
            .get(name)
            .ok_or_else(|| ModelError::Unknown { name: name.to_string(), known: self.names().join(", ") })?;
        factory(params)
    }
}

/// Strict decoding of a parameter object; a missing object counts as `{}`.
fn parse_params<P: DeserializeOwned>(model: &'static str, params: &Value) -> Result<P, ModelError> {
    let value = if params.is_null() { Value::Object(Default::default()) } else { params.clone() };
    serde_json::from_value(value).map_err(|e| ModelError::Params { model, message: e.to_string() })
}

fn invalid(model: &'static str, message: impl Into<String>) -> ModelError {
    ModelError::Params { model, message: message.into() }
}

/// `max |a − b| / max |b|` over paired snapshots.
fn relative_sup_diff(a: &Field, b: &Field) -> Result<f64, GridError> {
    let scale = b.max().max(f64::MIN_POSITIVE);
    Ok(crate::grid::sup_norm_diff(a, b)? / scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn builtin_names() {
        let r = ModelRegistry::builtin();
        assert_eq!(
            r.names(),
            ["biased_migration", "competition", "exponential", "logistic", "random_migration", "self_interaction"]
        );
        for name in r.names() {
            assert!(r.contains(name));
        }
    }

    #[test]
    fn unknown_model_lists_known() {
        let err = ModelRegistry::builtin().build("gompertz", &Value::Null).err().unwrap();
        let msg = err.to_string();
        assert!(msg.contains("gompertz") && msg.contains("logistic"), "{msg}");
    }

    #[test]
    fn unknown_parameter_rejected() {
        let r = ModelRegistry::builtin();
        assert!(r.build("exponential", &json!({})).is_ok());
        assert!(r.build("exponential", &json!({"beta": 1.0})).is_err());
        assert!(r.build("logistic", &json!({"k": 80.0, "kk": 1.0})).is_err());
        assert!(r.build("competition", &json!({"c0": 1.0, "consumption": 0.5})).is_err(), "dt is required");
    }

    #[test]
    fn registry_is_extensible() {
        fn fake(_: &Value) -> Result<Box<dyn PhaseModel>, ModelError> {
            Ok(Box::new(Exponential))
        }
        let mut r = ModelRegistry::empty();
        r.register("alias", fake);
        assert_eq!(r.build("alias", &Value::Null).unwrap().name(), "exponential");
    }

    #[test]
    fn series_csv() {
        let s = TimeSeries { columns: vec!["t", "c", "N"], rows: vec![vec![0.0, 1.0, 20.5], vec![0.1, 0.25, 21.0]] };
        let mut out = Vec::new();
        s.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "t,c,N\n0,1,20.5\n0.1,0.25,21\n");
    }
}
