//! JSON scenario files: one model, grid, initial distribution and snapshot
//! list per file.
//!
//! ```json
//! {
//!   "model": "exponential",
//!   "grid": { "axes": [
//!     { "name": "n", "lo": 0, "hi": 60, "count": 601 },
//!     { "name": "alpha", "lo": 0, "hi": 40, "count": 201 } ] },
//!   "initial": { "components": [ { "center": [15, 20], "sigma": [2, 2], "weight": 1 } ] },
//!   "times": [0, 0.015, 0.03],
//!   "oracle": { "enabled": true, "members": 100000, "dt": 1e-5, "bins": 200 },
//!   "output_dir": "out/exponential"
//! }
//! ```
//!
//! Unknown keys are rejected everywhere, including inside `params`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::Value;

use crate::check::CheckSettings;
use crate::grid::PhaseGrid;
use crate::initial::{GaussianComponent, InitialDistribution, Support};
use crate::models::{ModelRegistry, PhaseModel};

/// Overrides `output_dir` when set.
pub const OUTPUT_DIR_ENV: &str = "PHASEPOP_OUTPUT_DIR";

const DEFAULT_OUTPUT_DIR: &str = "phasepop-output";

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub model: String,
    /// Free-text remarks per parameter; ignored by the solvers.
    #[serde(default)]
    pub notes: BTreeMap<String, String>,
    pub grid: PhaseGrid,
    pub initial: InitialSpec,
    #[serde(default)]
    pub params: Value,
    pub times: Vec<f64>,
    #[serde(default)]
    pub oracle: OracleSpec,
    #[serde(default)]
    pub checks: CheckSettings,
    pub output_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub components: Vec<GaussianComponent>,
    /// Box outside which `u₀` vanishes; defaults to the nonnegative orthant.
    /// `null` upper bounds are unbounded.
    pub support: Option<SupportSpec>,
    /// Rescale so the sampled distribution integrates to this count.
    pub total_count: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupportSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<Option<f64>>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSpec {
    pub enabled: bool,
    pub members: usize,
    pub dt: f64,
    pub bins: usize,
    /// Largest acceptable relative L1 distance per snapshot.
    pub l1_threshold: f64,
}

impl Default for OracleSpec {
    fn default() -> Self {
        OracleSpec { enabled: false, members: 100_000, dt: 1e-5, bins: 200, l1_threshold: 0.05 }
    }
}

fn validate_times(times: &[f64]) -> Result<(), String> {
    if times.is_empty() {
        return Err("times must list at least one snapshot".into());
    }
    if let Some(t) = times.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
        return Err(format!("snapshot time {t} must be finite and nonnegative"));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err("snapshot times must be strictly increasing".into());
    }
    Ok(())
}

#[derive(Debug)]
pub struct ScenarioError {
    pub path: Option<PathBuf>,
    /// 1-based line in the scenario file, when known.
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.path, self.line) {
            (Some(p), Some(l)) => write!(f, "{}:{l}: {}", p.display(), self.message),
            (Some(p), None) => write!(f, "{}: {}", p.display(), self.message),
            (None, Some(l)) => write!(f, "line {l}: {}", self.message),
            (None, None) => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ScenarioError {}

/// A validated scenario, ready to run.
pub struct Scenario {
    pub config: ScenarioConfig,
    pub model: Box<dyn PhaseModel>,
    pub grid: PhaseGrid,
    pub u0: InitialDistribution,
}

impl fmt::Debug for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Scenario").field("model", &self.model.name()).field("config", &self.config).finish()
    }
}

/// First line of `text` that mentions the JSON key `key`.
fn line_of(text: &str, key: &str) -> Option<usize> {
    let quoted = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&quoted)).map(|i| i + 1)
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScenarioError {
            path: Some(path.to_path_buf()),
            line: None,
            message: format!("cannot read scenario: {e}"),
        })?;
        Scenario::from_json(&text, &ModelRegistry::builtin()).map_err(|mut e| {
            e.path = Some(path.to_path_buf());
            e
        })
    }

    pub fn from_json(text: &str, registry: &ModelRegistry) -> Result<Scenario, ScenarioError> {
        let config: ScenarioConfig = serde_json::from_str(text).map_err(|e| ScenarioError {
            path: None,
            line: (e.line() > 0).then_some(e.line()),
            message: e.to_string(),
        })?;
        Scenario::from_config(config, registry).map_err(|(key, message)| ScenarioError {
            path: None,
            line: line_of(text, key),
            message,
        })
    }

    /// Validates an in-memory config. Errors carry the top-level key at fault.
    pub fn from_config(config: ScenarioConfig, registry: &ModelRegistry) -> Result<Scenario, (&'static str, String)> {
        validate_times(&config.times).map_err(|m| ("times", m))?;
        let model = registry.build(&config.model, &config.params).map_err(|e| {
            let key = if registry.contains(&config.model) { "params" } else { "model" };
            (key, e.to_string())
        })?;
        let grid = config.grid.clone();

        let spec = &config.initial;
        let mut u0 = InitialDistribution::mixture(spec.components.clone()).map_err(|e| ("initial", e.to_string()))?;
        if let Some(s) = &spec.support {
            let hi = s.hi.iter().map(|h| h.unwrap_or(f64::INFINITY)).collect();
            let support = Support::new(s.lo.clone(), hi).map_err(|e| ("support", e.to_string()))?;
            u0 = u0.with_support(support).map_err(|e| ("support", e.to_string()))?;
        }
        if let Some(count) = spec.total_count {
            u0 = u0.normalize_to_count(count, &grid).map_err(|e| ("total_count", e.to_string()))?;
        }
        model.check_setup(&u0, &grid).map_err(|e| ("grid", e.to_string()))?;

        for key in config.checks.model_specific_keys() {
            if !model.check_keys().contains(&key) {
                return Err(("checks", format!("check `{key}` does not apply to model {}", model.name())));
            }
        }
        let o = &config.oracle;
        if o.members == 0 || o.bins == 0 {
            return Err(("oracle", "oracle members and bins must be positive".into()));
        }
        if !(o.dt.is_finite() && o.dt > 0.0) {
            return Err(("oracle", format!("oracle dt must be positive, got {}", o.dt)));
        }
        if !(o.l1_threshold >= 0.0) {
            return Err(("oracle", "l1_threshold must be nonnegative".into()));
        }
        Ok(Scenario { config, model, grid, u0 })
    }

    /// `$PHASEPOP_OUTPUT_DIR`, else the configured directory, else a default.
    pub fn output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => self.config.output_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR)),
        }
    }
}
