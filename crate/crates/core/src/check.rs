//! Named pass/fail measurements reported by `verify`.

use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bound {
    AtMost,
    AtLeast,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub limit: f64,
    pub bound: Bound,
}

impl Check {
    pub fn at_most(name: impl Into<String>, measured: f64, limit: f64) -> Self {
        Check { name: name.into(), measured, limit, bound: Bound::AtMost }
    }

    pub fn at_least(name: impl Into<String>, measured: f64, limit: f64) -> Self {
        Check { name: name.into(), measured, limit, bound: Bound::AtLeast }
    }

    /// NaN never passes.
    pub fn passed(&self) -> bool {
        match self.bound {
            Bound::AtMost => self.measured <= self.limit,
            Bound::AtLeast => self.measured >= self.limit,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.bound {
            Bound::AtMost => "<=",
            Bound::AtLeast => ">=",
        };
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        write!(f, "{verdict}  {}  measured {:e} {op} {:e}", self.name, self.measured, self.limit)
    }
}

/// Tolerances for the checks run by `verify`. Model-specific keys that the
/// chosen model does not use are rejected by the scenario loader.
#[derive(Clone, Debug, PartialEq, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckSettings {
    /// Relative change of `∫u` allowed between snapshots.
    pub mass_drift: f64,
    /// Sup residual of the implicit relation for converged self-interaction
    /// solves (default 1e-3).
    pub residual: Option<f64>,
    /// Relative drift of the recomputed `∬ α u` in biased migration
    /// (default 0.02).
    pub a_drift: Option<f64>,
    /// Sup-norm change, relative to the field max, between competition
    /// snapshots taken after the resource ran out (default 1e-3).
    pub freeze: Option<f64>,
    /// Minimum weighted n–α correlation at the last snapshot (biased migration).
    pub min_correlation: Option<f64>,
    /// Minimum ratio of the steepest marginal slope at the last snapshot to
    /// that at t = 0 (self-interaction).
    pub front_steepening: Option<f64>,
}

impl Default for CheckSettings {
    fn default() -> Self {
        CheckSettings {
            mass_drift: 0.01,
            residual: None,
            a_drift: None,
            freeze: None,
            min_correlation: None,
            front_steepening: None,
        }
    }
}

impl CheckSettings {
    /// Model-specific keys that are set.
    pub fn model_specific_keys(&self) -> Vec<&'static str> {
        [
            ("residual", self.residual.is_some()),
            ("a_drift", self.a_drift.is_some()),
            ("freeze", self.freeze.is_some()),
            ("min_correlation", self.min_correlation.is_some()),
            ("front_steepening", self.front_steepening.is_some()),
        ]
        .into_iter()
        .filter_map(|(k, set)| set.then_some(k))
        .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds() {
        assert!(Check::at_most("x", 1.0, 1.0).passed());
        assert!(!Check::at_most("x", 1.1, 1.0).passed());
        assert!(Check::at_least("x", 0.95, 0.9).passed());
        assert!(!Check::at_least("x", f64::NAN, 0.9).passed());
        assert!(!Check::at_most("x", f64::NAN, 0.9).passed());
    }

    #[test]
    fn display_marks_failures() {
        let s = Check::at_most("oracle L1", 0.2, 0.0).to_string();
        assert!(s.starts_with("FAIL"));
        assert!(s.contains("oracle L1"));
    }
}
