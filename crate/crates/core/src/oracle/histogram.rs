use std::io::Write;

use crate::grid::{integrate, Field};

use super::{Ensemble, OracleError};

/// Count density per unit `n` over contiguous bins.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    edges: Vec<f64>,
    densities: Vec<f64>,
}

impl Histogram {
    pub fn new(edges: Vec<f64>, densities: Vec<f64>) -> Result<Self, OracleError> {
        if edges.len() < 2 || edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(OracleError::BadEdges);
        }
        if densities.len() + 1 != edges.len() || densities.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(OracleError::Shape("need one nonnegative density per bin".into()));
        }
        Ok(Histogram { edges, densities })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn densities(&self) -> &[f64] {
        &self.densities
    }

    pub fn bins(&self) -> usize {
        self.densities.len()
    }

    /// Count represented in bin `i`.
    pub fn bin_count(&self, i: usize) -> f64 {
        self.densities[i] * (self.edges[i + 1] - self.edges[i])
    }

    pub fn total(&self) -> f64 {
        (0..self.bins()).map(|i| self.bin_count(i)).sum()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "bin_lo,bin_hi,density")?;
        for (i, d) in self.densities.iter().enumerate() {
            writeln!(w, "{},{},{}", self.edges[i], self.edges[i + 1], d)?;
        }
        Ok(())
    }
}

/// `bins + 1` equally spaced edges on `[lo, hi]`.
pub fn uniform_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    (0..=bins).map(|i| lo + (i as f64 * (hi - lo)) / bins as f64).collect()
}

/// Bins member sizes. Members outside the edges get an extra overflow bin on
/// the corresponding side.
pub fn histogram(ensemble: &Ensemble, edges: &[f64]) -> Result<Histogram, OracleError> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(OracleError::BadEdges);
    }
    let mut edges = edges.to_vec();
    let sizes = ensemble.sizes();
    let min = sizes.iter().copied().fold(f64::INFINITY, f64::min);
    let max = sizes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if min < edges[0] {
        edges.insert(0, min);
    }
    if max > edges[edges.len() - 1] {
        edges.push(max);
    }
    let bins = edges.len() - 1;
    let mut counts = vec![0usize; bins];
    for &x in sizes {
        // index of the last edge ≤ x, with the right end folded into the last bin
        let i = edges.partition_point(|e| *e <= x).saturating_sub(1).min(bins - 1);
        counts[i] += 1;
    }
    let w = ensemble.weight();
    let densities = counts.iter().enumerate().map(|(i, c)| *c as f64 * w / (edges[i + 1] - edges[i])).collect();
    Ok(Histogram { edges, densities })
}

/// Integral of the piecewise-linear interpolant of a 1D field from the
/// left end of its axis to `x` (clamped to the axis).
fn cumulative(rho: &Field, prefix: &[f64], x: f64) -> f64 {
    let axis = rho.grid().n_axis();
    if x <= axis.lo() {
        return 0.0;
    }
    if x >= axis.hi() {
        return prefix[prefix.len() - 1];
    }
    let (i, s) = axis.locate(x).expect("inside axis");
    let h = axis.spacing();
    let v = rho.values();
    prefix[i] + h * (v[i] * s + 0.5 * (v[i + 1] - v[i]) * s * s)
}

/// Relative L1 mismatch `∫|ρ_pred − ρ_hist| / ∫ρ_pred`, with the prediction
/// integrated over each bin before differencing.
pub fn l1_distance(rho_pred: &Field, hist: &Histogram) -> Result<f64, OracleError> {
    if rho_pred.grid().dim() != 1 {
        return Err(OracleError::Shape("prediction must be a one-dimensional marginal".into()));
    }
    let total = integrate(rho_pred);
    if !(total > 0.0) {
        return Err(OracleError::ZeroMass);
    }
    let axis = rho_pred.grid().n_axis();
    let v = rho_pred.values();
    let h = axis.spacing();
    let mut prefix = Vec::with_capacity(v.len());
    let mut acc = 0.0;
    prefix.push(0.0);
    for i in 1..v.len() {
        acc += 0.5 * h * (v[i - 1] + v[i]);
        prefix.push(acc);
    }
    let edges = hist.edges();
    let mut covered = 0.0;
    let mut diff = 0.0;
    for i in 0..hist.bins() {
        let pred = cumulative(rho_pred, &prefix, edges[i + 1]) - cumulative(rho_pred, &prefix, edges[i]);
        covered += pred;
        diff += (pred - hist.bin_count(i)).abs();
    }
    // predicted mass that no bin covers counts as mismatch
    diff += (prefix[prefix.len() - 1] - covered).max(0.0);
    Ok(diff / total)
}
