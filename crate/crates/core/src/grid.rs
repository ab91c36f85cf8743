//! Uniform rectangular phase-space grids and the fields sampled on them.
//!
//! A [`PhaseGrid`] has one to three axes; the first is always the population
//! size `n`. Samples are stored row-major with `n` varying fastest, which is
//! also the order of rows in the CSV serialization.
//!
//! All quadrature is the composite trapezoid rule. The full integral is
//! computed by first collapsing the parameter axes and then integrating the
//! resulting marginal over `n`, so `integrate(f)` and
//! `integrate(marginal_over_params(f))` agree bit for bit.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative level above which boundary samples indicate mass leaving the window.
pub const BOUNDARY_WARN_LEVEL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("axis {name}: {reason}")]
    InvalidAxis { name: AxisName, reason: String },
    #[error("grid must have between 1 and 3 axes, got {0}")]
    AxisCount(usize),
    #[error("first axis must be n, got {0}")]
    MissingN(AxisName),
    #[error("axis {0} appears more than once")]
    DuplicateAxis(AxisName),
    #[error("unknown axis name `{0}`")]
    UnknownAxisName(String),
    #[error("grid has no axis {0}")]
    NoSuchAxis(AxisName),
    #[error("operation needs at least one parameter axis")]
    NoParameterAxes,
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("expected {expected} samples, got {got}")]
    SampleCount { expected: usize, got: usize },
    #[error("sample {index} is {value}; field samples must be finite and nonnegative")]
    InvalidSample { index: usize, value: f64 },
    #[error("malformed field CSV at line {line}: {reason}")]
    Csv { line: usize, reason: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for GridError {
    fn from(e: std::io::Error) -> Self {
        GridError::Io(e.to_string())
    }
}

/// Phase-space coordinate label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxisName {
    N,
    Alpha,
    Beta,
    Gamma,
    K,
}

impl AxisName {
    pub fn as_str(self) -> &'static str {
        match self {
            AxisName::N => "n",
            AxisName::Alpha => "alpha",
            AxisName::Beta => "beta",
            AxisName::Gamma => "gamma",
            AxisName::K => "k",
        }
    }
}

impl fmt::Display for AxisName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AxisName {
    type Err = GridError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "n" => Ok(AxisName::N),
            "alpha" => Ok(AxisName::Alpha),
            "beta" => Ok(AxisName::Beta),
            "gamma" => Ok(AxisName::Gamma),
            "k" => Ok(AxisName::K),
            other => Err(GridError::UnknownAxisName(other.to_string())),
        }
    }
}

/// A uniformly sampled coordinate interval `[lo, hi]` with `count` nodes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AxisSpec", into = "AxisSpec")]
pub struct Axis {
    name: AxisName,
    lo: f64,
    hi: f64,
    count: usize,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AxisSpec {
    name: AxisName,
    lo: f64,
    hi: f64,
    count: usize,
}

impl TryFrom<AxisSpec> for Axis {
    type Error = GridError;

    fn try_from(s: AxisSpec) -> Result<Self, Self::Error> {
        Axis::new(s.name, s.lo, s.hi, s.count)
    }
}

impl From<Axis> for AxisSpec {
    fn from(a: Axis) -> Self {
        AxisSpec { name: a.name, lo: a.lo, hi: a.hi, count: a.count }
    }
}

impl Axis {
    pub fn new(name: AxisName, lo: f64, hi: f64, count: usize) -> Result<Self, GridError> {
        let bad = |reason: &str| Err(GridError::InvalidAxis { name, reason: reason.to_string() });
        if !lo.is_finite() || !hi.is_finite() {
            return bad("bounds must be finite");
        }
        if lo < 0.0 {
            return bad("lower bound must be nonnegative");
        }
        if hi <= lo {
            return bad("upper bound must exceed lower bound");
        }
        if count < 2 {
            return bad("at least two nodes are required");
        }
        Ok(Axis { name, lo, hi, count })
    }

    pub fn name(&self) -> AxisName {
        self.name
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.count - 1) as f64
    }

    /// Coordinate of node `i`.
    ///
    /// Computed as `lo + i·(hi − lo)/(count − 1)` so that nodes with an exact
    /// decimal coordinate (e.g. `5.7` on `[0, 12]` with 601 nodes) hit it
    /// exactly; the last node is always `hi`.
    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        self.lo + (i as f64 * (self.hi - self.lo)) / (self.count - 1) as f64
    }

    /// Trapezoid weight of node `i`.
    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        let h = self.spacing();
        if i == 0 || i + 1 == self.count {
            0.5 * h
        } else {
            h
        }
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.coord(i)).collect()
    }

    /// The same interval with `2·(count − 1) + 1` nodes.
    pub fn refined(&self) -> Axis {
        Axis { count: 2 * (self.count - 1) + 1, ..*self }
    }

    /// Index of the cell `[x_i, x_{i+1}]` containing `x` and the local
    /// coordinate in `[0, 1]`, or `None` outside `[lo, hi]`.
    pub fn locate(&self, x: f64) -> Option<(usize, f64)> {
        if !(x >= self.lo && x <= self.hi) {
            return None;
        }
        let s = (x - self.lo) / self.spacing();
        let i = (s.floor() as usize).min(self.count - 2);
        Some((i, (s - i as f64).clamp(0.0, 1.0)))
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{},{},{}]", self.name, self.lo, self.hi, self.count)
    }
}

/// Ordered list of one to three axes, `n` first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpec", into = "GridSpec")]
pub struct PhaseGrid {
    axes: Vec<Axis>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSpec {
    axes: Vec<Axis>,
}

impl TryFrom<GridSpec> for PhaseGrid {
    type Error = GridError;

    fn try_from(s: GridSpec) -> Result<Self, Self::Error> {
        PhaseGrid::new(s.axes)
    }
}

impl From<PhaseGrid> for GridSpec {
    fn from(g: PhaseGrid) -> Self {
        GridSpec { axes: g.axes }
    }
}

impl PhaseGrid {
    pub fn new(axes: Vec<Axis>) -> Result<Self, GridError> {
        if axes.is_empty() || axes.len() > 3 {
            return Err(GridError::AxisCount(axes.len()));
        }
        if axes[0].name != AxisName::N {
            return Err(GridError::MissingN(axes[0].name));
        }
        for (i, a) in axes.iter().enumerate() {
            if axes[..i].iter().any(|b| b.name == a.name) {
                return Err(GridError::DuplicateAxis(a.name));
            }
        }
        Ok(PhaseGrid { axes })
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn n_axis(&self) -> &Axis {
        &self.axes[0]
    }

    pub fn param_axes(&self) -> &[Axis] {
        &self.axes[1..]
    }

    pub fn axis_names(&self) -> Vec<AxisName> {
        self.axes.iter().map(|a| a.name).collect()
    }

    pub fn axis_index(&self, name: AxisName) -> Option<usize> {
        self.axes.iter().position(|a| a.name == name)
    }

    /// Total number of nodes.
    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.count).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Every axis refined to `2·(count − 1) + 1` nodes.
    pub fn refined(&self) -> PhaseGrid {
        PhaseGrid { axes: self.axes.iter().map(Axis::refined).collect() }
    }

    /// Per-axis node indices of flat index `flat`.
    #[inline]
    pub fn unravel(&self, mut flat: usize, idx: &mut [usize]) {
        for (d, a) in self.axes.iter().enumerate() {
            idx[d] = flat % a.count;
            flat /= a.count;
        }
    }

    /// Coordinates of node `flat`, written into `point`.
    #[inline]
    pub fn node(&self, mut flat: usize, point: &mut [f64]) {
        for (d, a) in self.axes.iter().enumerate() {
            point[d] = a.coord(flat % a.count);
            flat /= a.count;
        }
    }

    /// `f` at every node in storage order.
    pub fn map_nodes<F>(&self, f: F) -> Vec<f64>
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        self.map_rows(|_, p, n_coords, out| {
            for (v, n) in out.iter_mut().zip(n_coords) {
                p[0] = *n;
                *v = f(p);
            }
        })
    }

    /// Fills the grid one `n` row per parallel task. `f` receives the row
    /// index, the node point with its parameter coordinates set (`p[0]` is
    /// free to use), the `n` coordinates, and the row to fill.
    pub fn map_rows<F>(&self, f: F) -> Vec<f64>
    where
        F: Fn(usize, &mut [f64], &[f64], &mut [f64]) + Sync,
    {
        let dim = self.dim();
        let n_coords = self.axes[0].coords();
        let mut values = vec![0.0; self.len()];
        values.par_chunks_mut(n_coords.len()).enumerate().for_each(|(row, chunk)| {
            let mut p = [0.0f64; 3];
            let mut r = row;
            for (d, a) in self.axes[1..].iter().enumerate() {
                p[d + 1] = a.coord(r % a.count);
                r /= a.count;
            }
            f(row, &mut p[..dim], &n_coords, chunk);
        });
        values
    }

    /// Product of trapezoid weights at node `flat`.
    pub fn node_weight(&self, mut flat: usize) -> f64 {
        let mut w = 1.0;
        for a in &self.axes {
            w *= a.weight(flat % a.count);
            flat /= a.count;
        }
        w
    }

    /// The one-dimensional grid consisting of the `n` axis only.
    pub fn n_grid(&self) -> PhaseGrid {
        PhaseGrid { axes: vec![self.axes[0]] }
    }

    /// Human-readable axis list used in the CSV header.
    pub fn header(&self) -> String {
        self.axes.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(";")
    }

    fn parse_header(s: &str) -> Result<PhaseGrid, String> {
        let mut axes = Vec::new();
        for part in s.split(';') {
            let part = part.trim();
            let open = part.find('[').ok_or("missing `[`")?;
            let close = part.rfind(']').ok_or("missing `]`")?;
            let name: AxisName = part[..open].parse().map_err(|e: GridError| e.to_string())?;
            let nums: Vec<&str> = part[open + 1..close].split(',').collect();
            if nums.len() != 3 {
                return Err(format!("axis {name} needs lo,hi,count"));
            }
            let lo: f64 = nums[0].parse().map_err(|_| "bad lower bound")?;
            let hi: f64 = nums[1].parse().map_err(|_| "bad upper bound")?;
            let count: usize = nums[2].parse().map_err(|_| "bad node count")?;
            axes.push(Axis::new(name, lo, hi, count).map_err(|e| e.to_string())?);
        }
        PhaseGrid::new(axes).map_err(|e| e.to_string())
    }
}

/// Nonnegative samples of a count density, one per grid node.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: PhaseGrid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: PhaseGrid, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::SampleCount { expected: grid.len(), got: values.len() });
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            return Err(GridError::InvalidSample { index, value });
        }
        Ok(Field { grid, values })
    }

    pub fn zeros(grid: PhaseGrid) -> Self {
        let values = vec![0.0; grid.len()];
        Field { grid, values }
    }

    /// Evaluates `f` at every node (in parallel; each node is independent).
    pub fn from_fn<F>(grid: PhaseGrid, f: F) -> Result<Self, GridError>
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        let values = grid.map_nodes(f);
        Field::new(grid, values)
    }

    pub fn grid(&self) -> &PhaseGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Value at node with per-axis indices `idx`.
    pub fn at(&self, idx: &[usize]) -> f64 {
        let mut flat = 0;
        let mut stride = 1;
        for (d, a) in self.grid.axes.iter().enumerate() {
            flat += idx[d] * stride;
            stride *= a.count;
        }
        self.values[flat]
    }

    /// Multilinear interpolation at `point`; zero outside the grid.
    pub fn interpolate(&self, point: &[f64]) -> f64 {
        let dim = self.grid.dim();
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for d in 0..dim {
            match self.grid.axes[d].locate(point[d]) {
                Some((i, s)) => {
                    base[d] = i;
                    frac[d] = s;
                }
                None => return 0.0,
            }
        }
        let mut total = 0.0;
        for corner in 0..(1usize << dim) {
            let mut w = 1.0;
            let mut flat = 0;
            let mut stride = 1;
            for d in 0..dim {
                let up = (corner >> d) & 1;
                w *= if up == 1 { frac[d] } else { 1.0 - frac[d] };
                flat += (base[d] + up) * stride;
                stride *= self.grid.axes[d].count;
            }
            if w != 0.0 {
                total += w * self.values[flat];
            }
        }
        total
    }

    /// Largest sample on the outer faces of the grid relative to the field
    /// maximum. `None` for an all-zero field.
    pub fn boundary_ratio(&self) -> Option<f64> {
        let max = self.max();
        if max == 0.0 {
            return None;
        }
        let dim = self.grid.dim();
        let mut idx = [0usize; 3];
        let mut edge = 0.0f64;
        for (flat, v) in self.values.iter().enumerate() {
            self.grid.unravel(flat, &mut idx[..dim]);
            let on_face = (0..dim).any(|d| idx[d] == 0 || idx[d] + 1 == self.grid.axes[d].count);
            if on_face {
                edge = edge.max(*v);
            }
        }
        Some(edge / max)
    }

    /// Whether the boundary carries more than [`BOUNDARY_WARN_LEVEL`] of the peak.
    pub fn touches_boundary(&self) -> bool {
        self.boundary_ratio().is_some_and(|r| r > BOUNDARY_WARN_LEVEL)
    }

    pub fn write_csv<W: Write>(&self, mut w: W, value_label: &str) -> Result<(), GridError> {
        writeln!(w, "# axes: {}", self.grid.header())?;
        let names: Vec<&str> = self.grid.axes.iter().map(|a| a.name.as_str()).collect();
        writeln!(w, "{},{}", names.join(","), value_label)?;
        let dim = self.grid.dim();
        let mut p = [0.0f64; 3];
        let mut line = String::new();
        for (i, v) in self.values.iter().enumerate() {
            self.grid.node(i, &mut p[..dim]);
            line.clear();
            for x in &p[..dim] {
                line.push_str(&format!("{x},"));
            }
            line.push_str(&format!("{v}"));
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Field, GridError> {
        let mut lines = r.lines();
        let csv_err = |line: usize, reason: &str| GridError::Csv { line, reason: reason.to_string() };
        let header = lines.next().ok_or_else(|| csv_err(1, "empty file"))??;
        let spec = header.strip_prefix("# axes:").ok_or_else(|| csv_err(1, "missing `# axes:` header"))?;
        let grid = PhaseGrid::parse_header(spec.trim()).map_err(|e| csv_err(1, &e))?;
        lines.next().ok_or_else(|| csv_err(2, "missing column header"))??;
        let dim = grid.dim();
        let mut values = Vec::with_capacity(grid.len());
        for (k, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != dim + 1 {
                return Err(csv_err(k + 3, "wrong column count"));
            }
            let v: f64 = cols[dim].trim().parse().map_err(|_| csv_err(k + 3, "bad sample value"))?;
            values.push(v);
        }
        Field::new(grid, values)
    }
}

/// Composite trapezoid integral over every axis.
pub fn integrate(field: &Field) -> f64 {
    if field.grid.dim() == 1 {
        return trapezoid_1d(field.grid.n_axis(), &field.values);
    }
    let rho = collapse_params(field);
    trapezoid_1d(field.grid.n_axis(), &rho)
}

fn trapezoid_1d(axis: &Axis, values: &[f64]) -> f64 {
    values.iter().enumerate().map(|(i, v)| axis.weight(i) * v).sum()
}

/// Integral over all parameter axes at each `n` node, accumulated in a fixed
/// order so the result is reproducible.
fn collapse_params(field: &Field) -> Vec<f64> {
    let grid = &field.grid;
    let cn = grid.n_axis().count;
    let mut rho = vec![0.0; cn];
    let params = grid.param_axes();
    let rows = field.values.len() / cn;
    for row in 0..rows {
        let mut w = 1.0;
        let mut r = row;
        for a in params {
            w *= a.weight(r % a.count);
            r /= a.count;
        }
        let slice = &field.values[row * cn..(row + 1) * cn];
        for (acc, v) in rho.iter_mut().zip(slice) {
            *acc += w * v;
        }
    }
    rho
}

/// Marginal `ρ(n)`: the field integrated over every parameter axis.
pub fn marginal_over_params(field: &Field) -> Result<Field, GridError> {
    if field.grid.dim() < 2 {
        return Err(GridError::NoParameterAxes);
    }
    let rho = collapse_params(field);
    Field::new(field.grid.n_grid(), rho)
}

/// Marginal over parameters, or the field itself when it is already 1D.
pub fn size_distribution(field: &Field) -> Field {
    if field.grid.dim() == 1 {
        field.clone()
    } else {
        Field { grid: field.grid.n_grid(), values: collapse_params(field) }
    }
}

/// Total size `N = ∫ n u`.
pub fn first_moment_n(field: &Field) -> f64 {
    let axis = field.grid.n_axis();
    let rho = if field.grid.dim() == 1 { field.values.clone() } else { collapse_params(field) };
    rho.iter().enumerate().map(|(i, v)| axis.weight(i) * axis.coord(i) * v).sum()
}

/// `∫ x u` for the coordinate `x` of the named axis.
pub fn first_moment_param(field: &Field, axis: AxisName) -> Result<f64, GridError> {
    let d = field.grid.axis_index(axis).ok_or(GridError::NoSuchAxis(axis))?;
    if d == 0 {
        return Ok(first_moment_n(field));
    }
    let grid = &field.grid;
    let n_axis = grid.n_axis();
    let cn = n_axis.count;
    let n_weights: Vec<f64> = (0..cn).map(|i| n_axis.weight(i)).collect();
    let mut total = 0.0;
    for (row, slice) in field.values.chunks(cn).enumerate() {
        let mut w = 1.0;
        let mut x = 0.0;
        let mut r = row;
        for (k, a) in grid.param_axes().iter().enumerate() {
            let i = r % a.count;
            w *= a.weight(i);
            if k + 1 == d {
                x = a.coord(i);
            }
            r /= a.count;
        }
        let inner: f64 = slice.iter().zip(&n_weights).map(|(v, wn)| wn * v).sum();
        total += w * x * inner;
    }
    Ok(total)
}

/// Maximum pointwise difference `max |a − b|`.
pub fn sup_norm_diff(a: &Field, b: &Field) -> Result<f64, GridError> {
    if a.grid != b.grid {
        return Err(GridError::GridMismatch);
    }
    Ok(a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
}
