use std::io::Write;

use crate::grid::{AxisName, Field, PhaseGrid};
use crate::initial::InitialDistribution;

use super::OracleError;

/// A finite set of populations, each standing for `weight` populations of
/// the continuous distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    param_names: Vec<AxisName>,
    n: Vec<f64>,
    /// One column per parameter axis.
    params: Vec<Vec<f64>>,
    weight: f64,
}

impl Ensemble {
    pub fn new(
        param_names: Vec<AxisName>,
        n: Vec<f64>,
        params: Vec<Vec<f64>>,
        weight: f64,
    ) -> Result<Self, OracleError> {
        if n.is_empty() {
            return Err(OracleError::EmptyEnsemble);
        }
        if params.len() != param_names.len() || params.iter().any(|c| c.len() != n.len()) {
            return Err(OracleError::Shape("parameter columns must match member count".into()));
        }
        if n.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(OracleError::Shape("member sizes must be finite and nonnegative".into()));
        }
        if !(weight.is_finite() && weight > 0.0) {
            return Err(OracleError::Shape(format!("member weight must be positive, got {weight}")));
        }
        Ok(Ensemble { param_names, n, params, weight })
    }

    pub fn len(&self) -> usize {
        self.n.len()
    }

    pub fn is_empty(&self) -> bool {
        self.n.is_empty()
    }

    pub fn sizes(&self) -> &[f64] {
        &self.n
    }

    pub fn param_names(&self) -> &[AxisName] {
        &self.param_names
    }

    pub fn param(&self, name: AxisName) -> Option<&[f64]> {
        self.param_names.iter().position(|p| *p == name).map(|i| self.params[i].as_slice())
    }

    pub fn params(&self) -> &[Vec<f64>] {
        &self.params
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    /// Number of populations represented.
    pub fn represented_count(&self) -> f64 {
        self.weight * self.n.len() as f64
    }

    /// Same parameters, new sizes.
    pub fn with_sizes(&self, n: Vec<f64>) -> Result<Self, OracleError> {
        Ensemble::new(self.param_names.clone(), n, self.params.clone(), self.weight)
    }

    /// Mean size, summed in member order.
    pub fn mean_size(&self) -> f64 {
        self.n.iter().sum::<f64>() / self.n.len() as f64
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut header = String::from("n");
        for p in &self.param_names {
            header.push(',');
            header.push_str(p.as_str());
        }
        writeln!(w, "{header}")?;
        for i in 0..self.n.len() {
            let mut line = format!("{}", self.n[i]);
            for col in &self.params {
                line.push_str(&format!(",{}", col[i]));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

/// Steps of the additive recurrence `frac(½ + k·a)` spreading a cell's
/// members, per dimension count `d`: `a_j = φ_d^{-(j+1)}` with `φ_d` the
/// real root of `x^{d+1} = x + 1`.
const STEP: [[f64; 3]; 3] = [
    [0.618_033_988_749_894_9, 0.0, 0.0],
    [0.754_877_666_246_692_8, 0.569_840_290_998_053_3, 0.0],
    [0.819_172_513_396_164_4, 0.671_043_606_703_789_2, 0.549_700_477_901_970_5],
];

/// Deterministic quota sampling of `u₀` on the cells of `grid`.
///
/// Each cell's mass is the corner average times the cell volume (so the
/// masses sum to the trapezoid integral). Members are apportioned by largest
/// remainder, giving exactly `members` in total. Within a cell they follow a
/// low-discrepancy sequence whose first point is the centre: stacking them
/// all on the centre makes the ensemble a lattice that aliases against
/// histogram bins once the dynamics stretch it.
pub fn sample_ensemble(u0: &InitialDistribution, grid: &PhaseGrid, members: usize) -> Result<Ensemble, OracleError> {
    if members == 0 {
        return Err(OracleError::EmptyEnsemble);
    }
    let field = u0.sample(grid)?;
    sample_field(&field, members)
}

/// [`sample_ensemble`] for an already sampled field.
pub fn sample_field(field: &Field, members: usize) -> Result<Ensemble, OracleError> {
    let grid = field.grid();
    let dim = grid.dim();
    let axes = grid.axes();
    let cells: Vec<usize> = axes.iter().map(|a| a.count() - 1).collect();
    let cell_count: usize = cells.iter().product();
    let volume: f64 = axes.iter().map(|a| a.spacing()).product();

    let mut masses = Vec::with_capacity(cell_count);
    let mut idx = [0usize; 3];
    let mut corner_idx = [0usize; 3];
    for c in 0..cell_count {
        let mut r = c;
        for d in 0..dim {
            idx[d] = r % cells[d];
            r /= cells[d];
        }
        let mut sum = 0.0;
        for corner in 0..(1usize << dim) {
            for d in 0..dim {
                corner_idx[d] = idx[d] + ((corner >> d) & 1);
            }
            sum += field.at(&corner_idx[..dim]);
        }
        masses.push(sum / (1usize << dim) as f64 * volume);
    }
    let total: f64 = masses.iter().sum();
    if !(total > 0.0) {
        return Err(OracleError::ZeroMass);
    }

    let scale = members as f64 / total;
    let mut quota: Vec<usize> = Vec::with_capacity(cell_count);
    let mut remainders: Vec<(f64, usize)> = Vec::new();
    let mut assigned = 0usize;
    for (c, m) in masses.iter().enumerate() {
        let exact = m * scale;
        let q = exact.floor() as usize;
        quota.push(q);
        assigned += q;
        let frac = exact - q as f64;
        if frac > 0.0 {
            remainders.push((frac, c));
        }
    }
    // ties resolve to the lower cell index
    remainders.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, c) in remainders.iter().take(members.saturating_sub(assigned)) {
        quota[c] += 1;
    }

    let mut n = Vec::with_capacity(members);
    let mut params = vec![Vec::with_capacity(members); dim - 1];
    for (c, &q) in quota.iter().enumerate() {
        if q == 0 {
            continue;
        }
        let mut r = c;
        for d in 0..dim {
            idx[d] = r % cells[d];
            r /= cells[d];
        }
        let alpha = &STEP[dim - 1][..dim];
        let at = |d: usize, frac: f64| axes[d].coord(idx[d]) + frac * axes[d].spacing();
        for k in 0..q {
            let offset = |d: usize| (0.5 + k as f64 * alpha[d]).fract();
            n.push(at(0, offset(0)));
            for (d, col) in params.iter_mut().enumerate() {
                col.push(at(d + 1, offset(d + 1)));
            }
        }
    }
    let names = axes[1..].iter().map(|a| a.name()).collect();
    let count = n.len();
    Ensemble::new(names, n, params, total / count as f64)
}
