//! Probability measures on a truncated uniform grid, flows of such
//! measures, and exact one-dimensional Wasserstein distances.
//!
//! A [`GridMeasure`] carries nodal densities together with the nodal
//! masses they induce under trapezoidal weights (`dx/2` at the two end
//! nodes, `dx` inside). Its CDF is the piecewise-linear interpolant of
//! the trapezoidal partial integrals, so each cell `[x_j, x_{j+1}]`
//! carries a uniformly spread share of mass.

mod csv;
mod wasserstein;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use csv::{read_flow_csv, read_table, write_flow_csv, write_table, Table};
pub use wasserstein::{
    flow_distance, flow_regularity, wasserstein, wasserstein_cdf_area, wasserstein_discrete,
    DiscreteMeasure, FlowRegularity, Order,
};

/// Absolute tolerance on the total mass of a probability measure.
pub const MASS_TOLERANCE: f64 = 1e-10;

/// Uniform spatial axis `x_j = x_min + j·dx`, `j = 0..nx`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceAxis {
    x_min: f64,
    x_max: f64,
    nx: usize,
}

impl SpaceAxis {
    pub fn new(x_min: f64, x_max: f64, nx: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite() && x_min < x_max) {
            return Err(Error::InvalidGrid(format!(
                "need x_min < x_max, got [{x_min}, {x_max}]"
            )));
        }
        if nx < 3 {
            return Err(Error::InvalidGrid(format!("need nx >= 3, got {nx}")));
        }
        Ok(Self { x_min, x_max, nx })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }
    pub fn x_max(&self) -> f64 {
        self.x_max
    }
    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.nx - 1) as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        if j + 1 == self.nx {
            self.x_max
        } else {
            self.x_min + j as f64 * self.dx()
        }
    }

    /// Midpoint `x_{j+½}` between nodes `j` and `j + 1`.
    pub fn face(&self, j: usize) -> f64 {
        0.5 * (self.x(j) + self.x(j + 1))
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.nx).map(|j| self.x(j)).collect()
    }

    /// Trapezoidal quadrature weight of node `j`.
    pub fn weight(&self, j: usize) -> f64 {
        if j == 0 || j + 1 == self.nx {
            0.5 * self.dx()
        } else {
            self.dx()
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.x_min <= x && x <= self.x_max
    }

    /// Index `j` and fraction `w ∈ [0, 1]` with `x = (1−w)·x_j + w·x_{j+1}`,
    /// after clamping `x` into the axis.
    pub fn locate(&self, x: f64) -> (usize, f64) {
        let mut u = ((x - self.x_min) / self.dx()).clamp(0.0, (self.nx - 1) as f64);
        // points that sit on a node up to rounding land on it exactly
        let r = u.round();
        if (u - r).abs() < 1e-9 {
            u = r;
        }
        let j = (u.floor() as usize).min(self.nx - 2);
        (j, u - j as f64)
    }

    /// Linear interpolation of nodal `values` at `x`, linearly
    /// extrapolated beyond the ends.
    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        let dx = self.dx();
        let u = (x - self.x_min) / dx;
        let j = if u <= 0.0 {
            0
        } else {
            (u.floor() as usize).min(self.nx - 2)
        };
        let w = u - j as f64;
        values[j] + w * (values[j + 1] - values[j])
    }
}

/// Uniform time axis `t_k = t_start + k·dt`, `k = 0..nt`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeAxis {
    t_start: f64,
    t_end: f64,
    nt: usize,
}

impl TimeAxis {
    pub fn new(t_start: f64, t_end: f64, nt: usize) -> Result<Self> {
        if !(t_start.is_finite() && t_end.is_finite() && t_start < t_end) {
            return Err(Error::InvalidGrid(format!(
                "need t_start < t_end, got [{t_start}, {t_end}]"
            )));
        }
        if nt < 2 {
            return Err(Error::InvalidGrid(format!("need nt >= 2, got {nt}")));
        }
        Ok(Self { t_start, t_end, nt })
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }
    pub fn t_end(&self) -> f64 {
        self.t_end
    }
    pub fn nt(&self) -> usize {
        self.nt
    }
    pub fn dt(&self) -> f64 {
        (self.t_end - self.t_start) / (self.nt - 1) as f64
    }

    pub fn t(&self, k: usize) -> f64 {
        if k + 1 == self.nt {
            self.t_end
        } else {
            self.t_start + k as f64 * self.dt()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.nt).map(|k| self.t(k)).collect()
    }

    /// Index `k` and fraction `w` with `t = (1−w)·t_k + w·t_{k+1}`,
    /// clamped into the axis.
    pub fn locate(&self, t: f64) -> (usize, f64) {
        let u = ((t - self.t_start) / self.dt()).clamp(0.0, (self.nt - 1) as f64);
        let k = (u.floor() as usize).min(self.nt - 2);
        (k, u - k as f64)
    }
}

/// Discretization of `[t_start, t_end] × [x_min, x_max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeGrid {
    space: SpaceAxis,
    time: TimeAxis,
}

impl SpaceTimeGrid {
    pub fn new(
        x_min: f64,
        x_max: f64,
        nx: usize,
        t_start: f64,
        t_end: f64,
        nt: usize,
    ) -> Result<Self> {
        Ok(Self {
            space: SpaceAxis::new(x_min, x_max, nx)?,
            time: TimeAxis::new(t_start, t_end, nt)?,
        })
    }

    pub fn from_axes(space: SpaceAxis, time: TimeAxis) -> Self {
        Self { space, time }
    }

    pub fn space(&self) -> &SpaceAxis {
        &self.space
    }
    pub fn time(&self) -> &TimeAxis {
        &self.time
    }
    pub fn nx(&self) -> usize {
        self.space.nx
    }
    pub fn nt(&self) -> usize {
        self.time.nt
    }
    pub fn dx(&self) -> f64 {
        self.space.dx()
    }
    pub fn dt(&self) -> f64 {
        self.time.dt()
    }
    pub fn x(&self, j: usize) -> f64 {
        self.space.x(j)
    }
    pub fn t(&self, k: usize) -> f64 {
        self.time.t(k)
    }

    /// Same spatial axis with a different number of time nodes.
    pub fn with_nt(&self, nt: usize) -> Result<Self> {
        Ok(Self {
            space: self.space,
            time: TimeAxis::new(self.time.t_start, self.time.t_end, nt)?,
        })
    }

    pub(crate) fn ensure_same(&self, other: &SpaceTimeGrid, what: &str) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!(
                "{what}: {self:?} vs {other:?}"
            )));
        }
        Ok(())
    }
}

/// Probability measure on the nodes of a [`SpaceAxis`].
#[derive(Clone, Debug, PartialEq)]
pub struct GridMeasure {
    axis: SpaceAxis,
    density: Vec<f64>,
    mass: Vec<f64>,
}

impl GridMeasure {
    fn validate(axis: &SpaceAxis, mass: &[f64]) -> Result<()> {
        if mass.len() != axis.nx() {
            return Err(Error::InvalidMeasure(format!(
                "expected {} nodes, got {}",
                axis.nx(),
                mass.len()
            )));
        }
        if let Some(j) = mass.iter().position(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(Error::InvalidMeasure(format!(
                "mass at node {j} is {} (must be finite and nonnegative)",
                mass[j]
            )));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidMeasure(format!(
                "total mass {total} differs from 1"
            )));
        }
        Ok(())
    }

    /// Measure from nodal densities; the trapezoidal integral must be 1.
    pub fn from_density(axis: &SpaceAxis, density: Vec<f64>) -> Result<Self> {
        if density.len() != axis.nx() {
            return Err(Error::InvalidMeasure(format!(
                "expected {} nodes, got {}",
                axis.nx(),
                density.len()
            )));
        }
        let mass: Vec<f64> = density
            .iter()
            .enumerate()
            .map(|(j, r)| r * axis.weight(j))
            .collect();
        Self::validate(axis, &mass)?;
        Ok(Self {
            axis: *axis,
            density,
            mass,
        })
    }

    /// Measure from nodal masses summing to 1.
    pub fn from_masses(axis: &SpaceAxis, mass: Vec<f64>) -> Result<Self> {
        Self::validate(axis, &mass)?;
        let density = mass
            .iter()
            .enumerate()
            .map(|(j, m)| m / axis.weight(j))
            .collect();
        Ok(Self {
            axis: *axis,
            density,
            mass,
        })
    }

    /// Measure from nonnegative nodal masses with positive total,
    /// rescaled to total 1.
    pub fn normalized(axis: &SpaceAxis, mut mass: Vec<f64>) -> Result<Self> {
        let total: f64 = mass.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::InvalidMeasure(format!(
                "cannot normalize total mass {total}"
            )));
        }
        for m in &mut mass {
            *m /= total;
        }
        Self::from_masses(axis, mass)
    }

    /// Gaussian density sampled at the nodes and renormalized; falls back
    /// to a binned point mass when the law is narrower than the grid.
    pub fn gaussian(axis: &SpaceAxis, mean: f64, std: f64) -> Result<Self> {
        if !(std > 0.0 && std.is_finite() && mean.is_finite()) {
            return Err(Error::InvalidMeasure(format!(
                "gaussian needs finite mean and std > 0, got ({mean}, {std})"
            )));
        }
        let mass: Vec<f64> = (0..axis.nx())
            .map(|j| {
                let z = (axis.x(j) - mean) / std;
                axis.weight(j) * (-0.5 * z * z).exp()
            })
            .collect();
        let total: f64 = mass.iter().sum();
        if total < 1e-300 || std < 0.25 * axis.dx() {
            return Self::from_atoms(axis, &[(mean, 1.0)]);
        }
        Self::normalized(axis, mass)
    }

    /// Uniform law on `[a, b]`: each node receives the share of `[a, b]`
    /// that falls in its dual cell.
    pub fn uniform(axis: &SpaceAxis, a: f64, b: f64) -> Result<Self> {
        if !(a < b) {
            return Err(Error::InvalidMeasure(format!("need a < b, got ({a}, {b})")));
        }
        let half = 0.5 * axis.dx();
        let mass: Vec<f64> = (0..axis.nx())
            .map(|j| {
                let lo = (axis.x(j) - half).max(axis.x_min()).max(a);
                let hi = (axis.x(j) + half).min(axis.x_max()).min(b);
                (hi - lo).max(0.0)
            })
            .collect();
        if mass.iter().all(|m| *m == 0.0) {
            return Self::from_atoms(axis, &[(0.5 * (a + b), 1.0)]);
        }
        Self::normalized(axis, mass)
    }

    /// Unit mass at node `j`.
    pub fn dirac(axis: &SpaceAxis, j: usize) -> Result<Self> {
        if j >= axis.nx() {
            return Err(Error::InvalidArgument(format!(
                "node {j} outside axis with {} nodes",
                axis.nx()
            )));
        }
        let mut mass = vec![0.0; axis.nx()];
        mass[j] = 1.0;
        Self::from_masses(axis, mass)
    }

    /// Weighted atoms, each split linearly between its two bracketing
    /// nodes (clamped into the axis); weights are normalized.
    pub fn from_atoms(axis: &SpaceAxis, atoms: &[(f64, f64)]) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::EmptySamples);
        }
        let mut mass = vec![0.0; axis.nx()];
        for &(x, w) in atoms {
            if !(x.is_finite() && w.is_finite() && w >= 0.0) {
                return Err(Error::InvalidMeasure(format!("bad atom ({x}, {w})")));
            }
            let (j, frac) = axis.locate(x);
            mass[j] += w * (1.0 - frac);
            mass[j + 1] += w * frac;
        }
        Self::normalized(axis, mass)
    }

    pub fn axis(&self) -> &SpaceAxis {
        &self.axis
    }

    /// Nodal masses (trapezoidal weight times density).
    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    /// Nodal densities.
    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// `∫ g dμ` for nodal values `g`.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.mass.iter().zip(values).map(|(m, v)| m * v).sum()
    }

    pub fn mean(&self) -> f64 {
        self.mass
            .iter()
            .enumerate()
            .map(|(j, m)| m * self.axis.x(j))
            .sum()
    }

    pub fn second_moment(&self) -> f64 {
        self.mass
            .iter()
            .enumerate()
            .map(|(j, m)| {
                let x = self.axis.x(j);
                m * x * x
            })
            .sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.second_moment() - m * m
    }

    /// `(1 − λ)·self + λ·other` in mass space, renormalized.
    pub fn mix(&self, other: &GridMeasure, lambda: f64) -> Result<GridMeasure> {
        if self.axis != other.axis {
            return Err(Error::GridMismatch("mixing measures on different axes".into()));
        }
        let mass = self
            .mass
            .iter()
            .zip(&other.mass)
            .map(|(a, b)| (1.0 - lambda) * a + lambda * b)
            .collect();
        Self::normalized(&self.axis, mass)
    }

    /// Mass carried by each cell `[x_j, x_{j+1}]`: end-node masses lie
    /// entirely in their adjacent cell, interior masses split in half.
    pub fn cell_masses(&self) -> Vec<f64> {
        let n = self.axis.nx();
        let m = &self.mass;
        (0..n - 1)
            .map(|j| {
                let left = if j == 0 { m[0] } else { 0.5 * m[j] };
                let right = if j + 1 == n - 1 { m[n - 1] } else { 0.5 * m[j + 1] };
                left + right
            })
            .collect()
    }

    /// CDF at the nodes, normalized so the last value is exactly 1.
    pub fn cdf(&self) -> Vec<f64> {
        let cells = self.cell_masses();
        let total: f64 = cells.iter().sum();
        let mut out = Vec::with_capacity(cells.len() + 1);
        let mut acc = 0.0;
        out.push(0.0);
        for c in &cells {
            acc += c;
            out.push(acc / total);
        }
        *out.last_mut().unwrap() = 1.0;
        out
    }
}

/// Linear binning of samples onto the nodes of `axis` (samples clipped
/// into the axis), normalized to total mass 1.
pub fn empirical_to_grid(samples: &[f64], axis: &SpaceAxis) -> Result<GridMeasure> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let w = 1.0 / samples.len() as f64;
    let mut mass = vec![0.0; axis.nx()];
    for &x in samples {
        if !x.is_finite() {
            return Err(Error::InvalidMeasure(format!("non-finite sample {x}")));
        }
        let (j, frac) = axis.locate(x);
        mass[j] += w * (1.0 - frac);
        mass[j + 1] += w * frac;
    }
    GridMeasure::normalized(axis, mass)
}

/// A flow `{μ_t}` sampled at the time nodes of a [`SpaceTimeGrid`].
#[derive(Clone, Debug, PartialEq)]
pub struct GridMeasureFlow {
    grid: SpaceTimeGrid,
    measures: Vec<GridMeasure>,
}

impl GridMeasureFlow {
    pub fn new(grid: SpaceTimeGrid, measures: Vec<GridMeasure>) -> Result<Self> {
        if measures.len() != grid.nt() {
            return Err(Error::GridMismatch(format!(
                "flow needs {} slices, got {}",
                grid.nt(),
                measures.len()
            )));
        }
        if let Some(k) = measures.iter().position(|m| m.axis() != grid.space()) {
            return Err(Error::GridMismatch(format!(
                "slice {k} lives on a different spatial axis"
            )));
        }
        Ok(Self { grid, measures })
    }

    /// The same measure at every time node.
    pub fn constant(grid: SpaceTimeGrid, m: &GridMeasure) -> Result<Self> {
        Self::new(grid, vec![m.clone(); grid.nt()])
    }

    pub fn grid(&self) -> &SpaceTimeGrid {
        &self.grid
    }

    pub fn slice(&self, k: usize) -> &GridMeasure {
        &self.measures[k]
    }

    pub fn slices(&self) -> &[GridMeasure] {
        &self.measures
    }

    pub fn into_slices(self) -> Vec<GridMeasure> {
        self.measures
    }

    pub fn first_moments(&self) -> Vec<f64> {
        self.measures.iter().map(GridMeasure::mean).collect()
    }

    /// Slice-wise `(1 − λ)·self + λ·other`, renormalized.
    pub fn mix(&self, other: &GridMeasureFlow, lambda: f64) -> Result<Self> {
        self.grid.ensure_same(&other.grid, "mixing flows")?;
        let measures = self
            .measures
            .iter()
            .zip(&other.measures)
            .map(|(a, b)| a.mix(b, lambda))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid: self.grid,
            measures,
        })
    }
}
