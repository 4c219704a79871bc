use std::io::Write;

use crate::error::{Error, Result};
use crate::measure::{write_table, GridMeasure, SpaceTimeGrid};

/// `v(t_k, x_j)` on a grid together with its spatial derivative.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueField {
    grid: SpaceTimeGrid,
    v: Vec<f64>,
    dv_dx: Vec<f64>,
}

/// Central differences inside, one-sided differences at the two ends.
pub(crate) fn derivative(v: &[f64], dx: f64, out: &mut [f64]) {
    let n = v.len();
    out[0] = (v[1] - v[0]) / dx;
    out[n - 1] = (v[n - 1] - v[n - 2]) / dx;
    for j in 1..n - 1 {
        out[j] = (v[j + 1] - v[j - 1]) / (2.0 * dx);
    }
}

impl ValueField {
    /// Wrap values stored slice by slice (`v[k·nx + j]`); derivatives are
    /// recomputed.
    pub fn from_values(grid: SpaceTimeGrid, v: Vec<f64>) -> Result<Self> {
        let (nt, nx) = (grid.nt(), grid.nx());
        if v.len() != nt * nx {
            return Err(Error::GridMismatch(format!(
                "value array has {} entries, grid needs {}",
                v.len(),
                nt * nx
            )));
        }
        let mut dv_dx = vec![0.0; v.len()];
        let dx = grid.dx();
        for k in 0..nt {
            let r = k * nx..(k + 1) * nx;
            derivative(&v[r.clone()], dx, &mut dv_dx[r]);
        }
        Ok(Self { grid, v, dv_dx })
    }

    /// Field with `v(t_k, x_j) = g(t_k, x_j)`.
    pub fn from_fn(grid: SpaceTimeGrid, g: impl Fn(f64, f64) -> f64) -> Self {
        let mut v = Vec::with_capacity(grid.nt() * grid.nx());
        for k in 0..grid.nt() {
            for j in 0..grid.nx() {
                v.push(g(grid.t(k), grid.x(j)));
            }
        }
        Self::from_values(grid, v).expect("sizes match by construction")
    }

    pub fn grid(&self) -> &SpaceTimeGrid {
        &self.grid
    }

    /// Values at time node `k`.
    pub fn v(&self, k: usize) -> &[f64] {
        let nx = self.grid.nx();
        &self.v[k * nx..(k + 1) * nx]
    }

    /// `∂ₓv` at time node `k`.
    pub fn dv_dx(&self, k: usize) -> &[f64] {
        let nx = self.grid.nx();
        &self.dv_dx[k * nx..(k + 1) * nx]
    }

    /// Second differences at time node `k` for interior nodes
    /// `j = 1..nx−1` (entry `j − 1`).
    pub fn d2v_dx2(&self, k: usize) -> Vec<f64> {
        let h2 = self.grid.dx() * self.grid.dx();
        self.v(k)
            .windows(3)
            .map(|w| (w[0] - 2.0 * w[1] + w[2]) / h2)
            .collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.v
    }

    /// Linear interpolation of `v(t_k, ·)` at `x`.
    pub fn value_at(&self, k: usize, x: f64) -> f64 {
        self.grid.space().interpolate(self.v(k), x)
    }

    /// Bilinear interpolation of `v` at `(t, x)`.
    pub fn interpolate(&self, t: f64, x: f64) -> f64 {
        let (k, w) = self.grid.time().locate(t);
        if w == 0.0 {
            return self.value_at(k, x);
        }
        (1.0 - w) * self.value_at(k, x) + w * self.value_at(k + 1, x)
    }

    /// Largest `|v|` over the whole grid.
    pub fn sup_norm(&self) -> f64 {
        self.v.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_table(w, &self.grid, |k| self.v(k))
    }
}

/// Smallest second difference quotient over all time nodes and interior
/// spatial nodes.
pub fn convexity_margin(vf: &ValueField) -> f64 {
    (0..vf.grid().nt())
        .flat_map(|k| vf.d2v_dx2(k))
        .fold(f64::INFINITY, f64::min)
}

/// Convexity margin away from the truncation edges and the terminal slice:
/// spatial nodes within `strip` of either edge and the last time node (where
/// `v ≡ 0`) are skipped.
pub fn interior_convexity_margin(vf: &ValueField, strip: f64) -> f64 {
    let g = vf.grid();
    let ax = g.space();
    let mut margin = f64::INFINITY;
    for k in 0..g.nt() - 1 {
        for (i, d2) in vf.d2v_dx2(k).into_iter().enumerate() {
            let x = ax.x(i + 1);
            if x - ax.x_min() > strip && ax.x_max() - x > strip {
                margin = margin.min(d2);
            }
        }
    }
    margin
}

/// `ṽ(s, μ_s) = ∫ v(s, x) μ_s(dx)` at the first time node.
pub fn aggregate_value(vf: &ValueField, mu_s: &GridMeasure) -> Result<f64> {
    if mu_s.axis() != vf.grid().space() {
        return Err(Error::GridMismatch(
            "aggregate value: measure and value field on different axes".into(),
        ));
    }
    Ok(mu_s.integrate(vf.v(0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> SpaceTimeGrid {
        SpaceTimeGrid::new(-2.0, 2.0, 81, 0.0, 1.0, 5).unwrap()
    }

    #[test]
    fn quadratic_margin_is_two() {
        let vf = ValueField::from_fn(grid(), |_, x| x * x);
        assert!((convexity_margin(&vf) - 2.0).abs() < 1e-9);
        let zero = ValueField::from_fn(grid(), |_, _| 0.0);
        assert_eq!(convexity_margin(&zero), 0.0);
    }

    #[test]
    fn derivative_wiring() {
        let vf = ValueField::from_fn(grid(), |t, x| (x * (1.0 + t)).sin());
        let dx = vf.grid().dx();
        for k in 0..5 {
            let v = vf.v(k);
            let d = vf.dv_dx(k);
            assert!((d[0] - (v[1] - v[0]) / dx).abs() <= 1e-12);
            assert!((d[80] - (v[80] - v[79]) / dx).abs() <= 1e-12);
            for j in 1..80 {
                assert!((d[j] - (v[j + 1] - v[j - 1]) / (2.0 * dx)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn aggregate_examples() {
        let g = SpaceTimeGrid::new(-8.0, 8.0, 801, 0.0, 1.0, 3).unwrap();
        let mu = GridMeasure::gaussian(g.space(), 0.0, 1.0).unwrap();
        let zero = ValueField::from_fn(g, |_, _| 0.0);
        assert_eq!(aggregate_value(&zero, &mu).unwrap(), 0.0);
        let c = ValueField::from_fn(g, |_, _| 2.5);
        assert!((aggregate_value(&c, &mu).unwrap() - 2.5).abs() < 1e-14);
        let sq = ValueField::from_fn(g, |_, x| x * x);
        assert!((aggregate_value(&sq, &mu).unwrap() - 1.0).abs() < 1e-3);
    }
}
