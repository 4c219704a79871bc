use std::io::{BufRead, Write};

use super::ValueField;
use crate::error::{Error, Result};
use crate::measure::SpaceTimeGrid;
use crate::model::ModelSpec;

/// Bang-bang feedback `φ(t, x) = +θ` for `x ≤ a(t)`, `−θ` for `x ≥ b(t)`
/// and 0 in between, with boundaries stored at the time nodes of a grid.
///
/// An empty push-up region is encoded as `a = x_min − dx`, an empty
/// push-down region as `b = x_max + dx`.
#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdPolicy {
    grid: SpaceTimeGrid,
    lower: Vec<f64>,
    upper: Vec<f64>,
    theta: f64,
}

/// Control of a threshold rule at one point; the closed inequalities
/// send `x = a` to `+θ` and `x = b` to `−θ`.
#[inline]
pub fn threshold_control(a: f64, b: f64, theta: f64, x: f64) -> f64 {
    if x <= a {
        theta
    } else if x >= b {
        -theta
    } else {
        0.0
    }
}

impl ThresholdPolicy {
    pub fn new(grid: SpaceTimeGrid, lower: Vec<f64>, upper: Vec<f64>, theta: f64) -> Result<Self> {
        if lower.len() != grid.nt() || upper.len() != grid.nt() {
            return Err(Error::GridMismatch(format!(
                "policy needs {} boundary values per side",
                grid.nt()
            )));
        }
        if !(theta.is_finite() && theta > 0.0) {
            return Err(Error::InvalidArgument(format!("theta must be positive, got {theta}")));
        }
        if let Some(k) = (0..grid.nt()).find(|&k| !(lower[k] <= upper[k])) {
            return Err(Error::InvalidArgument(format!(
                "boundaries cross at time index {k}: a = {}, b = {}",
                lower[k], upper[k]
            )));
        }
        Ok(Self {
            grid,
            lower,
            upper,
            theta,
        })
    }

    /// The rule that never acts (both regions empty at every time).
    pub fn inactive(grid: SpaceTimeGrid, theta: f64) -> Result<Self> {
        let ax = grid.space();
        let nt = grid.nt();
        Self::new(
            grid,
            vec![ax.x_min() - ax.dx(); nt],
            vec![ax.x_max() + ax.dx(); nt],
            theta,
        )
    }

    pub fn grid(&self) -> &SpaceTimeGrid {
        &self.grid
    }
    pub fn lower(&self) -> &[f64] {
        &self.lower
    }
    pub fn upper(&self) -> &[f64] {
        &self.upper
    }
    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Control at time node `k`.
    pub fn control_at_node(&self, k: usize, x: f64) -> f64 {
        threshold_control(self.lower[k], self.upper[k], self.theta, x)
    }

    /// Boundaries at time `t`, linearly interpolated between nodes.
    pub fn boundaries_at(&self, t: f64) -> (f64, f64) {
        let (k, w) = self.grid.time().locate(t);
        let lerp = |v: &[f64]| v[k] + w * (v[k + 1] - v[k]);
        (lerp(&self.lower), lerp(&self.upper))
    }

    pub fn control(&self, t: f64, x: f64) -> f64 {
        let (a, b) = self.boundaries_at(t);
        threshold_control(a, b, self.theta, x)
    }

    /// Same boundaries with another velocity.
    pub fn with_theta(&self, theta: f64) -> Result<Self> {
        Self::new(self.grid, self.lower.clone(), self.upper.clone(), theta)
    }

    /// Boundaries translated by `delta`. Sentinels for empty regions stay
    /// where they are; moved boundaries are kept within one cell of the
    /// domain.
    pub fn shifted(&self, delta: f64) -> Self {
        let ax = self.grid.space();
        let (lo, hi, dx) = (ax.x_min(), ax.x_max(), ax.dx());
        let shift = |v: f64| {
            if v < lo || v > hi {
                v
            } else {
                (v + delta).clamp(lo - dx, hi + dx)
            }
        };
        let lower: Vec<f64> = self.lower.iter().map(|&v| shift(v)).collect();
        let upper: Vec<f64> = self
            .upper
            .iter()
            .zip(&lower)
            .map(|(&v, &a)| shift(v).max(a))
            .collect();
        Self {
            grid: self.grid,
            lower,
            upper,
            theta: self.theta,
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,a,b,theta")?;
        for k in 0..self.grid.nt() {
            writeln!(
                w,
                "{:e},{:e},{:e},{:e}",
                self.grid.t(k),
                self.lower[k],
                self.upper[k],
                self.theta
            )?;
        }
        Ok(())
    }

    /// Read boundaries written by [`write_csv`](Self::write_csv); the
    /// spatial axis is not part of the file and must be supplied.
    pub fn read_csv<R: BufRead>(r: R, grid: SpaceTimeGrid) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Csv("empty input".into()))??;
        if header.trim() != "t,a,b,theta" {
            return Err(Error::Csv(format!("unexpected policy header `{header}`")));
        }
        let (mut lower, mut upper, mut theta) = (Vec::new(), Vec::new(), None);
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Csv(format!("line {}: bad number", i + 2)))?;
            if vals.len() != 4 {
                return Err(Error::Csv(format!("line {}: expected 4 fields", i + 2)));
            }
            lower.push(vals[1]);
            upper.push(vals[2]);
            theta = Some(vals[3]);
        }
        let theta = theta.ok_or_else(|| Error::Csv("no policy rows".into()))?;
        Self::new(grid, lower, upper, theta)
    }
}

/// Locate the free boundaries of the bang-bang rule from `∂ₓv`.
///
/// Per time slice, `a` is the crossing of `−γ1` after the last node with
/// `∂ₓv ≤ −γ1` and `b` the crossing of `γ2` before the first node with
/// `∂ₓv ≥ γ2`, both by linear interpolation between bracketing nodes.
pub fn extract_policy(vf: &ValueField, model: &ModelSpec) -> Result<ThresholdPolicy> {
    let theta = model.require_theta()?;
    let (g1, g2) = (model.gamma1(), model.gamma2());
    let grid = *vf.grid();
    let ax = grid.space();
    let (nx, dx) = (ax.nx(), ax.dx());
    let below = ax.x_min() - dx;
    let above = ax.x_max() + dx;
    let mut lower = Vec::with_capacity(grid.nt());
    let mut upper = Vec::with_capacity(grid.nt());
    for k in 0..grid.nt() {
        let p = vf.dv_dx(k);
        let (lo, hi) = p
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
        let tolerance = 1e-6 * (hi - lo);
        let drop = p
            .windows(2)
            .map(|w| w[0] - w[1])
            .fold(0.0, f64::max);
        if drop > tolerance {
            return Err(Error::ConvexityViolation {
                time_index: k,
                drop,
                tolerance,
            });
        }
        let a = match p.iter().rposition(|&q| q <= -g1) {
            None => below,
            Some(j) if j + 1 == nx => above,
            Some(j) => {
                let w = ((-g1 - p[j]) / (p[j + 1] - p[j])).clamp(0.0, 1.0);
                ax.x(j) + w * dx
            }
        };
        let b = match p.iter().position(|&q| q >= g2) {
            None => above,
            Some(0) => below,
            Some(j) => {
                let w = ((g2 - p[j - 1]) / (p[j] - p[j - 1])).clamp(0.0, 1.0);
                ax.x(j - 1) + w * dx
            }
        };
        lower.push(a);
        upper.push(b.max(a));
    }
    ThresholdPolicy::new(grid, lower, upper, theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_preset, Preset, PresetParams};

    fn model(g: f64) -> ModelSpec {
        let mut p = PresetParams::defaults(Preset::Decoupled);
        p.gamma1 = g;
        p.gamma2 = g;
        build_preset(Preset::Decoupled, &p).unwrap()
    }

    fn grid() -> SpaceTimeGrid {
        SpaceTimeGrid::new(-2.0, 2.0, 81, 0.0, 1.0, 4).unwrap()
    }

    #[test]
    fn zero_value_gives_inaction() {
        let vf = ValueField::from_fn(grid(), |_, _| 0.0);
        let pol = extract_policy(&vf, &model(1.0)).unwrap();
        for k in 0..4 {
            assert_eq!(pol.lower()[k], -2.05);
            assert_eq!(pol.upper()[k], 2.05);
            for j in 0..81 {
                assert_eq!(pol.control_at_node(k, grid().x(j)), 0.0);
            }
        }
    }

    #[test]
    fn quadratic_value_thresholds() {
        let vf = ValueField::from_fn(grid(), |_, x| x * x);
        let pol = extract_policy(&vf, &model(1.0)).unwrap();
        for k in 0..4 {
            assert!((pol.lower()[k] + 0.5).abs() < 1e-12);
            assert!((pol.upper()[k] - 0.5).abs() < 1e-12);
        }
        assert_eq!(pol.control(0.3, -0.5 - 1e-9), 2.0);
        assert_eq!(pol.control(0.3, 0.0), 0.0);
        assert_eq!(pol.control(0.3, 0.7), -2.0);
    }

    #[test]
    fn nonconvex_value_is_reported() {
        let vf = ValueField::from_fn(grid(), |_, x| -x * x);
        assert!(matches!(
            extract_policy(&vf, &model(1.0)),
            Err(Error::ConvexityViolation { .. })
        ));
    }

    #[test]
    fn shifts_keep_sentinels() {
        let g = grid();
        let pol = ThresholdPolicy::new(g, vec![-2.05, -1.0, -0.5, 0.0], vec![2.05, 1.0, 0.5, 0.0], 1.0)
            .unwrap();
        let s = pol.shifted(0.2);
        assert_eq!(s.lower()[0], -2.05);
        assert_eq!(s.upper()[0], 2.05);
        assert!((s.lower()[1] + 0.8).abs() < 1e-15);
        assert!((s.upper()[3] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn csv_round_trip() {
        let g = grid();
        let pol = ThresholdPolicy::new(g, vec![-2.05, -1.0, -0.51, 0.1], vec![2.05, 1.0, 0.5, 0.1], 1.5)
            .unwrap();
        let mut buf = Vec::new();
        pol.write_csv(&mut buf).unwrap();
        assert_eq!(ThresholdPolicy::read_csv(&buf[..], g).unwrap(), pol);
    }

    #[test]
    fn time_interpolation_is_linear() {
        let g = grid();
        let pol = ThresholdPolicy::new(g, vec![-1.0, -0.4, -0.4, -0.4], vec![1.0, 1.3, 1.3, 1.3], 1.0)
            .unwrap();
        let (a, b) = pol.boundaries_at(g.dt() * 0.25);
        assert!((a + 0.85).abs() < 1e-12);
        assert!((b - 1.075).abs() < 1e-12);
    }
}
