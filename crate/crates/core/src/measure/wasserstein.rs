//! Exact one-dimensional optimal transport.
//!
//! In 1-D the optimal coupling is the monotone rearrangement, so
//! `W_p(μ, ν)^p = ∫₀¹ |F_μ⁻¹(u) − F_ν⁻¹(u)|^p du`. Both quantile functions
//! are piecewise linear (grid measures) or piecewise constant (atomic
//! measures), and the integral is evaluated in closed form over the merged
//! breakpoints instead of on a sampled `u`-grid.

use serde::{Deserialize, Serialize};

use super::{GridMeasure, GridMeasureFlow};
use crate::error::{Error, Result};

/// Order `p` of the Wasserstein distance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Order {
    One,
    Two,
}

impl Order {
    pub fn from_p(p: u32) -> Result<Self> {
        match p {
            1 => Ok(Order::One),
            2 => Ok(Order::Two),
            _ => Err(Error::InvalidArgument(format!(
                "Wasserstein order must be 1 or 2, got {p}"
            ))),
        }
    }
}

/// `∫ |d(u)|^p du` over an interval of length `h` where `d` is linear
/// with end values `d0`, `d1`.
fn linear_piece(d0: f64, d1: f64, h: f64, order: Order) -> f64 {
    match order {
        Order::One => {
            let (a0, a1) = (d0.abs(), d1.abs());
            if d0 * d1 >= 0.0 {
                0.5 * (a0 + a1) * h
            } else {
                0.5 * (d0 * d0 + d1 * d1) / (a0 + a1) * h
            }
        }
        Order::Two => (d0 * d0 + d0 * d1 + d1 * d1) / 3.0 * h,
    }
}

fn finish(sum: f64, order: Order) -> f64 {
    match order {
        Order::One => sum,
        Order::Two => sum.max(0.0).sqrt(),
    }
}

/// One linear piece of a quantile function: on `[u0, u1]` it runs from
/// `x0` to `x1`.
#[derive(Clone, Copy, Debug)]
struct Piece {
    u0: f64,
    u1: f64,
    x0: f64,
    x1: f64,
}

impl Piece {
    fn at(&self, u: f64) -> f64 {
        if u <= self.u0 {
            self.x0
        } else if u >= self.u1 {
            self.x1
        } else {
            self.x0 + (u - self.u0) / (self.u1 - self.u0) * (self.x1 - self.x0)
        }
    }
}

fn quantile_pieces(mu: &GridMeasure) -> Vec<Piece> {
    let f = mu.cdf();
    let axis = mu.axis();
    (0..axis.nx() - 1)
        .filter(|&j| f[j + 1] > f[j])
        .map(|j| Piece {
            u0: f[j],
            u1: f[j + 1],
            x0: axis.x(j),
            x1: axis.x(j + 1),
        })
        .collect()
}

/// `D^p(μ, ν)` for measures on the same axis.
pub fn wasserstein(mu: &GridMeasure, nu: &GridMeasure, order: Order) -> Result<f64> {
    if mu.axis() != nu.axis() {
        return Err(Error::GridMismatch(
            "Wasserstein distance between measures on different axes".into(),
        ));
    }
    let a = quantile_pieces(mu);
    let b = quantile_pieces(nu);
    let (mut i, mut j) = (0, 0);
    let mut u = 0.0;
    let mut sum = 0.0;
    while i < a.len() && j < b.len() {
        let end = a[i].u1.min(b[j].u1);
        if end > u {
            let d0 = a[i].at(u) - b[j].at(u);
            let d1 = a[i].at(end) - b[j].at(end);
            sum += linear_piece(d0, d1, end - u, order);
            u = end;
        }
        if a[i].u1 <= end {
            i += 1;
        }
        if b[j].u1 <= end {
            j += 1;
        }
    }
    Ok(finish(sum, order))
}

/// `D¹(μ, ν) = ∫ |F_μ(x) − F_ν(x)| dx`, the CDF-area form.
pub fn wasserstein_cdf_area(mu: &GridMeasure, nu: &GridMeasure) -> Result<f64> {
    if mu.axis() != nu.axis() {
        return Err(Error::GridMismatch(
            "Wasserstein distance between measures on different axes".into(),
        ));
    }
    Ok(cdf_area(&mu.cdf(), &nu.cdf(), mu.axis().dx()))
}

fn cdf_area(fa: &[f64], fb: &[f64], dx: f64) -> f64 {
    let mut sum = 0.0;
    let mut prev = fa[0] - fb[0];
    for (a, b) in fa.iter().zip(fb).skip(1) {
        let d = a - b;
        sum += linear_piece(prev, d, dx, Order::One);
        prev = d;
    }
    sum
}

/// `d_M(a, b) = max_k D²(a_k, b_k)`.
pub fn flow_distance(a: &GridMeasureFlow, b: &GridMeasureFlow) -> Result<f64> {
    a.grid().ensure_same(b.grid(), "flow distance")?;
    let mut worst: f64 = 0.0;
    for (x, y) in a.slices().iter().zip(b.slices()) {
        worst = worst.max(wasserstein(x, y, Order::Two)?);
    }
    Ok(worst)
}

/// Empirical regularity constants of a flow.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowRegularity {
    /// `max_{k<l} D¹(μ_k, μ_l) / sqrt(t_l − t_k)`.
    pub holder_seminorm: f64,
    /// `max_k ∫ x² dμ_k`.
    pub max_second_moment: f64,
}

pub fn flow_regularity(flow: &GridMeasureFlow) -> FlowRegularity {
    let grid = flow.grid();
    let dx = grid.dx();
    let cdfs: Vec<Vec<f64>> = flow.slices().iter().map(GridMeasure::cdf).collect();
    let mut holder: f64 = 0.0;
    for k in 0..cdfs.len() {
        for l in k + 1..cdfs.len() {
            let w = cdf_area(&cdfs[k], &cdfs[l], dx);
            holder = holder.max(w / (grid.t(l) - grid.t(k)).sqrt());
        }
    }
    let max_second_moment = flow
        .slices()
        .iter()
        .map(GridMeasure::second_moment)
        .fold(0.0, f64::max);
    FlowRegularity {
        holder_seminorm: holder,
        max_second_moment,
    }
}

/// Finitely supported probability measure on the real line.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMeasure {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    /// Atoms `(location, weight)`; weights are normalized, atoms sorted.
    pub fn new(atoms: &[(f64, f64)]) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::EmptySamples);
        }
        if atoms
            .iter()
            .any(|(x, w)| !x.is_finite() || !(w.is_finite() && *w >= 0.0))
        {
            return Err(Error::InvalidMeasure("atoms need finite data and w >= 0".into()));
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if !(total > 0.0) {
            return Err(Error::InvalidMeasure("atom weights sum to zero".into()));
        }
        let mut sorted: Vec<(f64, f64)> = atoms.to_vec();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self {
            points: sorted.iter().map(|a| a.0).collect(),
            weights: sorted.iter().map(|a| a.1 / total).collect(),
        })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn breakpoints(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut out: Vec<f64> = self
            .weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        *out.last_mut().unwrap() = 1.0;
        out
    }
}

/// `D^p` between atomic measures via their step quantile functions.
pub fn wasserstein_discrete(mu: &DiscreteMeasure, nu: &DiscreteMeasure, order: Order) -> f64 {
    let (ua, ub) = (mu.breakpoints(), nu.breakpoints());
    let (mut i, mut j) = (0, 0);
    let mut u = 0.0;
    let mut sum = 0.0;
    while i < ua.len() && j < ub.len() {
        let end = ua[i].min(ub[j]);
        if end > u {
            let d = (mu.points[i] - nu.points[j]).abs();
            sum += match order {
                Order::One => d,
                Order::Two => d * d,
            } * (end - u);
            u = end;
        }
        if ua[i] <= end {
            i += 1;
        }
        if ub[j] <= end {
            j += 1;
        }
    }
    finish(sum, order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{SpaceAxis, SpaceTimeGrid};

    #[test]
    fn two_atom_example() {
        let mu = DiscreteMeasure::new(&[(0.0, 0.5), (1.0, 0.5)]).unwrap();
        let nu = DiscreteMeasure::new(&[(0.0, 0.25), (1.0, 0.75)]).unwrap();
        assert!((wasserstein_discrete(&mu, &nu, Order::One) - 0.25).abs() < 1e-15);
        assert!((wasserstein_discrete(&mu, &nu, Order::Two) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn identical_measures_are_at_zero_distance() {
        let a = SpaceAxis::new(-3.0, 3.0, 121).unwrap();
        let m = GridMeasure::gaussian(&a, 0.2, 0.4).unwrap();
        assert_eq!(wasserstein(&m, &m, Order::One).unwrap(), 0.0);
        assert_eq!(wasserstein(&m, &m, Order::Two).unwrap(), 0.0);
    }

    #[test]
    fn translated_gaussians() {
        let a = SpaceAxis::new(-4.0, 4.0, 801).unwrap();
        let (p, q) = (-1.3, 0.9);
        let mu = GridMeasure::gaussian(&a, p, 0.05).unwrap();
        let nu = GridMeasure::gaussian(&a, q, 0.05).unwrap();
        let w2 = wasserstein(&mu, &nu, Order::Two).unwrap();
        assert!((w2 - (q - p)).abs() <= 2.0 * a.dx(), "{w2}");
    }

    #[test]
    fn diracs_at_nodes_translate_exactly() {
        let a = SpaceAxis::new(0.0, 1.0, 11).unwrap();
        let mu = GridMeasure::dirac(&a, 3).unwrap();
        let nu = GridMeasure::dirac(&a, 7).unwrap();
        assert!((wasserstein(&mu, &nu, Order::Two).unwrap() - 0.4).abs() < 1e-14);
        assert!((wasserstein(&mu, &nu, Order::One).unwrap() - 0.4).abs() < 1e-14);
    }

    #[test]
    fn quantile_and_cdf_forms_agree() {
        let a = SpaceAxis::new(-2.0, 2.0, 81).unwrap();
        let mu = GridMeasure::gaussian(&a, -0.5, 0.3).unwrap();
        let nu = GridMeasure::uniform(&a, -0.2, 1.4).unwrap();
        let q = wasserstein(&mu, &nu, Order::One).unwrap();
        let c = wasserstein_cdf_area(&mu, &nu).unwrap();
        assert!((q - c).abs() < 1e-12, "{q} {c}");
    }

    #[test]
    fn mismatched_axes_error() {
        let a = SpaceAxis::new(-2.0, 2.0, 81).unwrap();
        let b = SpaceAxis::new(-2.0, 2.0, 41).unwrap();
        let mu = GridMeasure::gaussian(&a, 0.0, 0.3).unwrap();
        let nu = GridMeasure::gaussian(&b, 0.0, 0.3).unwrap();
        assert!(matches!(
            wasserstein(&mu, &nu, Order::Two),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn flow_distance_is_max_over_slices() {
        let g = SpaceTimeGrid::new(-3.0, 3.0, 61, 0.0, 1.0, 4).unwrap();
        let a = g.space();
        let base = GridMeasure::gaussian(a, 0.0, 0.5).unwrap();
        let shifted = GridMeasure::gaussian(a, 0.3, 0.5).unwrap();
        let f1 = GridMeasureFlow::constant(g, &base).unwrap();
        let mut slices = vec![base.clone(); 4];
        slices[2] = shifted.clone();
        let f2 = GridMeasureFlow::new(g, slices).unwrap();
        let d = flow_distance(&f1, &f2).unwrap();
        assert_eq!(d, wasserstein(&base, &shifted, Order::Two).unwrap());
        assert!((d - 0.3).abs() < 1e-3);
        assert_eq!(flow_distance(&f1, &f1).unwrap(), 0.0);
    }

    #[test]
    fn constant_flow_has_zero_holder_constant() {
        let g = SpaceTimeGrid::new(-3.0, 3.0, 61, 0.0, 1.0, 6).unwrap();
        let m = GridMeasure::gaussian(g.space(), 0.4, 0.5).unwrap();
        let r = flow_regularity(&GridMeasureFlow::constant(g, &m).unwrap());
        assert_eq!(r.holder_seminorm, 0.0);
        assert!((r.max_second_moment - m.second_moment()).abs() < 1e-15);
    }
}
