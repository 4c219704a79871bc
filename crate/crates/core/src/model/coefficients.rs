use super::{Drift, ModelSpec, RunningCost};
use crate::kernel::{Correlator, CorrelatorWorkspace};
use crate::measure::{GridMeasure, GridMeasureFlow, SpaceAxis, SpaceTimeGrid};

pub(crate) fn drift_direct(drift: &Drift, x: f64, mu: &GridMeasure) -> f64 {
    if !drift.uses_population() {
        return drift.eval(x, 0.0);
    }
    let axis = mu.axis();
    let mut acc = 0.0;
    for (j, &m) in mu.masses().iter().enumerate() {
        if m != 0.0 {
            acc += m * drift.eval(x, axis.x(j));
        }
    }
    acc
}

pub(crate) fn cost_direct(cost: &RunningCost, x: f64, mu: &GridMeasure) -> f64 {
    if !cost.uses_population() {
        return cost.eval(x, 0.0);
    }
    let axis = mu.axis();
    let mut acc = 0.0;
    for (j, &m) in mu.masses().iter().enumerate() {
        if m != 0.0 {
            acc += m * cost.eval(x, axis.x(j));
        }
    }
    acc
}

/// Evaluates `b(·, μ)` and `f(·, μ)` on every node (and `b` on every
/// cell face) of a fixed spatial axis.
///
/// Translation-invariant drifts go through an FFT correlation, quadratic
/// costs through the first two moments, anything else through direct
/// `O(nx²)` sums.
pub struct MeanFieldCoefficients<'a> {
    model: &'a ModelSpec,
    axis: SpaceAxis,
    correlator: Option<Correlator>,
}

impl<'a> MeanFieldCoefficients<'a> {
    pub fn new(model: &'a ModelSpec, axis: SpaceAxis) -> Self {
        let correlator = if model.drift().uses_population() {
            model.drift().kernel().map(|k| {
                let dx = axis.dx();
                Correlator::new(axis.nx(), dx, k, &[0.0, -0.5 * dx])
            })
        } else {
            None
        };
        Self {
            model,
            axis,
            correlator,
        }
    }

    pub fn axis(&self) -> &SpaceAxis {
        &self.axis
    }

    pub fn model(&self) -> &ModelSpec {
        self.model
    }

    /// `b(x, μ)` at one point, by direct summation (exact for a Dirac).
    pub fn drift(&self, x: f64, mu: &GridMeasure) -> f64 {
        drift_direct(self.model.drift(), x, mu)
    }

    /// `f(x, μ)` at one point, by direct summation.
    pub fn cost(&self, x: f64, mu: &GridMeasure) -> f64 {
        cost_direct(self.model.cost(), x, mu)
    }

    /// `b` at nodes (`nodes.len() == nx`) and at faces `x_{j+½}`
    /// (`faces.len() == nx − 1`).
    pub fn drift_grid(&self, mu: &GridMeasure, nodes: &mut [f64], faces: &mut [f64]) {
        let drift = self.model.drift();
        let ax = &self.axis;
        if !drift.uses_population() {
            for (j, out) in nodes.iter_mut().enumerate() {
                *out = drift.eval(ax.x(j), 0.0);
            }
            for (j, out) in faces.iter_mut().enumerate() {
                *out = drift.eval(ax.face(j), 0.0);
            }
            return;
        }
        if let Some(c) = &self.correlator {
            let mut ws = CorrelatorWorkspace::default();
            c.correlate(mu.masses(), &mut [nodes, faces], &mut ws);
            return;
        }
        for (j, out) in nodes.iter_mut().enumerate() {
            *out = drift_direct(drift, ax.x(j), mu);
        }
        for (j, out) in faces.iter_mut().enumerate() {
            *out = drift_direct(drift, ax.face(j), mu);
        }
    }

    /// `f` at nodes.
    pub fn cost_nodes(&self, mu: &GridMeasure, nodes: &mut [f64]) {
        let ax = &self.axis;
        match self.model.cost() {
            RunningCost::Quadratic(q) => {
                let (m1, m2) = (mu.mean(), mu.second_moment());
                for (j, out) in nodes.iter_mut().enumerate() {
                    *out = q.mean_field(ax.x(j), m1, m2);
                }
            }
            cost => {
                for (j, out) in nodes.iter_mut().enumerate() {
                    *out = cost_direct(cost, ax.x(j), mu);
                }
            }
        }
    }
}

/// `b` at nodes and faces and `f` at nodes for every slice of a flow,
/// stored slice by slice.
#[derive(Clone, Debug)]
pub struct CoefficientTables {
    grid: SpaceTimeGrid,
    b_nodes: Vec<f64>,
    b_faces: Vec<f64>,
    f_nodes: Vec<f64>,
}

impl CoefficientTables {
    pub fn from_flow(model: &ModelSpec, flow: &GridMeasureFlow) -> Self {
        let grid = *flow.grid();
        let (nt, nx) = (grid.nt(), grid.nx());
        let coeffs = MeanFieldCoefficients::new(model, *grid.space());
        let mut b_nodes = vec![0.0; nt * nx];
        let mut b_faces = vec![0.0; nt * (nx - 1)];
        let mut f_nodes = vec![0.0; nt * nx];
        for k in 0..nt {
            let mu = flow.slice(k);
            coeffs.drift_grid(
                mu,
                &mut b_nodes[k * nx..(k + 1) * nx],
                &mut b_faces[k * (nx - 1)..(k + 1) * (nx - 1)],
            );
            coeffs.cost_nodes(mu, &mut f_nodes[k * nx..(k + 1) * nx]);
        }
        Self {
            grid,
            b_nodes,
            b_faces,
            f_nodes,
        }
    }

    pub fn grid(&self) -> &SpaceTimeGrid {
        &self.grid
    }

    /// `b(x_j, μ_{t_k})`.
    pub fn b_nodes(&self, k: usize) -> &[f64] {
        let nx = self.grid.nx();
        &self.b_nodes[k * nx..(k + 1) * nx]
    }

    /// `b(x_{j+½}, μ_{t_k})`.
    pub fn b_faces(&self, k: usize) -> &[f64] {
        let n = self.grid.nx() - 1;
        &self.b_faces[k * n..(k + 1) * n]
    }

    /// `f(x_j, μ_{t_k})`.
    pub fn f_nodes(&self, k: usize) -> &[f64] {
        let nx = self.grid.nx();
        &self.f_nodes[k * nx..(k + 1) * nx]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_preset, Drift, ModelParams};
    use std::sync::Arc;

    #[test]
    fn dirac_is_exact() {
        let axis = SpaceAxis::new(-2.0, 2.0, 41).unwrap();
        for name in ["crowd-aversion", "mean-reversion", "decoupled"] {
            let m = make_preset(name).unwrap();
            for j in [0, 7, 20, 33, 40] {
                let mu = GridMeasure::dirac(&axis, j).unwrap();
                let y = axis.x(j);
                for x in [-1.9, -0.3, 0.0, 1.25] {
                    assert_eq!(m.mean_drift(x, &mu), m.drift().eval(x, y));
                    assert_eq!(m.mean_cost(x, &mu), m.cost().eval(x, y));
                }
            }
        }
    }

    #[test]
    fn grid_paths_match_direct_sums() {
        let axis = SpaceAxis::new(-3.0, 3.0, 61).unwrap();
        let mu = GridMeasure::gaussian(&axis, 0.3, 0.8).unwrap();
        for name in ["crowd-aversion", "mean-reversion", "decoupled"] {
            let m = make_preset(name).unwrap();
            let c = MeanFieldCoefficients::new(&m, axis);
            let mut nodes = vec![0.0; 61];
            let mut faces = vec![0.0; 60];
            let mut cost = vec![0.0; 61];
            c.drift_grid(&mu, &mut nodes, &mut faces);
            c.cost_nodes(&mu, &mut cost);
            for j in 0..61 {
                assert!((nodes[j] - c.drift(axis.x(j), &mu)).abs() < 1e-12);
                assert!((cost[j] - c.cost(axis.x(j), &mu)).abs() < 1e-12);
            }
            for j in 0..60 {
                assert!((faces[j] - c.drift(axis.face(j), &mu)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn custom_drift_uses_direct_sum() {
        let mut p: ModelParams = make_preset("crowd-aversion").unwrap().params();
        p.drift = Drift::Custom {
            name: "sin(y-x)".into(),
            func: Arc::new(|x, y| (y - x).sin()),
            bound: 1.0,
            uses_population: true,
        };
        let m = ModelSpec::new(p).unwrap();
        let axis = SpaceAxis::new(-1.0, 1.0, 11).unwrap();
        let mu = GridMeasure::from_atoms(&axis, &[(-0.4, 0.5), (0.6, 0.5)]).unwrap();
        let c = MeanFieldCoefficients::new(&m, axis);
        let mut nodes = vec![0.0; 11];
        let mut faces = vec![0.0; 10];
        c.drift_grid(&mu, &mut nodes, &mut faces);
        let x = axis.x(3);
        let expect = 0.5 * (-0.4 - x).sin() + 0.5 * (0.6 - x).sin();
        assert!((nodes[3] - expect).abs() < 1e-14);
    }
}
