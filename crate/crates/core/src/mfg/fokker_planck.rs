use crate::error::{Error, Result};
use crate::hjb::ThresholdPolicy;
use crate::measure::{GridMeasure, GridMeasureFlow, SpaceAxis, SpaceTimeGrid};
use crate::model::{CoefficientTables, MeanFieldCoefficients, ModelSpec};
use crate::tridiag::Tridiagonal;

/// Densities below this after a step are reported instead of clipped.
pub const NEGATIVE_DENSITY_TOLERANCE: f64 = 1e-12;

/// Mean of the threshold control over the cell `[left, right]`: `+θ` on the
/// part below `a`, `−θ` on the part above `b`.
fn cell_control(a: f64, b: f64, theta: f64, left: f64, right: f64) -> f64 {
    let width = right - left;
    let up = ((a.min(right) - left) / width).clamp(0.0, 1.0);
    let down = ((right - b.max(left)) / width).clamp(0.0, 1.0);
    theta * (up - down)
}

/// Conservative finite-volume propagator for
/// `∂ₜm = −∂ₓ[(b + φ)m] + (σ²/2)∂ₓₓm` with no-flux ends.
///
/// Unknowns are nodal masses on the dual cells of the axis (half cells at
/// the two ends). A step moves mass across cell faces with first-order
/// upwind fluxes, then applies backward-Euler diffusion solved for the
/// nodal densities. The face velocity is `b` at the face plus the
/// threshold control averaged over the primal cell, so the flux depends
/// continuously on the free boundaries.
///
/// The end cells are half as wide as the others; their outflow is capped
/// at the mass they hold, which keeps the step positive under the same
/// bound `dt·|velocity|/dx ≤ 1` as the interior.
pub(crate) struct FpStepper {
    axis: SpaceAxis,
    dt: f64,
    implicit: Tridiagonal,
    velocity: Vec<f64>,
    flux: Vec<f64>,
    work: Vec<f64>,
}

impl FpStepper {
    pub(crate) fn new(model: &ModelSpec, grid: &SpaceTimeGrid) -> Self {
        let axis = *grid.space();
        let (nx, dx, dt) = (axis.nx(), axis.dx(), grid.dt());
        let alpha = dt * 0.5 * model.sigma() * model.sigma() / dx;
        let mut lower = vec![-alpha; nx];
        let mut diag: Vec<f64> = (0..nx).map(|j| axis.weight(j) + 2.0 * alpha).collect();
        let mut upper = vec![-alpha; nx];
        diag[0] -= alpha;
        diag[nx - 1] -= alpha;
        lower[0] = 0.0;
        upper[nx - 1] = 0.0;
        Self {
            axis,
            dt,
            implicit: Tridiagonal::new(lower, diag, upper),
            velocity: vec![0.0; nx - 1],
            flux: vec![0.0; nx - 1],
            work: vec![0.0; nx],
        }
    }

    /// Worst `dt·outflow/dx` over nodes for the current face velocities.
    fn cfl_ratio(&self) -> f64 {
        let u = &self.velocity;
        let n = u.len() + 1;
        let mut worst: f64 = 0.0;
        for j in 0..n {
            let right = if j + 1 < n { u[j].max(0.0) } else { 0.0 };
            let left = if j > 0 { (-u[j - 1]).max(0.0) } else { 0.0 };
            worst = worst.max(right + left);
        }
        worst * self.dt / self.axis.dx()
    }

    /// Advance `m` by one step with face drift `b_faces` and the policy's
    /// boundaries at time node `k`.
    pub(crate) fn step(
        &mut self,
        m: &GridMeasure,
        b_faces: &[f64],
        policy: &ThresholdPolicy,
        k: usize,
        nt_now: usize,
    ) -> Result<GridMeasure> {
        let ax = self.axis;
        let nx = ax.nx();
        let (a, b, theta) = (policy.lower()[k], policy.upper()[k], policy.theta());
        for j in 0..nx - 1 {
            self.velocity[j] = b_faces[j] + cell_control(a, b, theta, ax.x(j), ax.x(j + 1));
        }
        let ratio = self.cfl_ratio();
        if ratio > 1.0 {
            return Err(Error::Cfl {
                stage: "fokker-planck",
                ratio,
                suggested_nt: ((nt_now - 1) as f64 * ratio).ceil() as usize + 1,
            });
        }

        let mass = m.masses();
        let dt = self.dt;
        for j in 0..nx - 1 {
            let u = self.velocity[j];
            let moved = if u >= 0.0 {
                dt * u * mass[j] / ax.weight(j)
            } else {
                dt * u * mass[j + 1] / ax.weight(j + 1)
            };
            self.flux[j] = moved;
        }
        self.flux[0] = self.flux[0].min(mass[0]);
        self.flux[nx - 2] = self.flux[nx - 2].max(-mass[nx - 1]);

        let rho = &mut self.work;
        for j in 0..nx {
            let out = if j + 1 < nx { self.flux[j] } else { 0.0 };
            let inc = if j > 0 { self.flux[j - 1] } else { 0.0 };
            rho[j] = mass[j] - out + inc;
        }
        self.implicit.solve_in_place(rho);

        let mut next = Vec::with_capacity(nx);
        for (j, &r) in rho.iter().enumerate() {
            if r < -NEGATIVE_DENSITY_TOLERANCE || !r.is_finite() {
                return Err(Error::NegativeDensity {
                    step: k,
                    node: j,
                    value: r,
                });
            }
            next.push(r.max(0.0) * ax.weight(j));
        }
        GridMeasure::from_masses(&ax, next)
    }
}

/// One step `m_k → m_{k+1}` of the Fokker–Planck equation, with the
/// population drift evaluated against `drift_flow` at time node `k`.
pub fn fokker_planck_step(
    model: &ModelSpec,
    policy: &ThresholdPolicy,
    drift_flow: &GridMeasureFlow,
    m_k: &GridMeasure,
    k: usize,
) -> Result<GridMeasure> {
    let grid = *drift_flow.grid();
    grid.ensure_same(policy.grid(), "fokker-planck step")?;
    if m_k.axis() != grid.space() {
        return Err(Error::GridMismatch(
            "fokker-planck step: measure and flow on different axes".into(),
        ));
    }
    if k + 1 >= grid.nt() {
        return Err(Error::InvalidArgument(format!(
            "time index {k} has no successor on a grid with {} nodes",
            grid.nt()
        )));
    }
    let nx = grid.nx();
    let coeffs = MeanFieldCoefficients::new(model, *grid.space());
    let mut nodes = vec![0.0; nx];
    let mut faces = vec![0.0; nx - 1];
    coeffs.drift_grid(drift_flow.slice(k), &mut nodes, &mut faces);
    FpStepper::new(model, &grid).step(m_k, &faces, policy, k, grid.nt())
}

/// Push `initial` forward under `policy` and the drift tables, returning
/// the whole flow.
pub fn propagate(
    model: &ModelSpec,
    policy: &ThresholdPolicy,
    tables: &CoefficientTables,
    initial: &GridMeasure,
) -> Result<GridMeasureFlow> {
    let grid = *tables.grid();
    grid.ensure_same(policy.grid(), "propagation")?;
    let mut stepper = FpStepper::new(model, &grid);
    let mut slices = Vec::with_capacity(grid.nt());
    slices.push(initial.clone());
    for k in 0..grid.nt() - 1 {
        let next = stepper.step(&slices[k], tables.b_faces(k), policy, k, grid.nt())?;
        slices.push(next);
    }
    GridMeasureFlow::new(grid, slices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_preset, Drift, RunningCost};

    #[test]
    fn cell_control_fractions() {
        assert_eq!(cell_control(-10.0, 10.0, 2.0, 0.0, 1.0), 0.0);
        assert_eq!(cell_control(10.0, 20.0, 2.0, 0.0, 1.0), 2.0);
        assert_eq!(cell_control(-20.0, -10.0, 2.0, 0.0, 1.0), -2.0);
        assert!((cell_control(0.25, 0.5, 2.0, 0.0, 1.0) - 2.0 * (0.25 - 0.5)).abs() < 1e-15);
    }

    fn model_with(drift: Drift, sigma: f64, theta: f64) -> ModelSpec {
        let mut p = make_preset("decoupled").unwrap().params();
        p.drift = drift;
        p.cost = RunningCost::zero();
        p.sigma = sigma;
        p.theta = Some(theta);
        ModelSpec::new(p).unwrap()
    }

    #[test]
    fn constant_drift_moves_the_mean() {
        let m = model_with(Drift::Constant(0.8), 1e-3, 1.0);
        let grid = SpaceTimeGrid::new(-5.0, 5.0, 401, 0.0, 1.0, 101).unwrap();
        let mu = GridMeasure::gaussian(grid.space(), -1.0, 0.3).unwrap();
        let flow = GridMeasureFlow::constant(grid, &mu).unwrap();
        let idle = ThresholdPolicy::inactive(grid, 1.0).unwrap();
        let mut cur = mu;
        for k in 0..100 {
            let next = fokker_planck_step(&m, &idle, &flow, &cur, k).unwrap();
            assert!((next.mean() - cur.mean() - 0.8 * grid.dt()).abs() < 1e-12);
            assert!((next.total_mass() - 1.0).abs() < 1e-12);
            cur = next;
        }
    }

    #[test]
    fn heat_kernel_variance() {
        let m = model_with(Drift::Zero, 1.0, 1.0);
        let grid = SpaceTimeGrid::new(-5.0, 5.0, 401, 0.0, 0.5, 201).unwrap();
        let mu = GridMeasure::gaussian(grid.space(), 0.0, 0.5).unwrap();
        let tables = CoefficientTables::from_flow(&m, &GridMeasureFlow::constant(grid, &mu).unwrap());
        let idle = ThresholdPolicy::inactive(grid, 1.0).unwrap();
        let flow = propagate(&m, &idle, &tables, &mu).unwrap();
        let var = flow.slice(200).variance();
        assert!((var - 0.75).abs() < 0.0075, "variance {var}");
    }

    #[test]
    fn full_push_piles_up_at_the_edge_without_leaking() {
        let m = model_with(Drift::Zero, 0.2, 3.0);
        let grid = SpaceTimeGrid::new(-1.0, 1.0, 41, 0.0, 2.0, 121).unwrap();
        let mu = GridMeasure::uniform(grid.space(), -0.5, 0.5).unwrap();
        let tables = CoefficientTables::from_flow(&m, &GridMeasureFlow::constant(grid, &mu).unwrap());
        let nt = grid.nt();
        let up = ThresholdPolicy::new(grid, vec![2.0; nt], vec![2.0; nt], 3.0).unwrap();
        let flow = propagate(&m, &up, &tables, &mu).unwrap();
        for s in flow.slices() {
            assert!((s.total_mass() - 1.0).abs() < 1e-12);
            assert!(s.masses().iter().all(|&x| x >= 0.0));
        }
        assert!(flow.slice(nt - 1).mean() > 0.8);
    }

    #[test]
    fn cfl_violation_is_reported() {
        let m = model_with(Drift::Zero, 1.0, 10.0);
        let grid = SpaceTimeGrid::new(-1.0, 1.0, 41, 0.0, 1.0, 11).unwrap();
        let mu = GridMeasure::gaussian(grid.space(), 0.0, 0.3).unwrap();
        let flow = GridMeasureFlow::constant(grid, &mu).unwrap();
        let nt = grid.nt();
        let up = ThresholdPolicy::new(grid, vec![0.0; nt], vec![0.5; nt], 10.0).unwrap();
        match fokker_planck_step(&m, &up, &flow, &mu, 0) {
            Err(Error::Cfl { suggested_nt, .. }) => {
                let fine = grid.with_nt(suggested_nt).unwrap();
                let flow = GridMeasureFlow::constant(fine, &mu).unwrap();
                let up = ThresholdPolicy::new(fine, vec![0.0; suggested_nt], vec![0.5; suggested_nt], 10.0)
                    .unwrap();
                assert!(fokker_planck_step(&m, &up, &flow, &mu, 0).is_ok());
            }
            other => panic!("expected CFL error, got {other:?}"),
        }
    }
}
