//! Backward solution of
//!
//! ```text
//! −∂ₜv = min{(∂ₓv + γ1)θ, (γ2 − ∂ₓv)θ, 0} + b(x, μ_t)∂ₓv + f(x, μ_t) + (σ²/2)∂ₓₓv,   v(T, ·) = 0
//! ```
//!
//! for a frozen measure flow, and extraction of the bang-bang policy.
//!
//! Each backward step is IMEX: the transport, control and source terms are
//! explicit with upwind differences, the diffusion is implicit. The drift
//! is upwinded by the sign of `b`; the push-up branch of the minimum uses
//! the forward difference and the push-down branch the backward difference,
//! which is upwinding by the sign of the control velocity. The explicit
//! update is monotone when `dt·(c1 + θ)/dx ≤ 1`. At the two edge rows the
//! ghost value continues `v` linearly and the implicit row is the identity,
//! so `∂ₓₓv = 0` there.

mod policy;
mod value;

use crate::error::{Error, Result};
use crate::measure::{GridMeasureFlow, SpaceTimeGrid};
use crate::model::{CoefficientTables, ModelSpec};
use crate::tridiag::Tridiagonal;

pub use policy::{extract_policy, threshold_control, ThresholdPolicy};
pub use value::{aggregate_value, convexity_margin, interior_convexity_margin, ValueField};

/// `(min{(p+γ1)θ, (γ2−p)θ, 0}, optimal velocity)`, with `+θ` chosen for
/// `p ≤ −γ1` and `−θ` for `p ≥ γ2`.
#[inline]
pub fn hamiltonian_min(p: f64, gamma1: f64, gamma2: f64, theta: f64) -> (f64, f64) {
    let h = ((p + gamma1) * theta).min((gamma2 - p) * theta).min(0.0);
    let control = if p <= -gamma1 {
        theta
    } else if p >= gamma2 {
        -theta
    } else {
        0.0
    };
    (h, control)
}

/// `dt·(c1 + θ)/dx` for the explicit part of the HJB step.
pub fn hjb_cfl_ratio(model: &ModelSpec, theta: f64, grid: &SpaceTimeGrid) -> f64 {
    grid.dt() * (model.c1() + theta) / grid.dx()
}

/// Smallest `nt` that satisfies the HJB CFL bound on this spatial axis.
pub fn hjb_min_nt(model: &ModelSpec, theta: f64, grid: &SpaceTimeGrid) -> usize {
    let span = grid.time().t_end() - grid.time().t_start();
    let mut nt = (span * (model.c1() + theta) / grid.dx()).ceil().max(1.0) as usize + 1;
    while grid
        .with_nt(nt)
        .map(|g| hjb_cfl_ratio(model, theta, &g) > 1.0)
        .unwrap_or(false)
    {
        nt += 1;
    }
    nt
}

/// Solve the HJB equation under the flow `flow`.
pub fn solve_hjb(model: &ModelSpec, flow: &GridMeasureFlow) -> Result<ValueField> {
    let tables = CoefficientTables::from_flow(model, flow);
    solve_hjb_with(model, &tables)
}

/// Solve with precomputed coefficient tables (shared across several
/// velocity bounds by the θ-sweep).
pub fn solve_hjb_with(model: &ModelSpec, tables: &CoefficientTables) -> Result<ValueField> {
    let theta = model.require_theta()?;
    let grid = *tables.grid();
    let ratio = hjb_cfl_ratio(model, theta, &grid);
    if ratio > 1.0 {
        return Err(Error::Cfl {
            stage: "hjb",
            ratio,
            suggested_nt: hjb_min_nt(model, theta, &grid),
        });
    }
    let (nt, nx) = (grid.nt(), grid.nx());
    let (dt, dx) = (grid.dt(), grid.dx());
    let (g1, g2) = (model.gamma1(), model.gamma2());

    let r = dt * 0.5 * model.sigma() * model.sigma() / (dx * dx);
    let mut lower = vec![-r; nx];
    let mut diag = vec![1.0 + 2.0 * r; nx];
    let mut upper = vec![-r; nx];
    for j in [0, nx - 1] {
        lower[j] = 0.0;
        diag[j] = 1.0;
        upper[j] = 0.0;
    }
    let implicit = Tridiagonal::new(lower, diag, upper);

    let mut v = vec![0.0; nt * nx];
    let mut rhs = vec![0.0; nx];
    for k in (0..nt - 1).rev() {
        let next = &v[(k + 1) * nx..(k + 2) * nx];
        let (b, f) = (tables.b_nodes(k), tables.f_nodes(k));
        for j in 0..nx {
            let p_fwd = if j + 1 < nx {
                (next[j + 1] - next[j]) / dx
            } else {
                (next[j] - next[j - 1]) / dx
            };
            let p_bwd = if j > 0 {
                (next[j] - next[j - 1]) / dx
            } else {
                p_fwd
            };
            let transport = b[j].max(0.0) * p_fwd + b[j].min(0.0) * p_bwd;
            let control = theta * (p_fwd + g1).min(g2 - p_bwd).min(0.0);
            rhs[j] = next[j] + dt * (f[j] + transport + control);
        }
        implicit.solve_in_place(&mut rhs);
        if rhs.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                stage: "hjb",
                time_index: k,
            });
        }
        v[k * nx..(k + 1) * nx].copy_from_slice(&rhs);
    }
    ValueField::from_values(grid, v)
}
