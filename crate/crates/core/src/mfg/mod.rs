//! Best-response map `Γ = Γ2 ∘ Γ1`, its damped fixed point, the θ-sweep
//! toward the finite-variation limit and aggregate game values.
//!
//! `Γ1` freezes a flow `{μ_t}` and returns the optimal threshold policy
//! (HJB solve plus free-boundary extraction). `Γ2` pushes the initial law
//! forward under that policy with the Fokker–Planck propagator, the
//! population drift still evaluated against the frozen flow.

mod fokker_planck;
mod sweep;

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::error::{Error, Result};
use crate::hjb::{extract_policy, solve_hjb_with, ThresholdPolicy, ValueField};
use crate::measure::{flow_distance, write_flow_csv, GridMeasure, GridMeasureFlow, SpaceTimeGrid};
use crate::model::{CoefficientTables, ModelSpec};

pub use crate::hjb::aggregate_value;
pub use fokker_planck::{fokker_planck_step, propagate, NEGATIVE_DENSITY_TOLERANCE};
pub use sweep::{theta_sweep, ThetaSweepResult};

/// Space-time grid over the model's truncated domain and `[s, T]`.
pub fn model_grid(model: &ModelSpec, nx: usize, nt: usize) -> Result<SpaceTimeGrid> {
    let (lo, hi) = model.domain();
    SpaceTimeGrid::new(lo, hi, nx, model.start(), model.horizon(), nt)
}

fn check_grid(model: &ModelSpec, grid: &SpaceTimeGrid) -> Result<()> {
    let t = grid.time();
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()));
    if !close(t.t_start(), model.start()) || !close(t.t_end(), model.horizon()) {
        return Err(Error::InvalidGrid(format!(
            "time axis [{}, {}] does not match the model horizon [{}, {}]",
            t.t_start(),
            t.t_end(),
            model.start(),
            model.horizon()
        )));
    }
    Ok(())
}

/// Output of one best-response evaluation.
#[derive(Clone, Debug)]
pub struct BestResponse {
    pub value: ValueField,
    pub policy: ThresholdPolicy,
    /// `Γ(μ)`: the law of the controlled state under `policy`.
    pub flow: GridMeasureFlow,
}

/// `Γ1` and `Γ2` together.
pub fn best_response(model: &ModelSpec, flow: &GridMeasureFlow) -> Result<BestResponse> {
    check_grid(model, flow.grid())?;
    let tables = CoefficientTables::from_flow(model, flow);
    let value = solve_hjb_with(model, &tables)?;
    let policy = extract_policy(&value, model)?;
    let initial = model.initial_law().discretize(flow.grid().space())?;
    let flow = propagate(model, &policy, &tables, &initial)?;
    Ok(BestResponse {
        value,
        policy,
        flow,
    })
}

/// `Γ(μ)`.
pub fn gamma_map(model: &ModelSpec, flow: &GridMeasureFlow) -> Result<GridMeasureFlow> {
    best_response(model, flow).map(|r| r.flow)
}

/// The initial law carried forward without control under the drift it
/// generates itself at time `s`.
pub fn default_initial_flow(model: &ModelSpec, grid: &SpaceTimeGrid) -> Result<GridMeasureFlow> {
    check_grid(model, grid)?;
    let m0 = model.initial_law().discretize(grid.space())?;
    let frozen = GridMeasureFlow::constant(*grid, &m0)?;
    let tables = CoefficientTables::from_flow(model, &frozen);
    let idle = ThresholdPolicy::inactive(*grid, model.require_theta()?)?;
    propagate(model, &idle, &tables, &m0)
}

/// Uniform law on the whole domain at every time.
pub fn uniform_initial_flow(grid: &SpaceTimeGrid) -> Result<GridMeasureFlow> {
    let ax = grid.space();
    let u = GridMeasure::uniform(ax, ax.x_min(), ax.x_max())?;
    GridMeasureFlow::constant(*grid, &u)
}

/// Damped Picard settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverSettings {
    /// Weight `λ` of `Γ(μ)` in `μ ← (1 − λ)μ + λΓ(μ)`.
    pub damping: f64,
    /// Stop once `d_M(Γ(μ), μ) ≤ tol`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            damping: 0.5,
            tol: 1e-4,
            max_iter: 100,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "damping must lie in (0, 1], got {}",
                self.damping
            )));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidArgument(format!("tolerance must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// A (possibly unconverged) fixed point of `Γ`.
#[derive(Clone, Debug)]
pub struct EquilibriumResult {
    pub mu_star: GridMeasureFlow,
    /// Value function under `mu_star`.
    pub value: ValueField,
    /// Optimal threshold rule under `mu_star`.
    pub policy: ThresholdPolicy,
    /// `d_M(Γ(μ^k), μ^k)` for each iterate.
    pub residual_history: Vec<f64>,
    /// Number of `Γ` evaluations.
    pub iterations: usize,
    pub converged: bool,
}

impl EquilibriumResult {
    pub fn grid(&self) -> &SpaceTimeGrid {
        self.mu_star.grid()
    }

    pub fn final_residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(f64::INFINITY)
    }

    /// Whether the residuals never increase after the first `skip` entries.
    pub fn history_monotone_after(&self, skip: usize) -> bool {
        self.residual_history
            .iter()
            .skip(skip)
            .collect::<Vec<_>>()
            .windows(2)
            .all(|w| w[1] <= w[0])
    }

    /// Write `mu_star.csv`, `value.csv` and `policy.csv` into `dir`
    /// (created if needed). Returns the file names written.
    pub fn write_dir(&self, dir: &Path) -> Result<Vec<&'static str>> {
        std::fs::create_dir_all(dir)?;
        write_flow_csv(&self.mu_star, BufWriter::new(File::create(dir.join("mu_star.csv"))?))?;
        self.value
            .write_csv(BufWriter::new(File::create(dir.join("value.csv"))?))?;
        self.policy
            .write_csv(BufWriter::new(File::create(dir.join("policy.csv"))?))?;
        Ok(vec!["mu_star.csv", "value.csv", "policy.csv"])
    }
}

/// Damped Picard iteration `μ^{k+1} = (1 − λ)μ^k + λΓ(μ^k)`.
///
/// The first update takes the full step `μ^1 = Γ(μ^0)` regardless of `λ`:
/// it only replaces the starting guess, and when `Γ` does not depend on
/// its argument the second evaluation already has zero residual.
/// Non-convergence is reported through `converged = false`, not as an
/// error.
pub fn solve_mfg(
    model: &ModelSpec,
    settings: &SolverSettings,
    init: GridMeasureFlow,
) -> Result<EquilibriumResult> {
    settings.validate()?;
    model.require_theta()?;
    check_grid(model, init.grid())?;
    let mut mu = init;
    let mut history = Vec::new();
    let mut last: Option<BestResponse> = None;
    let mut converged = false;
    for it in 0..settings.max_iter {
        let br = best_response(model, &mu)?;
        let res = flow_distance(&br.flow, &mu)?;
        if !res.is_finite() {
            return Err(Error::NonFinite {
                stage: "fixed point residual",
                time_index: it,
            });
        }
        history.push(res);
        if res <= settings.tol {
            last = Some(br);
            converged = true;
            break;
        }
        let lambda = if it == 0 { 1.0 } else { settings.damping };
        let next = if lambda == 1.0 {
            br.flow.clone()
        } else {
            mu.mix(&br.flow, lambda)?
        };
        last = Some(br);
        if it + 1 < settings.max_iter {
            mu = next;
        }
    }
    let br = last.expect("at least one iteration runs");
    Ok(EquilibriumResult {
        mu_star: mu,
        value: br.value,
        policy: br.policy,
        iterations: history.len(),
        residual_history: history,
        converged,
    })
}
