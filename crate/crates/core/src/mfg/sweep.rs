use rayon::prelude::*;

use super::{default_initial_flow, solve_mfg, EquilibriumResult, SolverSettings};
use crate::error::{Error, Result};
use crate::hjb::{extract_policy, hjb_min_nt, solve_hjb_with, ThresholdPolicy, ValueField};
use crate::measure::SpaceTimeGrid;
use crate::model::{CoefficientTables, ModelSpec};

/// Bounded-velocity values against one frozen flow for a ladder of `θ`.
#[derive(Clone, Debug)]
pub struct ThetaSweepResult {
    pub thetas: Vec<f64>,
    /// The probe points `(s, x)`.
    pub probes: Vec<(f64, f64)>,
    /// `values_at_probe[i][p] = v_{θ_i}(probes[p])`.
    pub values_at_probe: Vec<Vec<f64>>,
    /// `max_p |v_{θ_i} − v_{θ_max}|` at the probes.
    pub epsilon_theta: Vec<f64>,
    /// Equilibrium at the largest `θ`; its flow is the frozen one.
    pub reference: EquilibriumResult,
    pub values: Vec<ValueField>,
    pub policies: Vec<ThresholdPolicy>,
}

impl ThetaSweepResult {
    /// `ε_θ[i] / ε_θ[i+1]` for consecutive entries (infinite when the
    /// second one vanishes).
    pub fn decay_ratios(&self) -> Vec<f64> {
        self.epsilon_theta
            .windows(2)
            .map(|w| if w[1] == 0.0 { f64::INFINITY } else { w[0] / w[1] })
            .collect()
    }

    /// Largest violation of `v_{θ_{i+1}} ≤ v_{θ_i}` over the whole grid.
    pub fn max_monotonicity_violation(&self) -> f64 {
        self.values
            .windows(2)
            .map(|w| {
                w[1].values()
                    .iter()
                    .zip(w[0].values())
                    .map(|(hi, lo)| hi - lo)
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Solve the equilibrium at the largest `θ`, freeze its flow and solve the
/// control problem for every `θ` against it.
///
/// The iteration starts from [`default_initial_flow`]. The `nt` of `grid`
/// is raised if the largest `θ` needs a finer time step, so every value
/// field lives on one common grid.
pub fn theta_sweep(
    model: &ModelSpec,
    thetas: &[f64],
    grid: SpaceTimeGrid,
    probes: &[(f64, f64)],
    settings: &SolverSettings,
) -> Result<ThetaSweepResult> {
    if thetas.len() < 2 {
        return Err(Error::InvalidArgument("a sweep needs at least two values of theta".into()));
    }
    if thetas.iter().any(|t| !(t.is_finite() && *t > 0.0)) || thetas.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument(format!(
            "thetas must be positive and ascending, got {thetas:?}"
        )));
    }
    if probes.is_empty() {
        return Err(Error::InvalidArgument("no probe points".into()));
    }
    let theta_max = *thetas.last().unwrap();
    let top = model.with_theta(theta_max)?;
    let grid = grid.with_nt(grid.nt().max(hjb_min_nt(&top, theta_max, &grid)))?;

    let reference = solve_mfg(&top, settings, default_initial_flow(&top, &grid)?)?;
    let tables = CoefficientTables::from_flow(&top, &reference.mu_star);
    let solved: Vec<(ValueField, ThresholdPolicy)> = thetas
        .par_iter()
        .map(|&th| {
            let m = model.with_theta(th)?;
            let v = solve_hjb_with(&m, &tables)?;
            let p = extract_policy(&v, &m)?;
            Ok((v, p))
        })
        .collect::<Result<_>>()?;
    let (values, policies): (Vec<_>, Vec<_>) = solved.into_iter().unzip();

    let values_at_probe: Vec<Vec<f64>> = values
        .iter()
        .map(|v| probes.iter().map(|&(s, x)| v.interpolate(s, x)).collect())
        .collect();
    let last = values_at_probe.last().unwrap().clone();
    let epsilon_theta = values_at_probe
        .iter()
        .map(|row| {
            row.iter()
                .zip(&last)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    Ok(ThetaSweepResult {
        thetas: thetas.to_vec(),
        probes: probes.to_vec(),
        values_at_probe,
        epsilon_theta,
        reference,
        values,
        policies,
    })
}
