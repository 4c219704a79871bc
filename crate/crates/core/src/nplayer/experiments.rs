use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use super::engine::{run_cost, stream_id, Assignment, Environment, MeanFieldTable, SimContext, Swarm};
use super::SimulationConfig;
use crate::error::{Error, Result};
use crate::hjb::ThresholdPolicy;
use crate::measure::SpaceTimeGrid;
use crate::mfg::{EquilibriumResult, ThetaSweepResult};
use crate::model::ModelSpec;
use crate::stats::{loglog_fit, LogLogFit, RunningStats};

/// Velocity of a burst deviation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BurstVelocity {
    /// The largest velocity of an accompanying θ-sweep, with that sweep's
    /// thresholds.
    ThetaMax,
    /// The equilibrium thresholds driven at this velocity.
    Value(f64),
}

/// A Markovian bounded-velocity policy for the deviating player, built
/// from the equilibrium policy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Deviation {
    /// Both thresholds moved by `δ`.
    Shift(f64),
    /// Never act.
    Zero,
    /// Always push up at full velocity.
    FullUp,
    /// Always push down at full velocity.
    FullDown,
    Burst(BurstVelocity),
}

impl fmt::Display for Deviation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Deviation::Shift(d) => write!(f, "shift({d})"),
            Deviation::Zero => write!(f, "zero"),
            Deviation::FullUp => write!(f, "full_up"),
            Deviation::FullDown => write!(f, "full_down"),
            Deviation::Burst(BurstVelocity::ThetaMax) => write!(f, "burst(theta_max)"),
            Deviation::Burst(BurstVelocity::Value(v)) => write!(f, "burst({v})"),
        }
    }
}

impl FromStr for Deviation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidArgument(format!("unknown deviation `{s}`"));
        let arg = |prefix: &str| -> Option<&str> {
            s.strip_prefix(prefix)
                .and_then(|r| r.strip_prefix('('))
                .and_then(|r| r.strip_suffix(')'))
                .map(str::trim)
        };
        match s {
            "zero" => return Ok(Deviation::Zero),
            "full_up" => return Ok(Deviation::FullUp),
            "full_down" => return Ok(Deviation::FullDown),
            _ => {}
        }
        if let Some(a) = arg("shift") {
            let d: f64 = a.parse().map_err(|_| bad())?;
            if !d.is_finite() {
                return Err(bad());
            }
            return Ok(Deviation::Shift(d));
        }
        if let Some(a) = arg("burst") {
            if a == "theta_max" {
                return Ok(Deviation::Burst(BurstVelocity::ThetaMax));
            }
            let v: f64 = a.parse().map_err(|_| bad())?;
            if !(v.is_finite() && v > 0.0) {
                return Err(bad());
            }
            return Ok(Deviation::Burst(BurstVelocity::Value(v)));
        }
        Err(bad())
    }
}

impl Deviation {
    /// The concrete policy, given the equilibrium rule and, for
    /// `burst(theta_max)`, the top policy of a sweep.
    pub fn resolve(&self, eq: &ThresholdPolicy, top: Option<&ThresholdPolicy>) -> Result<ThresholdPolicy> {
        let grid = *eq.grid();
        let ax = grid.space();
        let nt = grid.nt();
        let (below, above) = (ax.x_min() - ax.dx(), ax.x_max() + ax.dx());
        match *self {
            Deviation::Shift(d) => Ok(eq.shifted(d)),
            Deviation::Zero => ThresholdPolicy::inactive(grid, eq.theta()),
            Deviation::FullUp => ThresholdPolicy::new(grid, vec![above; nt], vec![above; nt], eq.theta()),
            Deviation::FullDown => ThresholdPolicy::new(grid, vec![below; nt], vec![below; nt], eq.theta()),
            Deviation::Burst(BurstVelocity::Value(v)) => eq.with_theta(v),
            Deviation::Burst(BurstVelocity::ThetaMax) => top.cloned().ok_or_else(|| {
                Error::InvalidArgument("burst(theta_max) needs a theta sweep".into())
            }),
        }
    }
}

/// An ordered list of deviations.
#[derive(Clone, Debug, PartialEq)]
pub struct DeviationLibrary {
    pub deviations: Vec<Deviation>,
}

impl DeviationLibrary {
    /// Threshold shifts by ±0.1 and ±0.2, never acting, and pushing at
    /// full speed in either direction.
    pub fn standard() -> Self {
        Self {
            deviations: vec![
                Deviation::Shift(0.1),
                Deviation::Shift(-0.1),
                Deviation::Shift(0.2),
                Deviation::Shift(-0.2),
                Deviation::Zero,
                Deviation::FullUp,
                Deviation::FullDown,
            ],
        }
    }

    /// Parse a comma-separated list such as
    /// `shift(0.1), shift(-0.1), zero, full_up, burst(theta_max)`.
    pub fn parse(s: &str) -> Result<Self> {
        let deviations = s
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(Deviation::from_str)
            .collect::<Result<Vec<_>>>()?;
        if deviations.is_empty() {
            return Err(Error::InvalidArgument("empty deviation library".into()));
        }
        Ok(Self { deviations })
    }

    pub fn contains_burst_theta_max(&self) -> bool {
        self.deviations
            .contains(&Deviation::Burst(BurstVelocity::ThetaMax))
    }
}

impl fmt::Display for DeviationLibrary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.deviations.iter().map(|d| d.to_string()).collect();
        write!(f, "{}", parts.join(", "))
    }
}

/// A Monte Carlo mean with its standard error.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl From<&RunningStats> for Estimate {
    fn from(s: &RunningStats) -> Self {
        Self {
            mean: s.mean(),
            se: s.std_error(),
        }
    }
}

fn check_n_values(n_values: &[usize]) -> Result<()> {
    if n_values.is_empty() || n_values.contains(&0) || n_values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(format!(
            "player counts must be positive and strictly ascending, got {n_values:?}"
        )));
    }
    Ok(())
}

fn fit_if_positive(ns: &[usize], ys: &[f64]) -> Option<LogLogFit> {
    if ns.len() < 2 || ys.iter().any(|&y| !(y > 0.0)) {
        return None;
    }
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    loglog_fit(&xs, ys).ok()
}

/// `E sup_t |x^i − x^{i,N}|²` for one N.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CouplingRow {
    pub n: usize,
    pub err_sq: Estimate,
    pub reflections: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CouplingReport {
    pub rows: Vec<CouplingRow>,
    /// Log-log fit of the error against N; absent when some error is not
    /// positive (for instance identically zero).
    pub fit: Option<LogLogFit>,
}

impl CouplingReport {
    /// Whether the errors decrease strictly with N.
    pub fn strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].err_sq.mean < w[0].err_sq.mean)
    }
}

/// Mean-field players (drift `b(x, μ*_t)`) against N interacting players,
/// both following the equilibrium policy and driven by the same noise.
pub fn coupling_error(
    model: &ModelSpec,
    eq: &EquilibriumResult,
    n_values: &[usize],
    cfg: &SimulationConfig,
) -> Result<CouplingReport> {
    check_n_values(n_values)?;
    cfg.validate()?;
    let ctx = SimContext::new(model, eq.grid(), cfg.substeps, cfg.seed)?;
    let table = MeanFieldTable::new(model, &eq.mu_star);
    let mut rows = Vec::with_capacity(n_values.len());
    for &n in n_values {
        let per_rep: Vec<(f64, u64)> = (0..cfg.n_replications)
            .into_par_iter()
            .map(|rep| {
                let ids: Vec<u64> = (0..n as u64).map(|i| stream_id(rep as u64, i)).collect();
                let mut mf = Swarm::new(&ctx, &ids, Assignment::Shared(&eq.policy), Environment::MeanField(&table));
                let mut np = Swarm::new(&ctx, &ids, Assignment::Shared(&eq.policy), Environment::Empirical);
                let mut worst = vec![0.0f64; n];
                loop {
                    for ((w, a), b) in worst.iter_mut().zip(&mf.x).zip(&np.x) {
                        let d = a - b;
                        *w = w.max(d * d);
                    }
                    if np.done() {
                        break;
                    }
                    mf.advance();
                    np.advance();
                }
                (worst.iter().sum::<f64>() / n as f64, np.reflections)
            })
            .collect();
        let stats: RunningStats = per_rep.iter().map(|r| r.0).collect();
        rows.push(CouplingRow {
            n,
            err_sq: (&stats).into(),
            reflections: per_rep.iter().map(|r| r.1).sum(),
        });
    }
    let ys: Vec<f64> = rows.iter().map(|r| r.err_sq.mean).collect();
    Ok(CouplingReport {
        fit: fit_if_positive(n_values, &ys),
        rows,
    })
}

/// Outcome of one deviation at one N, all for player 1 under common
/// random numbers.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeviationOutcome {
    pub label: String,
    /// `J^N_eq − J^N_dev`: what deviating gains in the N-player game.
    pub benefit: Estimate,
    /// The same difference for a single player facing the flow `μ*`.
    pub mf_benefit: Estimate,
    /// `benefit − mf_benefit`, the finite-population part of the gain.
    pub excess: Estimate,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapRow {
    pub n: usize,
    /// Largest mean benefit over the library.
    pub gap: Estimate,
    pub gap_argmax: String,
    /// Largest `|excess|` over the library.
    pub envelope: Estimate,
    pub outcomes: Vec<DeviationOutcome>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NashGapReport {
    pub rows: Vec<GapRow>,
    /// Log-log fit of the envelope against N.
    pub envelope_fit: Option<LogLogFit>,
    /// `C = max env(N)·√N` over the smaller half of the tested N.
    pub envelope_constant: f64,
}

impl NashGapReport {
    /// Smallest `J_dev − J_eq + 3·se` over all N and deviations; negative
    /// when some deviation helps by more than three standard errors.
    pub fn worst_robust_margin(&self) -> f64 {
        self.rows
            .iter()
            .flat_map(|r| &r.outcomes)
            .map(|o| -o.benefit.mean + 3.0 * o.benefit.se)
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest `env(N) − C/√N − 3·se` over N; nonpositive when the
    /// envelope is dominated by the fitted curve.
    pub fn worst_domination_excess(&self) -> f64 {
        let c = self.envelope_constant;
        self.rows
            .iter()
            .map(|r| r.envelope.mean - c / (r.n as f64).sqrt() - 3.0 * r.envelope.se)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Per-replication costs for a list of deviation policies.
struct GapSample {
    /// `(J^N_eq − J^N_d, J^MF_eq − J^MF_d)` per deviation.
    diffs: Vec<(f64, f64)>,
}

fn gap_sample(
    ctx: &SimContext,
    table: Option<&MeanFieldTable>,
    eq: &ThresholdPolicy,
    devs: &[ThresholdPolicy],
    n: usize,
    rep: u64,
) -> GapSample {
    let ids: Vec<u64> = (0..n as u64).map(|i| stream_id(rep, i)).collect();
    let j_eq = run_cost(Swarm::new(ctx, &ids, Assignment::Shared(eq), Environment::Empirical), 0);
    let mf = |p: &ThresholdPolicy| {
        table.map_or(0.0, |t| {
            run_cost(Swarm::new(ctx, &ids[..1], Assignment::Shared(p), Environment::MeanField(t)), 0)
        })
    };
    let mf_eq = mf(eq);
    let diffs = devs
        .iter()
        .map(|d| {
            let j_d = run_cost(
                Swarm::new(ctx, &ids, Assignment::FirstDeviates { first: d, rest: eq }, Environment::Empirical),
                0,
            );
            (j_eq - j_d, mf_eq - mf(d))
        })
        .collect();
    GapSample { diffs }
}

fn gap_rows(
    ctx: &SimContext,
    table: Option<&MeanFieldTable>,
    eq: &ThresholdPolicy,
    devs: &[ThresholdPolicy],
    labels: &[String],
    n_values: &[usize],
    reps: usize,
) -> Vec<GapRow> {
    n_values
        .iter()
        .map(|&n| {
            let samples: Vec<GapSample> = (0..reps)
                .into_par_iter()
                .map(|rep| gap_sample(ctx, table, eq, devs, n, rep as u64))
                .collect();
            let outcomes: Vec<DeviationOutcome> = labels
                .iter()
                .enumerate()
                .map(|(d, label)| {
                    let benefit: RunningStats = samples.iter().map(|s| s.diffs[d].0).collect();
                    let mf: RunningStats = samples.iter().map(|s| s.diffs[d].1).collect();
                    let excess: RunningStats = samples.iter().map(|s| s.diffs[d].0 - s.diffs[d].1).collect();
                    DeviationOutcome {
                        label: label.clone(),
                        benefit: (&benefit).into(),
                        mf_benefit: (&mf).into(),
                        excess: (&excess).into(),
                    }
                })
                .collect();
            let best = outcomes
                .iter()
                .max_by(|a, b| a.benefit.mean.total_cmp(&b.benefit.mean))
                .expect("library is nonempty");
            let widest = outcomes
                .iter()
                .max_by(|a, b| a.excess.mean.abs().total_cmp(&b.excess.mean.abs()))
                .expect("library is nonempty");
            GapRow {
                n,
                gap: best.benefit,
                gap_argmax: best.label.clone(),
                envelope: Estimate {
                    mean: widest.excess.mean.abs(),
                    se: widest.excess.se,
                },
                outcomes,
            }
        })
        .collect()
}

fn envelope_constant(rows: &[GapRow]) -> f64 {
    let mut ns: Vec<usize> = rows.iter().map(|r| r.n).collect();
    ns.sort_unstable();
    let median = ns[(ns.len() - 1) / 2];
    rows.iter()
        .filter(|r| r.n <= median)
        .map(|r| r.envelope.mean * (r.n as f64).sqrt())
        .fold(0.0, f64::max)
}

/// Player 1 switches to each deviation while everybody else keeps the
/// equilibrium policy. The gap at each N is the largest mean gain from
/// deviating; the envelope is the largest gain in excess of what the same
/// deviation gains against the mean-field flow.
pub fn ne_gap(
    model: &ModelSpec,
    eq: &EquilibriumResult,
    n_values: &[usize],
    library: &DeviationLibrary,
    cfg: &SimulationConfig,
) -> Result<NashGapReport> {
    check_n_values(n_values)?;
    cfg.validate()?;
    let ctx = SimContext::new(model, eq.grid(), cfg.substeps, cfg.seed)?;
    let table = MeanFieldTable::new(model, &eq.mu_star);
    let devs = library
        .deviations
        .iter()
        .map(|d| d.resolve(&eq.policy, None))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<String> = library.deviations.iter().map(|d| d.to_string()).collect();
    let rows = gap_rows(&ctx, Some(&table), &eq.policy, &devs, &labels, n_values, cfg.n_replications);
    let env: Vec<f64> = rows.iter().map(|r| r.envelope.mean).collect();
    Ok(NashGapReport {
        envelope_fit: fit_if_positive(n_values, &env),
        envelope_constant: envelope_constant(&rows),
        rows,
    })
}

/// Measured gap against the `C/√N + ε_θ` budget at one `(θ, N)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FvGapRow {
    pub theta: f64,
    pub n: usize,
    pub gap: Estimate,
    pub gap_argmax: String,
    pub epsilon_theta: f64,
    pub budget: f64,
}

impl FvGapRow {
    /// `gap − budget − 3·se`; nonpositive when within budget.
    pub fn excess_over_budget(&self) -> f64 {
        self.gap.mean - self.budget - 3.0 * self.gap.se
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FvGapReport {
    pub constant: f64,
    pub library: String,
    pub rows: Vec<FvGapRow>,
}

impl FvGapReport {
    pub fn worst_excess(&self) -> f64 {
        self.rows
            .iter()
            .map(FvGapRow::excess_over_budget)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// For every `θ` of the sweep, everybody but player 1 follows the
/// `θ`-bounded policy while player 1 tries the library plus a burst at the
/// sweep's largest velocity. Gaps are compared with `C/√N + ε_θ`, `C`
/// taken from an earlier [`ne_gap`] fit.
pub fn fv_gap(
    model: &ModelSpec,
    sweep: &ThetaSweepResult,
    n_values: &[usize],
    library: &DeviationLibrary,
    constant: f64,
    cfg: &SimulationConfig,
) -> Result<FvGapReport> {
    check_n_values(n_values)?;
    cfg.validate()?;
    let mut library = library.clone();
    if !library.contains_burst_theta_max() {
        library.deviations.push(Deviation::Burst(BurstVelocity::ThetaMax));
    }
    let grid: SpaceTimeGrid = *sweep.reference.grid();
    let ctx = SimContext::new(model, &grid, cfg.substeps, cfg.seed)?;
    let top = sweep.policies.last().expect("sweep has policies");
    let labels: Vec<String> = library.deviations.iter().map(|d| d.to_string()).collect();
    let mut rows = Vec::new();
    for (i, &theta) in sweep.thetas.iter().enumerate() {
        let eq = &sweep.policies[i];
        let devs = library
            .deviations
            .iter()
            .map(|d| d.resolve(eq, Some(top)))
            .collect::<Result<Vec<_>>>()?;
        for row in gap_rows(&ctx, None, eq, &devs, &labels, n_values, cfg.n_replications) {
            let eps = sweep.epsilon_theta[i];
            rows.push(FvGapRow {
                theta,
                n: row.n,
                gap: row.gap,
                gap_argmax: row.gap_argmax,
                epsilon_theta: eps,
                budget: constant / (row.n as f64).sqrt() + eps,
            });
        }
    }
    Ok(FvGapReport {
        constant,
        library: library.to_string(),
        rows,
    })
}

/// Per-N results of the coupling and Nash-gap experiments.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapReport {
    pub n_values: Vec<usize>,
    pub coupling: Option<CouplingReport>,
    pub gaps: Option<NashGapReport>,
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "nan".to_string(), |v| format!("{v:e}"))
}

impl GapReport {
    pub fn slope_coupling(&self) -> Option<f64> {
        self.coupling.as_ref().and_then(|c| c.fit.map(|f| f.slope))
    }

    pub fn slope_gap_envelope(&self) -> Option<f64> {
        self.gaps.as_ref().and_then(|g| g.envelope_fit.map(|f| f.slope))
    }

    /// `N,coupling_err_sq,coupling_se,gap,gap_se` rows followed by `# `
    /// summary lines.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "N,coupling_err_sq,coupling_se,gap,gap_se")?;
        for (i, &n) in self.n_values.iter().enumerate() {
            let c = self.coupling.as_ref().map(|c| c.rows[i].err_sq);
            let g = self.gaps.as_ref().map(|g| g.rows[i].gap);
            writeln!(
                w,
                "{n},{},{},{},{}",
                fmt_opt(c.map(|e| e.mean)),
                fmt_opt(c.map(|e| e.se)),
                fmt_opt(g.map(|e| e.mean)),
                fmt_opt(g.map(|e| e.se)),
            )?;
        }
        if let Some(c) = &self.coupling {
            writeln!(w, "# slope_coupling = {}", fmt_opt(c.fit.map(|f| f.slope)))?;
            writeln!(w, "# coupling_fit_r2 = {}", fmt_opt(c.fit.map(|f| f.r_squared)))?;
            writeln!(
                w,
                "# coupling_reflections = {}",
                c.rows.iter().map(|r| r.reflections.to_string()).collect::<Vec<_>>().join(" ")
            )?;
        }
        if let Some(g) = &self.gaps {
            writeln!(w, "# slope_gap_envelope = {}", fmt_opt(g.envelope_fit.map(|f| f.slope)))?;
            writeln!(w, "# envelope_fit_r2 = {}", fmt_opt(g.envelope_fit.map(|f| f.r_squared)))?;
            writeln!(w, "# envelope_constant = {:e}", g.envelope_constant)?;
            writeln!(w, "# worst_robust_margin = {:e}", g.worst_robust_margin())?;
            writeln!(w, "# worst_domination_excess = {:e}", g.worst_domination_excess())?;
            for r in &g.rows {
                writeln!(
                    w,
                    "# N = {} gap_argmax = {} envelope = {:e} envelope_se = {:e}",
                    r.n, r.gap_argmax, r.envelope.mean, r.envelope.se
                )?;
                for o in &r.outcomes {
                    writeln!(
                        w,
                        "#   {} benefit = {:e} ± {:e} mf_benefit = {:e} ± {:e} excess = {:e} ± {:e}",
                        o.label,
                        o.benefit.mean,
                        o.benefit.se,
                        o.mf_benefit.mean,
                        o.mf_benefit.se,
                        o.excess.mean,
                        o.excess.se
                    )?;
                }
            }
        }
        Ok(())
    }
}

impl FvGapReport {
    /// `theta,N,gap,gap_se,epsilon_theta,budget` rows and the constant.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "theta,N,gap,gap_se,epsilon_theta,budget")?;
        for r in &self.rows {
            writeln!(
                w,
                "{:e},{},{:e},{:e},{:e},{:e}",
                r.theta, r.n, r.gap.mean, r.gap.se, r.epsilon_theta, r.budget
            )?;
        }
        writeln!(w, "# constant = {:e}", self.constant)?;
        writeln!(w, "# library = {}", self.library)?;
        writeln!(w, "# worst_excess = {:e}", self.worst_excess())?;
        Ok(())
    }
}
