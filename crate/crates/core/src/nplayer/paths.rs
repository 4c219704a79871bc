use super::engine::{empirical_cost, stream_id, Assignment, Clock, Environment, SimContext, Swarm};
use super::SimulationConfig;
use crate::error::{Error, Result};
use crate::hjb::ThresholdPolicy;
use crate::model::ModelSpec;
use crate::stats::RunningStats;

/// Every state and applied control of a batch of N-player runs.
#[derive(Clone, Debug, PartialEq)]
pub struct PathBundle {
    pub clock: Clock,
    pub n_players: usize,
    pub n_replications: usize,
    /// `states[(r·(steps+1) + m)·N + i]`.
    pub states: Vec<f64>,
    /// Controls chosen at each time point, same layout as `states`.
    pub controls_applied: Vec<f64>,
    /// Substream of player `i` in replication `r` at `[r·N + i]`.
    pub brownian_seed_map: Vec<u64>,
    /// Reflections at the domain edges, summed over the batch.
    pub reflections: u64,
}

impl PathBundle {
    fn index(&self, rep: usize, m: usize, i: usize) -> usize {
        (rep * (self.clock.steps + 1) + m) * self.n_players + i
    }

    /// Positions of all players at time point `m` of replication `rep`.
    pub fn states_at(&self, rep: usize, m: usize) -> &[f64] {
        let s = self.index(rep, m, 0);
        &self.states[s..s + self.n_players]
    }

    pub fn controls_at(&self, rep: usize, m: usize) -> &[f64] {
        let s = self.index(rep, m, 0);
        &self.controls_applied[s..s + self.n_players]
    }

    /// Path of one player in one replication.
    pub fn path(&self, rep: usize, i: usize) -> Vec<f64> {
        (0..=self.clock.steps)
            .map(|m| self.states[self.index(rep, m, i)])
            .collect()
    }
}

/// Simulate the coupled N-player system, player `i` following
/// `policies[i]`, with the default substreams `(replication, i)`.
pub fn simulate_nplayer(
    model: &ModelSpec,
    policies: &[ThresholdPolicy],
    cfg: &SimulationConfig,
) -> Result<PathBundle> {
    let streams: Vec<u64> = (0..policies.len() as u64).collect();
    simulate_nplayer_with_streams(model, policies, cfg, &streams)
}

/// As [`simulate_nplayer`], with player `i` driven by substream
/// `(replication, streams[i])`.
pub fn simulate_nplayer_with_streams(
    model: &ModelSpec,
    policies: &[ThresholdPolicy],
    cfg: &SimulationConfig,
    streams: &[u64],
) -> Result<PathBundle> {
    let n = policies.len();
    if n == 0 || n != cfg.n_players || streams.len() != n {
        return Err(Error::InvalidArgument(format!(
            "need one policy and one stream per player: {} players, {} policies, {} streams",
            cfg.n_players,
            n,
            streams.len()
        )));
    }
    let grid = *policies[0].grid();
    if let Some(i) = policies.iter().position(|p| p.grid() != &grid) {
        return Err(Error::GridMismatch(format!(
            "policy of player {i} lives on a different grid"
        )));
    }
    cfg.validate()?;
    let ctx = SimContext::new(model, &grid, cfg.substeps, cfg.seed)?;
    let steps = ctx.clock.steps;
    let size = cfg.n_replications * (steps + 1) * n;
    let mut states = Vec::with_capacity(size);
    let mut controls = Vec::with_capacity(size);
    let mut seed_map = Vec::with_capacity(cfg.n_replications * n);
    let mut reflections = 0;
    for rep in 0..cfg.n_replications {
        let ids: Vec<u64> = streams.iter().map(|&s| stream_id(rep as u64, s)).collect();
        seed_map.extend_from_slice(&ids);
        let mut swarm = Swarm::new(&ctx, &ids, Assignment::PerPlayer(policies), Environment::Empirical);
        loop {
            states.extend_from_slice(&swarm.x);
            controls.extend_from_slice(&swarm.u);
            if swarm.done() {
                break;
            }
            swarm.advance();
        }
        reflections += swarm.reflections;
    }
    Ok(PathBundle {
        clock: ctx.clock,
        n_players: n,
        n_replications: cfg.n_replications,
        states,
        controls_applied: controls,
        brownian_seed_map: seed_map,
        reflections,
    })
}

/// Mean and standard error over replications of player `player`'s cost:
/// trapezoidal integral of `(1/N)·Σ_j f0(x^i, x^j)` plus the exact
/// integral of the piecewise-constant control cost.
pub fn evaluate_cost(model: &ModelSpec, bundle: &PathBundle, player: usize) -> Result<(f64, f64)> {
    if player >= bundle.n_players {
        return Err(Error::PlayerIndex {
            index: player,
            n_players: bundle.n_players,
        });
    }
    let clock = bundle.clock;
    let stats: RunningStats = (0..bundle.n_replications)
        .map(|rep| {
            let mut total = 0.0;
            for m in 0..=clock.steps {
                total += clock.weight(m) * empirical_cost(model, bundle.states_at(rep, m), player);
                if m < clock.steps {
                    total += clock.h() * model.control_cost(bundle.controls_at(rep, m)[player]);
                }
            }
            total
        })
        .collect();
    Ok((stats.mean(), stats.std_error()))
}
