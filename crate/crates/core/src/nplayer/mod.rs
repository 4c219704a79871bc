//! Finite-population simulation under threshold policies.
//!
//! Players move by Euler–Maruyama with reflection at the domain edges.
//! Player `i` of replication `r` draws its initial position and every
//! Brownian increment from its own ChaCha substream `(r, i)`, so runs that
//! share a seed are coupled: a mean-field copy of a player and its
//! N-player counterpart see the same noise, and a deviating player faces
//! the same randomness as under the equilibrium policy. Replications run
//! in parallel and are reduced in replication order, which makes every
//! estimate independent of the thread count.

mod engine;
mod experiments;
mod paths;

use crate::error::{Error, Result};

pub use engine::{stream_id, Clock, MeanFieldTable};
pub use experiments::{
    coupling_error, fv_gap, ne_gap, BurstVelocity, CouplingReport, CouplingRow, Deviation,
    DeviationLibrary, DeviationOutcome, Estimate, FvGapReport, FvGapRow, GapReport, GapRow,
    NashGapReport,
};
pub use paths::{evaluate_cost, simulate_nplayer, simulate_nplayer_with_streams, PathBundle};

/// Batch size, randomness and time stepping of a simulation.
///
/// Experiments that sweep the number of players ignore `n_players`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimulationConfig {
    pub n_players: usize,
    pub n_replications: usize,
    pub seed: u64,
    /// Euler–Maruyama steps per interval of the policy's time grid.
    pub substeps: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            n_players: 1,
            n_replications: 200,
            seed: 20240607,
            substeps: 2,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_players == 0 || self.n_players > u32::MAX as usize {
            return Err(Error::InvalidArgument(format!(
                "n_players must lie in 1..=2^32-1, got {}",
                self.n_players
            )));
        }
        if self.n_replications < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least two replications for a standard error, got {}",
                self.n_replications
            )));
        }
        if self.substeps == 0 {
            return Err(Error::InvalidArgument("substeps must be at least 1".into()));
        }
        Ok(())
    }
}
