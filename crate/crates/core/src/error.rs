use thiserror::Error;

/// Errors produced by the solver and simulation layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("unknown preset `{0}` (expected crowd-aversion, mean-reversion or decoupled)")]
    UnknownPreset(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("CFL condition violated in {stage}: ratio {ratio:.6} > 1 (suggested nt >= {suggested_nt})")]
    Cfl {
        stage: &'static str,
        ratio: f64,
        suggested_nt: usize,
    },

    #[error("non-finite value in {stage} at time index {time_index}")]
    NonFinite {
        stage: &'static str,
        time_index: usize,
    },

    #[error("negative density {value:e} at node {node} after step {step}")]
    NegativeDensity { step: usize, node: usize, value: f64 },

    #[error("convexity violation at time index {time_index}: dv/dx decreases by {drop:e} (tolerance {tolerance:e})")]
    ConvexityViolation {
        time_index: usize,
        drop: f64,
        tolerance: f64,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty sample set")]
    EmptySamples,

    #[error("player index {index} out of range for {n_players} players")]
    PlayerIndex { index: usize, n_players: usize },

    #[error("malformed CSV: {0}")]
    Csv(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
