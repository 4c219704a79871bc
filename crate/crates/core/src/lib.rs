//! Mean field games with singular controls of bounded velocity.
//!
//! Each player steers `dx = (b(x, μ_t) + φ) dt + σ dW` with a velocity
//! `φ ∈ [−θ, θ]`, paying `γ1` per unit of upward and `γ2` per unit of
//! downward control on top of a running cost `f(x, μ_t)`. The crate
//! provides
//!
//! * [`model`]: problem instances, presets and assumption spot checks;
//! * [`measure`]: grid measures, measure flows and exact 1-D Wasserstein
//!   distances;
//! * [`hjb`]: the backward HJB solver and bang-bang policy extraction;
//! * [`mfg`]: the Fokker–Planck propagator, the best-response map and its
//!   damped fixed point, θ-sweeps and aggregate values;
//! * [`nplayer`]: N-player simulation, coupling-error and Nash-gap
//!   experiments.

pub mod error;
pub mod hjb;
mod kernel;
mod tridiag;
pub mod measure;
pub mod mfg;
pub mod model;
pub mod nplayer;
pub mod stats;

pub use error::{Error, Result};
