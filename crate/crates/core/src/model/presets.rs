use std::fmt;
use std::str::FromStr;

use super::{Drift, InitialLaw, ModelParams, ModelSpec, RunningCost};
use crate::error::{Error, Result};

/// The three vetted problem families.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// `f0 = ½(x+y)²`, `b0 = β tanh(κ(y−x))`.
    CrowdAversion,
    /// `f0 = x² + x·y`, `b0 = β tanh(κ(y−x))`.
    MeanReversion,
    /// `f0 = x²`, `b0 = −tanh(x)`; no interaction at all.
    Decoupled,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::CrowdAversion, Preset::MeanReversion, Preset::Decoupled];

    pub fn name(self) -> &'static str {
        match self {
            Preset::CrowdAversion => "crowd-aversion",
            Preset::MeanReversion => "mean-reversion",
            Preset::Decoupled => "decoupled",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::UnknownPreset(s.to_string()))
    }
}

/// Tunable knobs of a preset. `beta` and `kappa` are ignored by the
/// decoupled family.
#[derive(Clone, Debug, PartialEq)]
pub struct PresetParams {
    pub beta: f64,
    pub kappa: f64,
    pub sigma: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub theta: Option<f64>,
    pub horizon: f64,
    pub start: f64,
    pub initial_law: InitialLaw,
    pub domain: (f64, f64),
}

impl PresetParams {
    pub fn defaults(preset: Preset) -> Self {
        let base = PresetParams {
            beta: 1.0,
            kappa: 1.0,
            sigma: 1.0,
            gamma1: 0.5,
            gamma2: 0.5,
            theta: Some(1.0),
            horizon: 1.0,
            start: 0.0,
            initial_law: InitialLaw::Gaussian {
                mean: 0.5,
                std: 0.5,
            },
            domain: (-5.0, 5.0),
        };
        match preset {
            Preset::CrowdAversion => base,
            Preset::MeanReversion => PresetParams {
                initial_law: InitialLaw::Gaussian {
                    mean: 1.0,
                    std: 0.5,
                },
                ..base
            },
            Preset::Decoupled => PresetParams {
                gamma1: 1.0,
                gamma2: 1.0,
                theta: Some(2.0),
                initial_law: InitialLaw::Gaussian {
                    mean: 0.0,
                    std: 1.0,
                },
                ..base
            },
        }
    }
}

pub fn build_preset(preset: Preset, p: &PresetParams) -> Result<ModelSpec> {
    let attraction = Drift::Attraction {
        beta: p.beta,
        kappa: p.kappa,
    };
    let (drift, cost) = match preset {
        Preset::CrowdAversion => (attraction, RunningCost::half_square_sum()),
        Preset::MeanReversion => (attraction, RunningCost::square_plus_product()),
        Preset::Decoupled => (Drift::Restoring, RunningCost::square()),
    };
    ModelSpec::new(ModelParams {
        name: preset.name().to_string(),
        drift,
        cost,
        sigma: p.sigma,
        gamma1: p.gamma1,
        gamma2: p.gamma2,
        theta: p.theta,
        horizon: p.horizon,
        start: p.start,
        initial_law: p.initial_law.clone(),
        domain: p.domain,
    })
}

/// Preset by name with its default parameters.
pub fn make_preset(name: &str) -> Result<ModelSpec> {
    let preset: Preset = name.parse()?;
    build_preset(preset, &PresetParams::defaults(preset))
}
