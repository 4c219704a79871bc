//! Problem instances: interaction drift and cost, volatility, control
//! costs, velocity bound, horizon and initial law.
//!
//! The population enters the dynamics only through the averaged
//! coefficients `b(x, μ) = ∫ b0(x, y) μ(dy)` and `f(x, μ) = ∫ f0(x, y) μ(dy)`,
//! see [`MeanFieldCoefficients`].

mod assumptions;
mod coefficients;
mod presets;

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::measure::{GridMeasure, SpaceAxis};

pub use assumptions::{
    check_lipschitz, check_monotonicity, monotonicity_functional, AssumptionReport,
    LipschitzEstimates, MonotonicitySample, A6_NOTE, HAMILTONIAN_NOTE,
};
pub use coefficients::{CoefficientTables, MeanFieldCoefficients};
pub use presets::{build_preset, make_preset, Preset, PresetParams};

pub type CustomFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Interaction drift `b0(x, y)`.
#[derive(Clone)]
pub enum Drift {
    Zero,
    Constant(f64),
    /// `beta * tanh(kappa * (y - x))`: players are pulled toward the crowd.
    Attraction { beta: f64, kappa: f64 },
    /// `-tanh(x)`, independent of the population.
    Restoring,
    /// Registered closure with a user-declared bound on the computational
    /// domain and a flag telling whether `y` is actually used.
    Custom {
        name: String,
        func: CustomFn,
        bound: f64,
        uses_population: bool,
    },
}

impl Drift {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            Drift::Zero => 0.0,
            Drift::Constant(c) => *c,
            Drift::Attraction { beta, kappa } => beta * (kappa * (y - x)).tanh(),
            Drift::Restoring => -x.tanh(),
            Drift::Custom { func, .. } => func(x, y),
        }
    }

    /// The constant `c1` with `|b0| <= c1` on the computational domain.
    pub fn bound(&self) -> f64 {
        match self {
            Drift::Zero => 0.0,
            Drift::Constant(c) => c.abs(),
            Drift::Attraction { beta, .. } => beta.abs(),
            Drift::Restoring => 1.0,
            Drift::Custom { bound, .. } => *bound,
        }
    }

    pub fn uses_population(&self) -> bool {
        match self {
            Drift::Zero | Drift::Constant(_) | Drift::Restoring => false,
            Drift::Attraction { beta, .. } => *beta != 0.0,
            Drift::Custom {
                uses_population, ..
            } => *uses_population,
        }
    }

    /// Translation-invariant form `b0(x, y) = K(y - x)` when one exists.
    pub(crate) fn kernel(&self) -> Option<impl Fn(f64) -> f64 + Send + Sync + 'static> {
        match *self {
            Drift::Attraction { beta, kappa } => Some(move |d: f64| beta * (kappa * d).tanh()),
            _ => None,
        }
    }

    pub fn label(&self) -> String {
        match self {
            Drift::Zero => "zero".into(),
            Drift::Constant(c) => format!("constant({c})"),
            Drift::Attraction { beta, kappa } => format!("{beta}*tanh({kappa}*(y-x))"),
            Drift::Restoring => "-tanh(x)".into(),
            Drift::Custom { name, .. } => name.clone(),
        }
    }
}

impl fmt::Debug for Drift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Drift({})", self.label())
    }
}

/// Quadratic interaction cost
/// `f0(x, y) = xx*x² + xy*x*y + yy*y² + x*x_lin + y*y_lin + c`.
///
/// Every cost used by the presets has this shape, which makes `f(x, μ)`
/// a function of the first two moments of `μ`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct QuadraticCost {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
    pub x: f64,
    pub y: f64,
    pub c: f64,
}

impl QuadraticCost {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.xx * x * x + self.xy * x * y + self.yy * y * y + self.x * x + self.y * y + self.c
    }

    /// `∫ f0(x, y) μ(dy)` through the moments `m1`, `m2` of `μ`.
    pub fn mean_field(&self, x: f64, m1: f64, m2: f64) -> f64 {
        self.xx * x * x + self.xy * x * m1 + self.yy * m2 + self.x * x + self.y * m1 + self.c
    }
}

/// Interaction running cost `f0(x, y)`.
#[derive(Clone)]
pub enum RunningCost {
    Quadratic(QuadraticCost),
    Custom {
        name: String,
        func: CustomFn,
        growth: f64,
        uses_population: bool,
    },
}

impl RunningCost {
    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn constant(c: f64) -> Self {
        RunningCost::Quadratic(QuadraticCost {
            c,
            ..Default::default()
        })
    }

    /// `½(x + y)²`
    pub fn half_square_sum() -> Self {
        RunningCost::Quadratic(QuadraticCost {
            xx: 0.5,
            xy: 1.0,
            yy: 0.5,
            ..Default::default()
        })
    }

    /// `x² + x·y`
    pub fn square_plus_product() -> Self {
        RunningCost::Quadratic(QuadraticCost {
            xx: 1.0,
            xy: 1.0,
            ..Default::default()
        })
    }

    /// `x²`
    pub fn square() -> Self {
        RunningCost::Quadratic(QuadraticCost {
            xx: 1.0,
            ..Default::default()
        })
    }

    /// `x·y`
    pub fn product() -> Self {
        RunningCost::Quadratic(QuadraticCost {
            xy: 1.0,
            ..Default::default()
        })
    }

    /// `(x − y)²`
    pub fn squared_distance() -> Self {
        RunningCost::Quadratic(QuadraticCost {
            xx: 1.0,
            xy: -2.0,
            yy: 1.0,
            ..Default::default()
        })
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            RunningCost::Quadratic(q) => q.eval(x, y),
            RunningCost::Custom { func, .. } => func(x, y),
        }
    }

    pub fn uses_population(&self) -> bool {
        match self {
            RunningCost::Quadratic(q) => q.xy != 0.0 || q.yy != 0.0 || q.y != 0.0,
            RunningCost::Custom {
                uses_population, ..
            } => *uses_population,
        }
    }

    /// Constant `c_f` in `|f0(x, y)| <= c_f (1 + x² + y²)`.
    pub fn growth_constant(&self) -> f64 {
        match self {
            RunningCost::Quadratic(q) => {
                // |x| <= (1 + x²)/2 and |xy| <= (x² + y²)/2
                let cx = q.xx.abs() + 0.5 * q.xy.abs() + 0.5 * q.x.abs();
                let cy = q.yy.abs() + 0.5 * q.xy.abs() + 0.5 * q.y.abs();
                let c0 = q.c.abs() + 0.5 * q.x.abs() + 0.5 * q.y.abs();
                cx.max(cy).max(c0)
            }
            RunningCost::Custom { growth, .. } => *growth,
        }
    }

    pub fn label(&self) -> String {
        match self {
            RunningCost::Quadratic(q) => {
                let terms = [
                    (q.xx, "x^2"),
                    (q.xy, "x*y"),
                    (q.yy, "y^2"),
                    (q.x, "x"),
                    (q.y, "y"),
                    (q.c, "1"),
                ];
                let parts: Vec<String> = terms
                    .iter()
                    .filter(|(c, _)| *c != 0.0)
                    .map(|(c, t)| format!("{c}*{t}"))
                    .collect();
                if parts.is_empty() {
                    "0".into()
                } else {
                    parts.join(" + ")
                }
            }
            RunningCost::Custom { name, .. } => name.clone(),
        }
    }
}

impl fmt::Debug for RunningCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RunningCost({})", self.label())
    }
}

/// Law of the initial position at the start time.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialLaw {
    Gaussian { mean: f64, std: f64 },
    Uniform { a: f64, b: f64 },
    /// Discrete mixture of `(location, weight)` atoms; weights are
    /// normalized on construction.
    Atoms(Vec<(f64, f64)>),
}

impl InitialLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            InitialLaw::Gaussian { mean, std } => {
                if !mean.is_finite() || !(std.is_finite() && *std > 0.0) {
                    return Err(Error::InvalidModel(format!(
                        "gaussian initial law needs finite mean and std > 0, got ({mean}, {std})"
                    )));
                }
            }
            InitialLaw::Uniform { a, b } => {
                if !(a.is_finite() && b.is_finite() && a < b) {
                    return Err(Error::InvalidModel(format!(
                        "uniform initial law needs a < b, got ({a}, {b})"
                    )));
                }
            }
            InitialLaw::Atoms(atoms) => {
                if atoms.is_empty() {
                    return Err(Error::InvalidModel("atoms initial law is empty".into()));
                }
                let total: f64 = atoms.iter().map(|a| a.1).sum();
                if atoms.iter().any(|(x, w)| !x.is_finite() || !(*w >= 0.0)) || !(total > 0.0) {
                    return Err(Error::InvalidModel(
                        "atoms need finite locations and nonnegative weights with positive sum"
                            .into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        match self {
            InitialLaw::Gaussian { mean, .. } => *mean,
            InitialLaw::Uniform { a, b } => 0.5 * (a + b),
            InitialLaw::Atoms(atoms) => {
                let total: f64 = atoms.iter().map(|a| a.1).sum();
                atoms.iter().map(|(x, w)| x * w).sum::<f64>() / total
            }
        }
    }

    /// Draw one position. Gaussian laws consume exactly one standard
    /// normal, the other laws one uniform.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            InitialLaw::Gaussian { mean, std } => {
                let z: f64 = rng.sample(StandardNormal);
                mean + std * z
            }
            InitialLaw::Uniform { a, b } => a + (b - a) * rng.random::<f64>(),
            InitialLaw::Atoms(atoms) => {
                let total: f64 = atoms.iter().map(|a| a.1).sum();
                let u = rng.random::<f64>() * total;
                let mut acc = 0.0;
                for (x, w) in atoms {
                    acc += w;
                    if u < acc {
                        return *x;
                    }
                }
                atoms.last().map(|a| a.0).unwrap_or(0.0)
            }
        }
    }

    /// Project the law onto the nodes of `axis`.
    ///
    /// Gaussians are sampled pointwise, uniforms by the exact overlap of
    /// the support with each node's dual cell, atoms by linear binning.
    pub fn discretize(&self, axis: &SpaceAxis) -> Result<GridMeasure> {
        match self {
            InitialLaw::Gaussian { mean, std } => GridMeasure::gaussian(axis, *mean, *std),
            InitialLaw::Uniform { a, b } => GridMeasure::uniform(axis, *a, *b),
            InitialLaw::Atoms(atoms) => GridMeasure::from_atoms(axis, atoms),
        }
    }

    pub fn label(&self) -> String {
        match self {
            InitialLaw::Gaussian { mean, std } => format!("gaussian({mean}, {std})"),
            InitialLaw::Uniform { a, b } => format!("uniform({a}, {b})"),
            InitialLaw::Atoms(atoms) => {
                let parts: Vec<String> = atoms.iter().map(|(x, w)| format!("({x},{w})")).collect();
                format!("atoms({})", parts.join(","))
            }
        }
    }
}

/// Plain parameter bundle used to build a [`ModelSpec`].
#[derive(Clone, Debug)]
pub struct ModelParams {
    pub name: String,
    pub drift: Drift,
    pub cost: RunningCost,
    pub sigma: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    /// `None` selects the finite-variation limit mode.
    pub theta: Option<f64>,
    pub horizon: f64,
    pub start: f64,
    pub initial_law: InitialLaw,
    /// Truncated interval on which assumptions are checked and bounds hold.
    pub domain: (f64, f64),
}

/// A validated problem instance. Immutable once built.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    name: String,
    drift: Drift,
    cost: RunningCost,
    sigma: f64,
    gamma1: f64,
    gamma2: f64,
    theta: Option<f64>,
    horizon: f64,
    start: f64,
    initial_law: InitialLaw,
    domain: (f64, f64),
}

impl ModelSpec {
    pub fn new(p: ModelParams) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidModel(msg));
        if !(p.gamma1.is_finite() && p.gamma2.is_finite()) || p.gamma1 + p.gamma2 <= 0.0 {
            return bad(format!(
                "gamma1 + gamma2 must be positive, got {} + {}",
                p.gamma1, p.gamma2
            ));
        }
        if !(p.sigma.is_finite() && p.sigma > 0.0) {
            return bad(format!("sigma must be positive, got {}", p.sigma));
        }
        if let Some(theta) = p.theta {
            if !(theta.is_finite() && theta > 0.0) {
                return bad(format!("theta must be positive, got {theta}"));
            }
        }
        if !(p.horizon.is_finite() && p.start.is_finite() && 0.0 <= p.start && p.start < p.horizon)
        {
            return bad(format!(
                "need 0 <= s < T, got s = {}, T = {}",
                p.start, p.horizon
            ));
        }
        let (lo, hi) = p.domain;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return bad(format!("invalid domain ({lo}, {hi})"));
        }
        if !p.drift.bound().is_finite() || !p.cost.growth_constant().is_finite() {
            return bad("coefficient bounds must be finite".into());
        }
        p.initial_law.validate()?;
        let initial_law = match p.initial_law {
            InitialLaw::Atoms(atoms) => {
                let total: f64 = atoms.iter().map(|a| a.1).sum();
                InitialLaw::Atoms(atoms.into_iter().map(|(x, w)| (x, w / total)).collect())
            }
            other => other,
        };
        Ok(Self {
            name: p.name,
            drift: p.drift,
            cost: p.cost,
            sigma: p.sigma,
            gamma1: p.gamma1,
            gamma2: p.gamma2,
            theta: p.theta,
            horizon: p.horizon,
            start: p.start,
            initial_law,
            domain: p.domain,
        })
    }

    pub fn params(&self) -> ModelParams {
        ModelParams {
            name: self.name.clone(),
            drift: self.drift.clone(),
            cost: self.cost.clone(),
            sigma: self.sigma,
            gamma1: self.gamma1,
            gamma2: self.gamma2,
            theta: self.theta,
            horizon: self.horizon,
            start: self.start,
            initial_law: self.initial_law.clone(),
            domain: self.domain,
        }
    }

    /// Same model with a different velocity bound.
    pub fn with_theta(&self, theta: f64) -> Result<Self> {
        let mut p = self.params();
        p.theta = Some(theta);
        Self::new(p)
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn drift(&self) -> &Drift {
        &self.drift
    }
    pub fn cost(&self) -> &RunningCost {
        &self.cost
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn gamma1(&self) -> f64 {
        self.gamma1
    }
    pub fn gamma2(&self) -> f64 {
        self.gamma2
    }
    pub fn theta(&self) -> Option<f64> {
        self.theta
    }
    pub fn horizon(&self) -> f64 {
        self.horizon
    }
    pub fn start(&self) -> f64 {
        self.start
    }
    pub fn initial_law(&self) -> &InitialLaw {
        &self.initial_law
    }
    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    /// Velocity bound, or an error in finite-variation mode where the
    /// bounded-velocity solvers do not apply.
    pub fn require_theta(&self) -> Result<f64> {
        self.theta.ok_or_else(|| {
            Error::InvalidModel(
                "model has no velocity bound (finite-variation mode); pick a theta".into(),
            )
        })
    }

    /// `c1`, the bound on `|b0|`.
    pub fn c1(&self) -> f64 {
        self.drift.bound()
    }

    /// `c_f`, the quadratic growth constant of `f0`.
    pub fn c_f(&self) -> f64 {
        self.cost.growth_constant()
    }

    /// True when neither `b0` nor `f0` depends on the population.
    pub fn is_decoupled(&self) -> bool {
        !self.drift.uses_population() && !self.cost.uses_population()
    }

    /// Control cost rate `γ1 u⁺ + γ2 u⁻` of a velocity `u`.
    pub fn control_cost(&self, u: f64) -> f64 {
        if u > 0.0 {
            self.gamma1 * u
        } else if u < 0.0 {
            -self.gamma2 * u
        } else {
            0.0
        }
    }

    /// Pointwise `b(x, μ)`, see [`MeanFieldCoefficients`] for grid sweeps.
    pub fn mean_drift(&self, x: f64, mu: &GridMeasure) -> f64 {
        coefficients::drift_direct(&self.drift, x, mu)
    }

    /// Pointwise `f(x, μ)`.
    pub fn mean_cost(&self, x: f64, mu: &GridMeasure) -> f64 {
        coefficients::cost_direct(&self.cost, x, mu)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ModelParams {
        make_preset("crowd-aversion").unwrap().params()
    }

    #[test]
    fn rejects_nonpositive_gamma_sum() {
        for (g1, g2) in [(0.0, 0.0), (1.0, -1.0), (-0.5, 0.2), (-3.0, -1.0)] {
            let mut p = params();
            p.gamma1 = g1;
            p.gamma2 = g2;
            assert!(matches!(ModelSpec::new(p), Err(Error::InvalidModel(_))));
        }
        let mut p = params();
        p.gamma1 = -0.5;
        p.gamma2 = 0.6;
        assert!(ModelSpec::new(p).is_ok());
    }

    #[test]
    fn rejects_bad_scalars() {
        let mut p = params();
        p.sigma = 0.0;
        assert!(ModelSpec::new(p).is_err());
        let mut p = params();
        p.theta = Some(-1.0);
        assert!(ModelSpec::new(p).is_err());
        let mut p = params();
        p.start = 1.0;
        assert!(ModelSpec::new(p).is_err());
        let mut p = params();
        p.initial_law = InitialLaw::Uniform { a: 1.0, b: 1.0 };
        assert!(ModelSpec::new(p).is_err());
    }

    #[test]
    fn control_cost_splits_directions() {
        let mut p = params();
        p.gamma1 = 2.0;
        p.gamma2 = 3.0;
        let m = ModelSpec::new(p).unwrap();
        assert_eq!(m.control_cost(1.5), 3.0);
        assert_eq!(m.control_cost(-1.5), 4.5);
        assert_eq!(m.control_cost(0.0), 0.0);
    }

    #[test]
    fn quadratic_labels_and_growth() {
        assert_eq!(RunningCost::square().label(), "1*x^2");
        assert_eq!(RunningCost::zero().label(), "0");
        assert_eq!(RunningCost::half_square_sum().growth_constant(), 1.0);
        assert_eq!(RunningCost::square_plus_product().growth_constant(), 1.5);
        assert!(!RunningCost::square().uses_population());
        assert!(RunningCost::product().uses_population());
    }

    #[test]
    fn atoms_are_normalized() {
        let mut p = params();
        p.initial_law = InitialLaw::Atoms(vec![(0.0, 1.0), (1.0, 3.0)]);
        let m = ModelSpec::new(p).unwrap();
        assert_eq!(
            m.initial_law(),
            &InitialLaw::Atoms(vec![(0.0, 0.25), (1.0, 0.75)])
        );
        assert_eq!(m.initial_law().mean(), 0.75);
    }
}
