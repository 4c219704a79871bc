//! Randomized spot checks of the standing assumptions: Lipschitz
//! continuity and boundedness of the coefficients on the truncated
//! domain, convexity of the running cost and Lasry–Lions monotonicity.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::ModelSpec;
use crate::measure::{wasserstein_discrete, DiscreteMeasure, Order};

/// Why the rationality requirement needs no numeric check.
pub const A6_NOTE: &str = "Rationality holds structurally: every feedback control produced by the \
solver is a threshold policy taking the values +theta, 0, -theta on x <= a(t), a(t) < x < b(t), \
x >= b(t) with a(t) <= b(t), hence nonincreasing in x.";

/// Why the Hamiltonian part of the monotonicity condition is not sampled.
pub const HAMILTONIAN_NOTE: &str = "H(p) = min{(p + gamma1) theta, (gamma2 - p) theta, 0} is \
piecewise linear with kinks only at p = -gamma1 and p = gamma2. On each linear piece \
H(p+q) - H(p) - H'(p) q = 0 forces p and p+q into the same piece, where H' is constant, so the \
implication holds away from the two kinks, a set of measure zero where H' is set-valued.";

const LATTICE_NODES: usize = 101;

/// Sampled Lipschitz quotients on a box.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LipschitzEstimates {
    pub domain: (f64, f64),
    pub samples: usize,
    /// max |Δb0| / (|Δx| + |Δy|)
    pub b0: f64,
    /// max |Δf0| / (|Δx| + |Δy|)
    pub f0: f64,
    /// max |Δb| / (|Δx| + D¹(μ, ν))
    pub b: f64,
    /// max |Δf| / (|Δx| + D¹(μ, ν))
    pub f: f64,
    /// Largest sampled |b0|.
    pub sup_b0: f64,
    /// Bound c1 declared by the model.
    pub declared_c1: f64,
}

/// One sampled pair of atomic measures and `M(μ¹, μ²)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonotonicitySample {
    pub mu1: Vec<(f64, f64)>,
    pub mu2: Vec<(f64, f64)>,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub model: String,
    pub lipschitz_estimates: Option<LipschitzEstimates>,
    pub convexity_ok: Option<bool>,
    /// Smallest sampled second difference quotient of `f(·, μ)`.
    pub convexity_margin: Option<f64>,
    pub monotonicity_samples: Vec<MonotonicitySample>,
    pub a6_note: String,
    pub hamiltonian_note: String,
}

impl AssumptionReport {
    fn empty(model: &ModelSpec) -> Self {
        Self {
            model: model.name().to_string(),
            lipschitz_estimates: None,
            convexity_ok: None,
            convexity_margin: None,
            monotonicity_samples: Vec::new(),
            a6_note: A6_NOTE.to_string(),
            hamiltonian_note: HAMILTONIAN_NOTE.to_string(),
        }
    }

    pub fn min_monotonicity(&self) -> Option<f64> {
        self.monotonicity_samples
            .iter()
            .map(|s| s.value)
            .reduce(f64::min)
    }

    /// All sampled `M` values are at least `-tolerance`.
    pub fn is_monotone(&self, tolerance: f64) -> bool {
        self.min_monotonicity().is_none_or(|m| m >= -tolerance)
    }

    /// Fill the fields of `self` that `other` has and `self` lacks.
    pub fn merge(mut self, other: AssumptionReport) -> Self {
        if self.lipschitz_estimates.is_none() {
            self.lipschitz_estimates = other.lipschitz_estimates;
        }
        if self.convexity_ok.is_none() {
            self.convexity_ok = other.convexity_ok;
            self.convexity_margin = other.convexity_margin;
        }
        self.monotonicity_samples
            .extend(other.monotonicity_samples);
        self
    }
}

fn mean_cost(model: &ModelSpec, x: f64, mu: &DiscreteMeasure) -> f64 {
    mu.points()
        .iter()
        .zip(mu.weights())
        .map(|(y, w)| w * model.cost().eval(x, *y))
        .sum()
}

fn mean_drift(model: &ModelSpec, x: f64, mu: &DiscreteMeasure) -> f64 {
    mu.points()
        .iter()
        .zip(mu.weights())
        .map(|(y, w)| w * model.drift().eval(x, *y))
        .sum()
}

/// `M(μ¹, μ²) = ∫ (f(x, μ¹) − f(x, μ²)) (μ¹ − μ²)(dx)`, exact for atoms.
pub fn monotonicity_functional(model: &ModelSpec, mu1: &DiscreteMeasure, mu2: &DiscreteMeasure) -> f64 {
    let term = |x: f64| mean_cost(model, x, mu1) - mean_cost(model, x, mu2);
    let plus: f64 = mu1
        .points()
        .iter()
        .zip(mu1.weights())
        .map(|(x, w)| w * term(*x))
        .sum();
    let minus: f64 = mu2
        .points()
        .iter()
        .zip(mu2.weights())
        .map(|(x, w)| w * term(*x))
        .sum();
    plus - minus
}

fn lattice(domain: (f64, f64)) -> Vec<f64> {
    let h = (domain.1 - domain.0) / (LATTICE_NODES - 1) as f64;
    (0..LATTICE_NODES).map(|i| domain.0 + i as f64 * h).collect()
}

/// Atomic measure with 2 to 8 atoms on distinct lattice nodes.
fn random_atomic<R: Rng>(rng: &mut R, nodes: &[f64]) -> DiscreteMeasure {
    let k = rng.random_range(2..=8);
    let atoms: Vec<(f64, f64)> = sample(rng, nodes.len(), k)
        .into_iter()
        .map(|i| (nodes[i], rng.random_range(0.05..1.0)))
        .collect();
    DiscreteMeasure::new(&atoms).expect("positive weights")
}

fn atoms_of(mu: &DiscreteMeasure) -> Vec<(f64, f64)> {
    mu.points().iter().copied().zip(mu.weights().iter().copied()).collect()
}

/// Sample `n_pairs` pairs of atomic measures on a lattice over the model
/// domain and record `M(μ¹, μ²)`. Also records the discrete convexity of
/// `f(·, μ)` along the lattice for every sampled measure.
pub fn check_monotonicity(model: &ModelSpec, n_pairs: usize, seed: u64) -> AssumptionReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = lattice(model.domain());
    let h = nodes[1] - nodes[0];
    let mut report = AssumptionReport::empty(model);
    let mut margin = f64::INFINITY;
    for _ in 0..n_pairs.max(1) {
        let mu1 = random_atomic(&mut rng, &nodes);
        let mu2 = random_atomic(&mut rng, &nodes);
        for mu in [&mu1, &mu2] {
            let vals: Vec<f64> = nodes.iter().map(|&x| mean_cost(model, x, mu)).collect();
            for w in vals.windows(3) {
                margin = margin.min((w[0] - 2.0 * w[1] + w[2]) / (h * h));
            }
        }
        let value = monotonicity_functional(model, &mu1, &mu2);
        report.monotonicity_samples.push(MonotonicitySample {
            mu1: atoms_of(&mu1),
            mu2: atoms_of(&mu2),
            value,
        });
    }
    // second differences of a convex function may round slightly below zero
    report.convexity_ok = Some(margin >= -1e-8);
    report.convexity_margin = Some(margin);
    report
}

/// Finite-difference Lipschitz quotients of `b0`, `f0`, `b`, `f` on
/// `domain`, half from independent pairs and half from nearby pairs.
pub fn check_lipschitz(
    model: &ModelSpec,
    domain: (f64, f64),
    n_samples: usize,
    seed: u64,
) -> AssumptionReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = domain;
    let width = hi - lo;
    let nodes = lattice(domain);
    let point = |rng: &mut ChaCha8Rng, near: Option<f64>| -> f64 {
        match near {
            Some(c) => (c + 1e-3 * width * rng.random_range(-1.0..1.0)).clamp(lo, hi),
            None => rng.random_range(lo..=hi),
        }
    };
    let mut est = LipschitzEstimates {
        domain,
        samples: n_samples,
        b0: 0.0,
        f0: 0.0,
        b: 0.0,
        f: 0.0,
        sup_b0: 0.0,
        declared_c1: model.c1(),
    };
    let quotient = |num: f64, den: f64| if den > 0.0 { num.abs() / den } else { 0.0 };
    for i in 0..n_samples.max(2) {
        let x1 = point(&mut rng, None);
        let y1 = point(&mut rng, None);
        let (x2, y2) = if i % 2 == 0 {
            (point(&mut rng, None), point(&mut rng, None))
        } else {
            (point(&mut rng, Some(x1)), point(&mut rng, Some(y1)))
        };
        let den = (x1 - x2).abs() + (y1 - y2).abs();
        let (b1, b2) = (model.drift().eval(x1, y1), model.drift().eval(x2, y2));
        est.b0 = est.b0.max(quotient(b1 - b2, den));
        est.sup_b0 = est.sup_b0.max(b1.abs()).max(b2.abs());
        let (f1, f2) = (model.cost().eval(x1, y1), model.cost().eval(x2, y2));
        est.f0 = est.f0.max(quotient(f1 - f2, den));

        let mu1 = random_atomic(&mut rng, &nodes);
        let mu2 = random_atomic(&mut rng, &nodes);
        let den = (x1 - x2).abs() + wasserstein_discrete(&mu1, &mu2, Order::One);
        est.b = est.b.max(quotient(
            mean_drift(model, x1, &mu1) - mean_drift(model, x2, &mu2),
            den,
        ));
        est.f = est.f.max(quotient(
            mean_cost(model, x1, &mu1) - mean_cost(model, x2, &mu2),
            den,
        ));
    }
    let mut report = AssumptionReport::empty(model);
    report.lipschitz_estimates = Some(est);
    report
}
