use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::hjb::{threshold_control, ThresholdPolicy};
use crate::kernel::{Correlator, CorrelatorWorkspace};
use crate::measure::{GridMeasureFlow, SpaceAxis, SpaceTimeGrid};
use crate::model::{CoefficientTables, ModelSpec, RunningCost};

/// Identifier of the noise substream of `player` in replication `rep`.
pub fn stream_id(rep: u64, player: u64) -> u64 {
    (rep << 32) | player
}

pub(crate) fn stream_rng(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Euler–Maruyama time points `t_m = t0 + m·h`, `m = 0..=steps`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Clock {
    pub t0: f64,
    pub t1: f64,
    pub steps: usize,
}

impl Clock {
    pub fn from_grid(grid: &SpaceTimeGrid, substeps: usize) -> Self {
        Self {
            t0: grid.time().t_start(),
            t1: grid.time().t_end(),
            steps: (grid.nt() - 1) * substeps,
        }
    }

    pub fn h(&self) -> f64 {
        (self.t1 - self.t0) / self.steps as f64
    }

    pub fn t(&self, m: usize) -> f64 {
        if m == self.steps {
            self.t1
        } else {
            self.t0 + m as f64 * self.h()
        }
    }

    /// Trapezoidal weight of time point `m`.
    pub fn weight(&self, m: usize) -> f64 {
        if m == 0 || m == self.steps {
            0.5 * self.h()
        } else {
            self.h()
        }
    }
}

/// `b(x, μ*_t)` and `f(x, μ*_t)` against a fixed flow, bilinear in
/// `(t, x)`. Coefficients that ignore the population are evaluated
/// directly.
pub struct MeanFieldTable {
    model: ModelSpec,
    tables: CoefficientTables,
}

impl MeanFieldTable {
    pub fn new(model: &ModelSpec, flow: &GridMeasureFlow) -> Self {
        Self {
            model: model.clone(),
            tables: CoefficientTables::from_flow(model, flow),
        }
    }

    fn bilinear<'s>(&'s self, t: f64, x: f64, slice: impl Fn(usize) -> &'s [f64]) -> f64 {
        let g = self.tables.grid();
        let (k, w) = g.time().locate(t);
        let ax = g.space();
        let a = ax.interpolate(slice(k), x);
        if w == 0.0 {
            a
        } else {
            (1.0 - w) * a + w * ax.interpolate(slice(k + 1), x)
        }
    }

    pub fn drift(&self, t: f64, x: f64) -> f64 {
        let d = self.model.drift();
        if !d.uses_population() {
            return d.eval(x, 0.0);
        }
        self.bilinear(t, x, |k| self.tables.b_nodes(k))
    }

    pub fn cost(&self, t: f64, x: f64) -> f64 {
        let c = self.model.cost();
        if !c.uses_population() {
            return c.eval(x, 0.0);
        }
        self.bilinear(t, x, |k| self.tables.f_nodes(k))
    }
}

/// Scale of the fixed-point arithmetic used for order-independent sums.
const FIXED_ONE: f64 = (1u64 << 32) as f64;
const FIXED_TERM: f64 = (1u64 << 40) as f64;

/// `(1/N)·Σ_j b0(x_i, x_j)` for every `i`.
///
/// Translation-invariant drifts are evaluated by binning the players onto
/// a fine mesh, correlating with the kernel by FFT and interpolating back;
/// the bin weights are accumulated in integers so the result does not
/// depend on the order of the players. Other population drifts use a
/// direct double sum, also accumulated in fixed point.
pub(crate) struct Interaction {
    mesh: SpaceAxis,
    correlator: Option<Correlator>,
}

#[derive(Default)]
pub(crate) struct InteractionWorkspace {
    counts: Vec<i64>,
    mass: Vec<f64>,
    field: Vec<f64>,
    fft: CorrelatorWorkspace,
}

/// Mesh nodes per unit length for the interaction correlator.
const MESH_DENSITY: f64 = 100.0;

impl Interaction {
    pub(crate) fn new(model: &ModelSpec, domain: &SpaceAxis) -> Self {
        let span = domain.x_max() - domain.x_min();
        let n = ((span * MESH_DENSITY).ceil() as usize + 1).max(domain.nx());
        let mesh = SpaceAxis::new(domain.x_min(), domain.x_max(), n).expect("valid domain");
        let correlator = if model.drift().uses_population() {
            model
                .drift()
                .kernel()
                .map(|k| Correlator::new(n, mesh.dx(), k, &[0.0]))
        } else {
            None
        };
        Self { mesh, correlator }
    }

    pub(crate) fn drift(
        &self,
        model: &ModelSpec,
        xs: &[f64],
        out: &mut [f64],
        ws: &mut InteractionWorkspace,
    ) {
        let drift = model.drift();
        if !drift.uses_population() {
            for (o, &x) in out.iter_mut().zip(xs) {
                *o = drift.eval(x, 0.0);
            }
            return;
        }
        let n = xs.len() as f64;
        if let Some(c) = &self.correlator {
            let nm = self.mesh.nx();
            ws.counts.clear();
            ws.counts.resize(nm, 0);
            for &x in xs {
                let (j, frac) = self.mesh.locate(x);
                let right = (frac * FIXED_ONE).round() as i64;
                ws.counts[j] += (FIXED_ONE as i64) - right;
                ws.counts[j + 1] += right;
            }
            let scale = 1.0 / (FIXED_ONE * n);
            ws.mass.clear();
            ws.mass.extend(ws.counts.iter().map(|&c| c as f64 * scale));
            ws.field.resize(nm, 0.0);
            c.correlate(&ws.mass, &mut [&mut ws.field[..]], &mut ws.fft);
            for (o, &x) in out.iter_mut().zip(xs) {
                *o = self.mesh.interpolate(&ws.field, x);
            }
            return;
        }
        for (o, &x) in out.iter_mut().zip(xs) {
            let acc: i128 = xs
                .iter()
                .map(|&y| (drift.eval(x, y) * FIXED_TERM).round() as i128)
                .sum();
            *o = acc as f64 / FIXED_TERM / n;
        }
    }
}

/// `(1/N)·Σ_j f0(x_i, x_j)`.
pub(crate) fn empirical_cost(model: &ModelSpec, xs: &[f64], i: usize) -> f64 {
    let cost = model.cost();
    let x = xs[i];
    if !cost.uses_population() {
        return cost.eval(x, 0.0);
    }
    let n = xs.len() as f64;
    match cost {
        RunningCost::Quadratic(q) => {
            let m1 = xs.iter().sum::<f64>() / n;
            let m2 = xs.iter().map(|y| y * y).sum::<f64>() / n;
            q.mean_field(x, m1, m2)
        }
        _ => xs.iter().map(|&y| cost.eval(x, y)).sum::<f64>() / n,
    }
}

/// Which threshold rule each player follows.
#[derive(Clone, Copy)]
pub(crate) enum Assignment<'a> {
    Shared(&'a ThresholdPolicy),
    /// Player 0 follows `first`, everybody else `rest`.
    FirstDeviates {
        first: &'a ThresholdPolicy,
        rest: &'a ThresholdPolicy,
    },
    PerPlayer(&'a [ThresholdPolicy]),
}

/// Where the population drift and cost come from.
#[derive(Clone, Copy)]
pub(crate) enum Environment<'a> {
    /// The other simulated players.
    Empirical,
    /// A fixed flow; players do not interact.
    MeanField(&'a MeanFieldTable),
}

/// Shared, immutable simulation setup.
pub(crate) struct SimContext {
    pub(crate) model: ModelSpec,
    pub(crate) clock: Clock,
    pub(crate) domain: SpaceAxis,
    pub(crate) interaction: Interaction,
    pub(crate) seed: u64,
}

impl SimContext {
    pub(crate) fn new(model: &ModelSpec, grid: &SpaceTimeGrid, substeps: usize, seed: u64) -> Result<Self> {
        if substeps == 0 {
            return Err(Error::InvalidArgument("substeps must be at least 1".into()));
        }
        Ok(Self {
            model: model.clone(),
            clock: Clock::from_grid(grid, substeps),
            domain: *grid.space(),
            interaction: Interaction::new(model, grid.space()),
            seed,
        })
    }
}

/// A population of players advanced in lock step.
pub(crate) struct Swarm<'a> {
    ctx: &'a SimContext,
    assignment: Assignment<'a>,
    env: Environment<'a>,
    rngs: Vec<ChaCha8Rng>,
    pub(crate) x: Vec<f64>,
    /// Controls chosen at the current time point.
    pub(crate) u: Vec<f64>,
    drift: Vec<f64>,
    ws: InteractionWorkspace,
    step: usize,
    pub(crate) reflections: u64,
}

impl<'a> Swarm<'a> {
    /// Draw initial positions from each player's stream. `streams[i]` is
    /// the substream identifier of player `i`.
    pub(crate) fn new(
        ctx: &'a SimContext,
        streams: &[u64],
        assignment: Assignment<'a>,
        env: Environment<'a>,
    ) -> Self {
        let n = streams.len();
        let mut rngs: Vec<ChaCha8Rng> = streams.iter().map(|&id| stream_rng(ctx.seed, id)).collect();
        let mut reflections = 0;
        let x = rngs
            .iter_mut()
            .map(|r| {
                let x0 = ctx.model.initial_law().sample(r);
                reflect(x0, &ctx.domain, &mut reflections)
            })
            .collect();
        let mut s = Self {
            ctx,
            assignment,
            env,
            rngs,
            x,
            u: vec![0.0; n],
            drift: vec![0.0; n],
            ws: InteractionWorkspace::default(),
            step: 0,
            reflections,
        };
        s.choose_controls();
        s
    }

    pub(crate) fn step(&self) -> usize {
        self.step
    }

    pub(crate) fn t(&self) -> f64 {
        self.ctx.clock.t(self.step)
    }

    pub(crate) fn done(&self) -> bool {
        self.step == self.ctx.clock.steps
    }

    fn choose_controls(&mut self) {
        let t = self.t();
        match self.assignment {
            Assignment::Shared(p) => {
                let (a, b) = p.boundaries_at(t);
                for (u, &x) in self.u.iter_mut().zip(&self.x) {
                    *u = threshold_control(a, b, p.theta(), x);
                }
            }
            Assignment::FirstDeviates { first, rest } => {
                let (a, b) = rest.boundaries_at(t);
                for (u, &x) in self.u.iter_mut().zip(&self.x).skip(1) {
                    *u = threshold_control(a, b, rest.theta(), x);
                }
                self.u[0] = first.control(t, self.x[0]);
            }
            Assignment::PerPlayer(ps) => {
                for ((u, &x), p) in self.u.iter_mut().zip(&self.x).zip(ps) {
                    *u = p.control(t, x);
                }
            }
        }
    }

    /// Running cost of player `i` at the current time point.
    pub(crate) fn running_cost(&self, i: usize) -> f64 {
        match self.env {
            Environment::Empirical => empirical_cost(&self.ctx.model, &self.x, i),
            Environment::MeanField(table) => table.cost(self.t(), self.x[i]),
        }
    }

    /// Control cost rate of player `i` at the current time point.
    pub(crate) fn control_cost(&self, i: usize) -> f64 {
        self.ctx.model.control_cost(self.u[i])
    }

    /// One Euler–Maruyama step with the controls chosen at the current
    /// time; controls for the new time are chosen afterwards.
    pub(crate) fn advance(&mut self) {
        debug_assert!(!self.done());
        let ctx = self.ctx;
        let h = ctx.clock.h();
        let t = self.t();
        match self.env {
            Environment::Empirical => {
                ctx.interaction
                    .drift(&ctx.model, &self.x, &mut self.drift, &mut self.ws)
            }
            Environment::MeanField(table) => {
                for (d, &x) in self.drift.iter_mut().zip(&self.x) {
                    *d = table.drift(t, x);
                }
            }
        }
        let noise = ctx.model.sigma() * h.sqrt();
        for i in 0..self.x.len() {
            let z: f64 = self.rngs[i].sample(StandardNormal);
            let next = self.x[i] + (self.drift[i] + self.u[i]) * h + noise * z;
            self.x[i] = reflect(next, &ctx.domain, &mut self.reflections);
        }
        self.step += 1;
        self.choose_controls();
    }
}

/// Mirror a point that left the domain back inside (then clamp).
fn reflect(x: f64, domain: &SpaceAxis, events: &mut u64) -> f64 {
    let (lo, hi) = (domain.x_min(), domain.x_max());
    if x < lo {
        *events += 1;
        (2.0 * lo - x).clamp(lo, hi)
    } else if x > hi {
        *events += 1;
        (2.0 * hi - x).clamp(lo, hi)
    } else {
        x
    }
}

/// Accumulates one player's cost along a swarm run.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct CostMeter {
    total: f64,
}

impl CostMeter {
    /// Record the current time point of `swarm` for player `i`.
    pub(crate) fn observe(&mut self, swarm: &Swarm, i: usize) {
        let clock = swarm.ctx.clock;
        let m = swarm.step();
        self.total += clock.weight(m) * swarm.running_cost(i);
        if m < clock.steps {
            self.total += clock.h() * swarm.control_cost(i);
        }
    }

    pub(crate) fn total(&self) -> f64 {
        self.total
    }
}

/// Run `swarm` to the horizon, returning the cost of player `i`.
pub(crate) fn run_cost(mut swarm: Swarm, i: usize) -> f64 {
    let mut meter = CostMeter::default();
    loop {
        meter.observe(&swarm, i);
        if swarm.done() {
            break;
        }
        swarm.advance();
    }
    meter.total()
}
