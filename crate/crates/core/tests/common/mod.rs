//! Independent reference implementations shared by the integration and
//! acceptance tests. Nothing here calls into the solver code paths.
#![allow(dead_code)]

/// Value iteration for a single player with state-only drift `b(x)` and
/// cost `f(x)`: controls enumerated over `{+θ, 0, −θ}`, Brownian step
/// replaced by the two-point law `±σ√dt`, continuation values by linear
/// interpolation (linear extrapolation off the grid).
pub struct DpOracle {
    pub xs: Vec<f64>,
    pub ts: Vec<f64>,
    /// `values[k][j]`
    pub values: Vec<Vec<f64>>,
    /// Minimizing control per node, `controls[k][j]` for `k < nt − 1`.
    pub controls: Vec<Vec<f64>>,
}

pub struct DpProblem<'a> {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub horizon: f64,
    pub nt: usize,
    pub sigma: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub theta: f64,
    pub drift: &'a dyn Fn(f64) -> f64,
    pub cost: &'a dyn Fn(f64) -> f64,
}

fn lerp_extrapolate(xs: &[f64], v: &[f64], x: f64) -> f64 {
    let n = xs.len();
    let h = xs[1] - xs[0];
    let u = (x - xs[0]) / h;
    let j = if u < 0.0 { 0 } else { (u as usize).min(n - 2) };
    let w = u - j as f64;
    v[j] * (1.0 - w) + v[j + 1] * w
}

impl DpOracle {
    pub fn solve(p: &DpProblem) -> Self {
        let h = (p.x_max - p.x_min) / (p.nx - 1) as f64;
        let xs: Vec<f64> = (0..p.nx).map(|j| p.x_min + j as f64 * h).collect();
        let dt = p.horizon / (p.nt - 1) as f64;
        let ts: Vec<f64> = (0..p.nt).map(|k| k as f64 * dt).collect();
        let noise = p.sigma * dt.sqrt();
        let mut values = vec![vec![0.0; p.nx]; p.nt];
        let mut controls = vec![vec![0.0; p.nx]; p.nt - 1];
        for k in (0..p.nt - 1).rev() {
            for j in 0..p.nx {
                let x = xs[j];
                let mut best = f64::INFINITY;
                let mut arg = 0.0;
                for u in [p.theta, 0.0, -p.theta] {
                    let unit = if u > 0.0 { p.gamma1 * u } else { -p.gamma2 * u };
                    let centre = x + ((p.drift)(x) + u) * dt;
                    let cont = 0.5
                        * (lerp_extrapolate(&xs, &values[k + 1], centre + noise)
                            + lerp_extrapolate(&xs, &values[k + 1], centre - noise));
                    let total = ((p.cost)(x) + unit) * dt + cont;
                    if total < best {
                        best = total;
                        arg = u;
                    }
                }
                values[k][j] = best;
                controls[k][j] = arg;
            }
        }
        Self { xs, ts, values, controls }
    }
}

/// Standard normal distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Minimal cost of the transport problem between atoms `a` and `b`
/// (weights normalized to one each), solved as a min-cost flow by
/// successive shortest paths with Bellman–Ford on the residual graph.
pub fn transport_lp(a: &[(f64, f64)], b: &[(f64, f64)], cost: impl Fn(f64, f64) -> f64) -> f64 {
    let (m, n) = (a.len(), b.len());
    let sa: f64 = a.iter().map(|p| p.1).sum();
    let sb: f64 = b.iter().map(|p| p.1).sum();
    // Node layout: 0 source, 1..=m supplies, m+1..=m+n demands, m+n+1 sink.
    let nodes = m + n + 2;
    let sink = m + n + 1;
    struct Edge {
        to: usize,
        cap: f64,
        cost: f64,
    }
    let mut edges: Vec<Edge> = Vec::new();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nodes];
    let mut add = |edges: &mut Vec<Edge>, u: usize, v: usize, cap: f64, c: f64| {
        adj[u].push(edges.len());
        edges.push(Edge { to: v, cap, cost: c });
        adj[v].push(edges.len());
        edges.push(Edge { to: u, cap: 0.0, cost: -c });
    };
    for (i, p) in a.iter().enumerate() {
        add(&mut edges, 0, 1 + i, p.1 / sa, 0.0);
    }
    for (j, q) in b.iter().enumerate() {
        add(&mut edges, 1 + m + j, sink, q.1 / sb, 0.0);
    }
    for (i, p) in a.iter().enumerate() {
        for (j, q) in b.iter().enumerate() {
            add(&mut edges, 1 + i, 1 + m + j, f64::INFINITY, cost(p.0, q.0));
        }
    }
    let eps = 1e-15;
    let mut total = 0.0;
    let mut shipped = 0.0;
    while shipped < 1.0 - 1e-13 {
        let mut dist = vec![f64::INFINITY; nodes];
        let mut via: Vec<Option<usize>> = vec![None; nodes];
        dist[0] = 0.0;
        for _ in 0..nodes {
            let mut changed = false;
            for u in 0..nodes {
                if !dist[u].is_finite() {
                    continue;
                }
                for &e in &adj[u] {
                    let ed = &edges[e];
                    if ed.to != 0 && ed.cap > eps && dist[u] + ed.cost < dist[ed.to] - 1e-12 {
                        dist[ed.to] = dist[u] + ed.cost;
                        via[ed.to] = Some(e);
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        if !dist[sink].is_finite() {
            break;
        }
        let mut push = f64::INFINITY;
        let mut v = sink;
        let mut hops = 0;
        while v != 0 {
            let e = via[v].expect("augmenting path reaches the source");
            push = push.min(edges[e].cap);
            v = edges[e ^ 1].to;
            hops += 1;
            assert!(hops <= nodes, "cycle in the shortest-path tree");
        }
        let mut v = sink;
        while v != 0 {
            let e = via[v].expect("augmenting path reaches the source");
            edges[e].cap -= push;
            edges[e ^ 1].cap += push;
            total += push * edges[e].cost;
            v = edges[e ^ 1].to;
        }
        shipped += push;
    }
    total
}
