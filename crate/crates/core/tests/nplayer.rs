use bvmfg::hjb::hjb_min_nt;
use bvmfg::mfg::{default_initial_flow, model_grid, solve_mfg, EquilibriumResult, SolverSettings};
use bvmfg::model::{make_preset, ModelSpec};
use bvmfg::nplayer::*;
use bvmfg::Error;

fn equilibrium(name: &str, nx: usize) -> (ModelSpec, EquilibriumResult) {
    let m = make_preset(name).unwrap();
    let g = model_grid(&m, nx, 2).unwrap();
    let grid = model_grid(&m, nx, hjb_min_nt(&m, m.require_theta().unwrap(), &g)).unwrap();
    let eq = solve_mfg(&m, &SolverSettings::default(), default_initial_flow(&m, &grid).unwrap()).unwrap();
    (m, eq)
}

fn small_cfg(seed: u64) -> SimulationConfig {
    SimulationConfig {
        n_players: 16,
        n_replications: 8,
        seed,
        substeps: 2,
    }
}

#[test]
fn paths_are_reproducible_from_the_seed() {
    let (m, eq) = equilibrium("crowd-aversion", 81);
    let policies = vec![eq.policy.clone(); 16];
    let a = simulate_nplayer(&m, &policies, &small_cfg(3)).unwrap();
    let b = simulate_nplayer(&m, &policies, &small_cfg(3)).unwrap();
    let c = simulate_nplayer(&m, &policies, &small_cfg(4)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.states, c.states);
    assert_eq!(a.brownian_seed_map[16 + 5], stream_id(1, 5));
    assert_eq!(a.states.len(), 8 * (a.clock.steps + 1) * 16);
}

#[test]
fn player_noise_does_not_depend_on_population_size() {
    let (m, eq) = equilibrium("decoupled", 81);
    let few = simulate_nplayer(&m, &vec![eq.policy.clone(); 3], &SimulationConfig { n_players: 3, ..small_cfg(9) }).unwrap();
    let many = simulate_nplayer(&m, &vec![eq.policy.clone(); 40], &SimulationConfig { n_players: 40, ..small_cfg(9) }).unwrap();
    for rep in 0..8 {
        assert_eq!(few.path(rep, 2), many.path(rep, 2));
    }
}

#[test]
fn cost_evaluation_checks_the_player_index() {
    let (m, eq) = equilibrium("decoupled", 41);
    let cfg = SimulationConfig { n_players: 2, ..small_cfg(1) };
    let bundle = simulate_nplayer(&m, &vec![eq.policy.clone(); 2], &cfg).unwrap();
    assert!(evaluate_cost(&m, &bundle, 1).is_ok());
    assert!(matches!(
        evaluate_cost(&m, &bundle, 2),
        Err(Error::PlayerIndex { index: 2, n_players: 2 })
    ));
    assert!(simulate_nplayer(&m, &vec![eq.policy.clone(); 3], &cfg).is_err());
}

#[test]
fn decoupled_players_do_not_feel_the_population() {
    let (m, eq) = equilibrium("decoupled", 101);
    let cfg = SimulationConfig { n_replications: 10, ..SimulationConfig::default() };
    let report = coupling_error(&m, &eq, &[4, 16, 64], &cfg).unwrap();
    for row in &report.rows {
        assert_eq!(row.err_sq.mean, 0.0);
        assert_eq!(row.err_sq.se, 0.0);
    }
    assert!(report.fit.is_none());
}

#[test]
fn interacting_players_approach_the_mean_field() {
    let (m, eq) = equilibrium("crowd-aversion", 101);
    let cfg = SimulationConfig { n_replications: 40, ..SimulationConfig::default() };
    let report = coupling_error(&m, &eq, &[16, 64, 256], &cfg).unwrap();
    assert!(report.strictly_decreasing(), "{:?}", report.rows);
    assert!(report.fit.unwrap().slope < -0.5);
}

#[test]
fn deviations_parse_and_print() {
    let lib = DeviationLibrary::parse("shift(0.1), shift(-0.2),zero, full_up, full_down, burst(theta_max), burst(8)").unwrap();
    assert_eq!(lib.deviations.len(), 7);
    assert_eq!(lib.deviations[1], Deviation::Shift(-0.2));
    assert_eq!(lib.deviations[6], Deviation::Burst(BurstVelocity::Value(8.0)));
    assert!(lib.contains_burst_theta_max());
    assert_eq!(DeviationLibrary::parse(&lib.to_string()).unwrap(), lib);
    for bad in ["", "shift", "shift()", "burst(-1)", "jump", "shift(nan)"] {
        assert!(DeviationLibrary::parse(bad).is_err(), "{bad:?} accepted");
    }
    assert!(!DeviationLibrary::standard().contains_burst_theta_max());
}

#[test]
fn resolved_deviations_act_as_named() {
    let (_, eq) = equilibrium("crowd-aversion", 61);
    let theta = eq.policy.theta();
    let up = Deviation::FullUp.resolve(&eq.policy, None).unwrap();
    let down = Deviation::FullDown.resolve(&eq.policy, None).unwrap();
    let idle = Deviation::Zero.resolve(&eq.policy, None).unwrap();
    for t in [0.0, 0.3, 1.0] {
        for x in [-5.0, -1.0, 0.0, 2.0, 5.0] {
            assert_eq!(up.control(t, x), theta);
            assert_eq!(down.control(t, x), -theta);
            assert_eq!(idle.control(t, x), 0.0);
        }
    }
    let shifted = Deviation::Shift(0.1).resolve(&eq.policy, None).unwrap();
    assert!((shifted.lower()[3] - eq.policy.lower()[3] - 0.1).abs() < 1e-12);
    assert!(Deviation::Burst(BurstVelocity::ThetaMax).resolve(&eq.policy, None).is_err());
    assert_eq!(Deviation::Burst(BurstVelocity::Value(9.0)).resolve(&eq.policy, None).unwrap().theta(), 9.0);
}

#[test]
fn following_the_equilibrium_gains_nothing() {
    let (m, eq) = equilibrium("crowd-aversion", 81);
    let lib = DeviationLibrary::parse("shift(0), zero").unwrap();
    let cfg = SimulationConfig { n_replications: 6, ..SimulationConfig::default() };
    let report = ne_gap(&m, &eq, &[8, 32], &lib, &cfg).unwrap();
    for row in &report.rows {
        let same = &row.outcomes[0];
        assert_eq!(same.benefit.mean, 0.0);
        assert_eq!(same.mf_benefit.mean, 0.0);
        assert!(row.outcomes[1].benefit.mean < 0.0);
    }
}

#[test]
fn results_do_not_depend_on_the_thread_count() {
    let (m, eq) = equilibrium("crowd-aversion", 61);
    let cfg = SimulationConfig { n_replications: 12, ..SimulationConfig::default() };
    let lib = DeviationLibrary::standard();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let report = GapReport {
                n_values: vec![8, 32],
                coupling: Some(coupling_error(&m, &eq, &[8, 32], &cfg).unwrap()),
                gaps: Some(ne_gap(&m, &eq, &[8, 32], &lib, &cfg).unwrap()),
            };
            let mut out = Vec::new();
            report.write_csv(&mut out).unwrap();
            out
        })
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn bad_configurations_are_rejected() {
    let (m, eq) = equilibrium("decoupled", 41);
    let cfg = SimulationConfig::default();
    assert!(coupling_error(&m, &eq, &[], &cfg).is_err());
    assert!(coupling_error(&m, &eq, &[8, 8], &cfg).is_err());
    assert!(coupling_error(&m, &eq, &[0, 8], &cfg).is_err());
    let one_rep = SimulationConfig { n_replications: 1, ..cfg };
    assert!(coupling_error(&m, &eq, &[8], &one_rep).is_err());
    let no_sub = SimulationConfig { substeps: 0, ..cfg };
    assert!(ne_gap(&m, &eq, &[8], &DeviationLibrary::standard(), &no_sub).is_err());
}

#[test]
fn top_velocity_burst_costs_nothing_at_the_top_velocity() {
    let m = make_preset("crowd-aversion").unwrap();
    let grid = model_grid(&m, 61, 2).unwrap();
    let sw = bvmfg::mfg::theta_sweep(&m, &[4.0, 8.0], grid, &[(0.0, 0.0)], &SolverSettings::default()).unwrap();
    let library = DeviationLibrary::parse("burst(theta_max)").unwrap();
    let report = fv_gap(&m, &sw, &[8, 16], &library, 0.1, &small_cfg(5)).unwrap();
    let top: Vec<_> = report.rows.iter().filter(|r| r.theta == 8.0).collect();
    assert_eq!(top.len(), 2);
    for r in top {
        assert_eq!(r.gap.mean, 0.0);
        assert_eq!(r.epsilon_theta, 0.0);
        assert!((r.budget - 0.1 / (r.n as f64).sqrt()).abs() < 1e-15);
    }
    assert!(report.rows.iter().all(|r| r.gap.mean.is_finite()));
}
