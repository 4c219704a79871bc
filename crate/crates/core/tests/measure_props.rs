mod common;

use bvmfg::measure::*;
use proptest::prelude::*;

fn atoms() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-4.0f64..4.0, 0.01f64..1.0), 1..=6)
}

fn masses(nx: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, nx).prop_filter("some mass", |m| m.iter().sum::<f64>() > 1e-3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn quantile_w1_equals_the_coupling_lp(a in atoms(), b in atoms()) {
        let (mu, nu) = (DiscreteMeasure::new(&a).unwrap(), DiscreteMeasure::new(&b).unwrap());
        let quantile = wasserstein_discrete(&mu, &nu, Order::One);
        let lp = common::transport_lp(&a, &b, |x, y| (x - y).abs());
        prop_assert!((quantile - lp).abs() <= 1e-10, "{} vs {}", quantile, lp);
    }

    #[test]
    fn quantile_w2_equals_the_coupling_lp(a in atoms(), b in atoms()) {
        let (mu, nu) = (DiscreteMeasure::new(&a).unwrap(), DiscreteMeasure::new(&b).unwrap());
        let quantile = wasserstein_discrete(&mu, &nu, Order::Two);
        let lp = common::transport_lp(&a, &b, |x, y| (x - y) * (x - y)).sqrt();
        prop_assert!((quantile - lp).abs() <= 1e-7, "{} vs {}", quantile, lp);
    }

    #[test]
    fn grid_distances_are_metrics(a in masses(17), b in masses(17), c in masses(17)) {
        let ax = SpaceAxis::new(-2.0, 2.0, 17).unwrap();
        let (a, b, c) = (
            GridMeasure::normalized(&ax, a).unwrap(),
            GridMeasure::normalized(&ax, b).unwrap(),
            GridMeasure::normalized(&ax, c).unwrap(),
        );
        for order in [Order::One, Order::Two] {
            let d = |x: &GridMeasure, y: &GridMeasure| wasserstein(x, y, order).unwrap();
            prop_assert!(d(&a, &a) <= 1e-12);
            prop_assert!(d(&a, &b) >= 0.0);
            prop_assert!((d(&a, &b) - d(&b, &a)).abs() <= 1e-12);
            prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-12);
        }
        prop_assert!(wasserstein(&a, &b, Order::One).unwrap() <= wasserstein(&a, &b, Order::Two).unwrap() + 1e-12);
    }

    #[test]
    fn cdf_area_is_w1(a in masses(23), b in masses(23)) {
        let ax = SpaceAxis::new(0.0, 3.0, 23).unwrap();
        let (a, b) = (GridMeasure::normalized(&ax, a).unwrap(), GridMeasure::normalized(&ax, b).unwrap());
        let w = wasserstein(&a, &b, Order::One).unwrap();
        prop_assert!((wasserstein_cdf_area(&a, &b).unwrap() - w).abs() <= 1e-12);
    }
}

#[test]
fn lp_oracle_on_a_hand_example() {
    let a = [(0.0, 0.5), (1.0, 0.5)];
    let b = [(0.5, 1.0)];
    assert!((common::transport_lp(&a, &b, |x, y| (x - y).abs()) - 0.5).abs() < 1e-15);
    let c = [(0.0, 0.25), (2.0, 0.75)];
    // A quarter stays at 0, a quarter travels 0 → 2, a half travels 1 → 2.
    assert!((common::transport_lp(&a, &c, |x, y| (x - y).abs()) - 1.0).abs() < 1e-15);
}

#[test]
fn flow_distance_is_the_worst_slice() {
    let grid = SpaceTimeGrid::new(-3.0, 3.0, 61, 0.0, 1.0, 3).unwrap();
    let ax = grid.space();
    let g = |m: f64| GridMeasure::gaussian(ax, m, 0.5).unwrap();
    let f1 = GridMeasureFlow::new(grid, vec![g(0.0), g(0.1), g(0.2)]).unwrap();
    let f2 = GridMeasureFlow::new(grid, vec![g(0.0), g(0.4), g(0.2)]).unwrap();
    let worst = wasserstein(&g(0.1), &g(0.4), Order::Two).unwrap();
    assert_eq!(flow_distance(&f1, &f2).unwrap(), worst);
    assert!((worst - 0.3).abs() < 1e-3);
}
