mod common;

use common::{oracle, small_fixture};
use opa_core::dispatch::{solve_dispatch, DispatchProblem, Dispatcher};
use opa_core::grid::{generate_synthetic, Grid, Line, Node};
use proptest::prelude::*;

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn check_invariants(grid: &Grid, demand: &[f64], available: &[f64], r: &opa_core::dispatch::DispatchResult) {
    let total: f64 = demand.iter().sum();
    for i in 0..grid.node_count() {
        assert!(r.generation[i] >= 0.0 && r.generation[i] <= available[i] + 1e-9);
        assert!(r.shed[i] >= 0.0 && r.shed[i] <= demand[i] + 1e-12);
    }
    for (l, f) in grid.lines().iter().zip(&r.flows) {
        if l.is_up() {
            assert!(f.abs() <= l.flow_limit + 1e-6, "line {} flow {f} limit {}", l.id, l.flow_limit);
        } else {
            assert_eq!(*f, 0.0);
        }
    }
    let comps = grid.connected_components();
    for group in comps.groups() {
        let g: f64 = group.iter().map(|&i| r.generation[i]).sum();
        let served: f64 = group.iter().map(|&i| demand[i] - r.shed[i]).sum();
        assert!((g - served).abs() <= 1e-6 * total.max(1.0), "island balance {g} vs {served}");
    }
}

#[test]
fn matches_reference_lp_on_fixtures() {
    for seed in 0..60 {
        let fx = small_fixture(seed);
        let r = solve_dispatch(&DispatchProblem::new(&fx.grid, &fx.demand).with_available(&fx.available)).unwrap();
        let (obj, shed) = oracle(&fx.grid, &fx.demand, &fx.available, 1.0, 100.0);
        assert!(rel_close(r.objective, obj, 1e-6), "seed {seed}: objective {} vs oracle {obj}", r.objective);
        assert!(rel_close(r.total_shed(), shed, 1e-6), "seed {seed}: shed {} vs oracle {shed}", r.total_shed());
        check_invariants(&fx.grid, &fx.demand, &fx.available, &r);
    }
}

#[test]
fn line_limit_example_against_oracle() {
    let g = Grid::new(
        vec![Node::generator(0, 0.0, 10.0), Node::load(1, 5.0)],
        vec![Line::new(0, 0, 1, 1.0, 3.0)],
    )
    .unwrap();
    let demand = [0.0, 5.0];
    let (obj, shed) = oracle(&g, &demand, &[10.0, 0.0], 1.0, 100.0);
    assert!((shed - 2.0).abs() < 1e-9);
    let r = solve_dispatch(&DispatchProblem::new(&g, &demand)).unwrap();
    assert!((r.objective - obj).abs() < 1e-7);
    assert!((r.total_shed() - 2.0).abs() < 1e-9);
}

#[test]
fn matches_reference_lp_on_stressed_synthetic_grid() {
    let mut grid = generate_synthetic(30, 6, 45, 3).unwrap();
    for l in 0..grid.line_count() {
        let line = grid.line_mut(l).unwrap();
        line.flow_limit *= 0.6 + 0.02 * (l % 20) as f64;
    }
    let mut dispatcher = Dispatcher::new();
    for scale in [0.8, 1.0, 1.2, 1.4] {
        let demand: Vec<f64> = grid.nodes().iter().map(|n| n.base_load * scale).collect();
        let avail = grid.gen_capacities();
        let r = dispatcher.solve(&DispatchProblem::new(&grid, &demand)).unwrap();
        let (obj, shed) = oracle(&grid, &demand, &avail, 1.0, 100.0);
        assert!(rel_close(r.objective, obj, 1e-6), "scale {scale}: {} vs {obj}", r.objective);
        assert!((r.total_shed() - shed).abs() <= 1e-6 * demand.iter().sum::<f64>());
        check_invariants(&grid, &demand, &avail, &r);
    }
    assert!(dispatcher.lp_solves() > 0);
}

#[test]
fn resolving_is_idempotent() {
    let mut dispatcher = Dispatcher::new();
    for seed in 0..20 {
        let fx = small_fixture(seed);
        let p = DispatchProblem::new(&fx.grid, &fx.demand).with_available(&fx.available);
        let a = dispatcher.solve(&p).unwrap();
        let b = dispatcher.solve(&p).unwrap();
        let c = solve_dispatch(&p).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
    }
}

fn scaled(grid: &Grid, s: f64) -> Grid {
    let nodes = grid
        .nodes()
        .iter()
        .map(|n| Node { base_load: n.base_load * s, gen_capacity: n.gen_capacity * s, ..n.clone() })
        .collect();
    let lines = grid.lines().iter().map(|l| Line { flow_limit: l.flow_limit * s, ..l.clone() }).collect();
    Grid::new(nodes, lines).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scaling_covariance(seed in 0u64..500, s in 0.1f64..20.0) {
        let fx = small_fixture(seed);
        let base = solve_dispatch(&DispatchProblem::new(&fx.grid, &fx.demand).with_available(&fx.available)).unwrap();
        let g2 = scaled(&fx.grid, s);
        let d2: Vec<f64> = fx.demand.iter().map(|d| d * s).collect();
        let a2: Vec<f64> = fx.available.iter().map(|a| a * s).collect();
        let r2 = solve_dispatch(&DispatchProblem::new(&g2, &d2).with_available(&a2)).unwrap();
        let tol = 1e-7 * s.max(1.0) * (1.0 + fx.demand.iter().sum::<f64>());
        prop_assert!((r2.total_shed() - s * base.total_shed()).abs() <= tol);
        for (a, b) in r2.generation.iter().zip(&base.generation) {
            prop_assert!((a - s * b).abs() <= tol, "generation {} vs {}", a, s * b);
        }
        for (a, b) in r2.shed.iter().zip(&base.shed) {
            prop_assert!((a - s * b).abs() <= tol);
        }
        for (a, b) in r2.flows.iter().zip(&base.flows) {
            prop_assert!((a - s * b).abs() <= tol);
        }
    }

    #[test]
    fn tighter_limit_never_reduces_shed(seed in 0u64..500, line_pick in 0usize..6, factor in 0.0f64..1.0) {
        let fx = small_fixture(seed);
        prop_assume!(fx.grid.line_count() > 0);
        let l = line_pick % fx.grid.line_count();
        let before = solve_dispatch(&DispatchProblem::new(&fx.grid, &fx.demand).with_available(&fx.available)).unwrap();
        let mut tighter = fx.grid.clone();
        let line = tighter.line_mut(l).unwrap();
        line.flow_limit = (line.flow_limit * factor).max(1e-3);
        let after = solve_dispatch(&DispatchProblem::new(&tighter, &fx.demand).with_available(&fx.available)).unwrap();
        prop_assert!(after.total_shed() >= before.total_shed() - 1e-7);
    }

    #[test]
    fn oracle_equivalence_random(seed in 1000u64..100_000) {
        let fx = small_fixture(seed);
        let r = solve_dispatch(&DispatchProblem::new(&fx.grid, &fx.demand).with_available(&fx.available)).unwrap();
        let (obj, _) = oracle(&fx.grid, &fx.demand, &fx.available, 1.0, 100.0);
        prop_assert!(rel_close(r.objective, obj, 1e-6), "{} vs {}", r.objective, obj);
    }
}
