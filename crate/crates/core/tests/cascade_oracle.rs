mod common;

use opa_core::cascade::{run_cascade, CascadeSettings};
use opa_core::dispatch::Dispatcher;
use opa_core::grid::{Grid, Line, Node};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator at node 0, a 6 MW load at node 1, and a detour through node 2.
/// The direct line carries two thirds of any transfer.
fn triangle() -> Grid {
    let nodes = vec![Node::generator(0, 0.0, 10.0), Node::load(1, 6.0), Node::load(2, 0.0)];
    let lines = vec![Line::new(0, 0, 1, 1.0, 3.5), Line::new(1, 0, 2, 1.0, 5.0), Line::new(2, 2, 1, 1.0, 10.0)];
    Grid::new(nodes, lines).unwrap()
}

#[test]
fn certain_trips_isolate_the_load() {
    let mut grid = triangle();
    let demand = grid.base_loads();
    let available = grid.gen_capacities();
    let settings = CascadeSettings { p1: 1.0, ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut dispatcher = Dispatcher::new();
    let out = run_cascade(&mut grid, &demand, Some(&available), &settings, &mut rng, &mut dispatcher).unwrap();

    assert_eq!(out.failed_lines.iter().copied().collect::<Vec<_>>(), vec![0, 1]);
    assert_eq!(out.redispatch_count, 3);
    assert!(out.overloaded_lines.contains(&0) && out.overloaded_lines.contains(&1));
    assert!((out.load_shed - 6.0).abs() < 1e-9, "{}", out.load_shed);
    assert!(out.is_blackout);

    let (_, oracle_shed) =
        common::oracle(&grid, &demand, &available, settings.generation_cost, settings.shed_penalty);
    assert!((oracle_shed - out.load_shed).abs() < 1e-6);
}

#[test]
fn first_dispatch_sheds_to_protect_the_direct_line() {
    let grid = triangle();
    let demand = grid.base_loads();
    let available = grid.gen_capacities();
    let settings = CascadeSettings { p1: 0.0, ..Default::default() };
    let mut g = grid.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut dispatcher = Dispatcher::new();
    let out = run_cascade(&mut g, &demand, Some(&available), &settings, &mut rng, &mut dispatcher).unwrap();
    assert!(out.failed_lines.is_empty());
    assert_eq!(out.overloaded_lines.iter().copied().collect::<Vec<_>>(), vec![0]);
    assert!((out.load_shed - 0.75).abs() < 1e-9);
    assert!((g.line(0).unwrap().flow.abs() - 3.5).abs() < 1e-9);

    let (_, oracle_shed) = common::oracle(&grid, &demand, &available, settings.generation_cost, settings.shed_penalty);
    assert!((oracle_shed - 0.75).abs() < 1e-6);
}
