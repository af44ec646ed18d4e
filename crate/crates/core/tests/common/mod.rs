//! Shared test support: small fixture grids and an independent LP oracle
//! for the dispatch problem in angle form.

#![allow(dead_code)]

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use opa_core::grid::{Grid, Line, LineStatus, Node};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Fixture {
    pub grid: Grid,
    pub demand: Vec<f64>,
    pub available: Vec<f64>,
}

/// Random grid with 2..=5 nodes and up to 6 lines; some lines are Down and
/// some buses may be islanded.
pub fn small_fixture(seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=5);
    let m = rng.gen_range(0..=6);
    let nodes: Vec<Node> = (0..n)
        .map(|i| {
            let load = if rng.gen_bool(0.8) { rng.gen_range(0.5..6.0) } else { 0.0 };
            if rng.gen_bool(0.45) {
                Node::generator(i, load, rng.gen_range(1.0..12.0))
            } else {
                Node::load(i, load)
            }
        })
        .collect();
    let lines: Vec<Line> = (0..m)
        .map(|id| {
            let a = rng.gen_range(0..n);
            let mut b = rng.gen_range(0..n - 1);
            if b >= a {
                b += 1;
            }
            let mut l = Line::new(id, a, b, rng.gen_range(0.2..2.0), rng.gen_range(0.5..8.0));
            if rng.gen_bool(0.15) {
                l.status = LineStatus::Down;
            }
            l
        })
        .collect();
    let grid = Grid::new(nodes, lines).unwrap();
    let demand = grid.nodes().iter().map(|nd| nd.base_load * rng.gen_range(0.5..1.5)).collect();
    let available = grid
        .nodes()
        .iter()
        .map(|nd| if rng.gen_bool(0.7) { nd.gen_capacity } else { nd.gen_capacity * rng.gen_range(0.0..1.0) })
        .collect();
    Fixture { grid, demand, available }
}

/// Optimal (objective, total shed) from an angle-based formulation solved
/// by an external LP solver.
pub fn oracle(grid: &Grid, demand: &[f64], available: &[f64], cost: f64, penalty: f64) -> (f64, f64) {
    let mut p = Problem::new(OptimizationDirection::Minimize);
    let n = grid.node_count();
    let theta: Vec<_> = (0..n).map(|_| p.add_var(0.0, (f64::NEG_INFINITY, f64::INFINITY))).collect();
    let gen: Vec<_> = (0..n).map(|i| p.add_var(cost, (0.0, available[i]))).collect();
    let shed: Vec<_> = (0..n).map(|i| p.add_var(penalty, (0.0, demand[i]))).collect();
    let mut balance: Vec<Vec<(minilp::Variable, f64)>> =
        (0..n).map(|i| vec![(gen[i], 1.0), (shed[i], 1.0)]).collect();
    for line in grid.lines().iter().filter(|l| l.is_up()) {
        let f = p.add_var(0.0, (-line.flow_limit, line.flow_limit));
        let s = 1.0 / line.impedance;
        p.add_constraint([(f, 1.0), (theta[line.from], -s), (theta[line.to], s)], ComparisonOp::Eq, 0.0);
        balance[line.from].push((f, -1.0));
        balance[line.to].push((f, 1.0));
    }
    for (i, row) in balance.iter().enumerate() {
        p.add_constraint(row.as_slice(), ComparisonOp::Eq, demand[i]);
    }
    let sol = p.solve().expect("oracle LP solves");
    let total_shed: f64 = shed.iter().map(|&v| sol[v]).sum();
    (sol.objective(), total_shed)
}
