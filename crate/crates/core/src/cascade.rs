//! Fast dynamics: initiating outages and the overload/redispatch loop.

use std::collections::BTreeSet;

use rand::Rng;

use crate::dispatch::{DispatchError, DispatchProblem, DispatchResult, Dispatcher};
use crate::grid::{Grid, LineStatus};

/// A cascade is a blackout when `L_S / P_D` exceeds this ratio.
pub const BLACKOUT_THRESHOLD: f64 = 1e-5;
/// Relative tolerance of the overload test `|F| >= F_max (1 - tol)`.
pub const OVERLOAD_TOL: f64 = 1e-6;

/// Strict comparison against [`BLACKOUT_THRESHOLD`].
pub fn is_blackout(load_shed: f64, total_demand: f64) -> bool {
    total_demand > 0.0 && load_shed / total_demand > BLACKOUT_THRESHOLD
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeOutcome {
    pub load_shed: f64,
    pub total_demand: f64,
    pub is_blackout: bool,
    /// Lines outaged by overload trials during the cascade.
    pub failed_lines: BTreeSet<usize>,
    /// Lines at their limit after any dispatch of the cascade.
    pub overloaded_lines: BTreeSet<usize>,
    pub redispatch_count: usize,
    /// `|F| / F_max` per line from the final dispatch, zero for Down lines.
    pub fractional_overloads: Vec<f64>,
}

impl CascadeOutcome {
    /// Mean of the fractional overloads over all `N` lines.
    pub fn mean_fractional_overload(&self) -> f64 {
        if self.fractional_overloads.is_empty() {
            return 0.0;
        }
        self.fractional_overloads.iter().sum::<f64>() / self.fractional_overloads.len() as f64
    }
}

/// Dispatch inputs that stay fixed during one cascade.
#[derive(Debug, Clone, Copy)]
pub struct CascadeSettings {
    pub p1: f64,
    pub generation_cost: f64,
    pub shed_penalty: f64,
}

impl Default for CascadeSettings {
    fn default() -> Self {
        CascadeSettings {
            p1: 0.01,
            generation_cost: crate::dispatch::DEFAULT_GENERATION_COST,
            shed_penalty: crate::dispatch::DEFAULT_SHED_PENALTY,
        }
    }
}

/// Trials every Up line once with probability `p` and marks failures Down.
pub fn apply_initiating_outages<R: Rng + ?Sized>(grid: &mut Grid, p: f64, rng: &mut R) -> BTreeSet<usize> {
    let mut failed = BTreeSet::new();
    for line in grid.lines_mut().iter_mut().filter(|l| l.is_up()) {
        if rng.gen::<f64>() < p {
            line.status = LineStatus::Down;
            line.flow = 0.0;
            failed.insert(line.id);
        }
    }
    failed
}

fn is_overloaded(flow: f64, limit: f64) -> bool {
    flow.abs() >= limit * (1.0 - OVERLOAD_TOL)
}

/// Dispatches, fails overloaded lines with probability `p1` and redispatches
/// until no line fails. Final flows are written back into `grid`.
pub fn run_cascade<R: Rng + ?Sized>(
    grid: &mut Grid,
    demand: &[f64],
    available: Option<&[f64]>,
    settings: &CascadeSettings,
    rng: &mut R,
    dispatcher: &mut Dispatcher,
) -> Result<CascadeOutcome, DispatchError> {
    let total_demand: f64 = demand.iter().sum();
    let mut failed_lines = BTreeSet::new();
    let mut overloaded_lines = BTreeSet::new();
    let mut redispatch_count = 0;
    let result: DispatchResult = loop {
        let mut problem = DispatchProblem::new(grid, demand).with_costs(settings.generation_cost, settings.shed_penalty);
        if let Some(av) = available {
            problem = problem.with_available(av);
        }
        let result = dispatcher.solve(&problem)?;
        redispatch_count += 1;

        let mut newly_failed = Vec::new();
        for line in grid.lines().iter().filter(|l| l.is_up()) {
            if is_overloaded(result.flows[line.id], line.flow_limit) {
                overloaded_lines.insert(line.id);
                if rng.gen::<f64>() < settings.p1 {
                    newly_failed.push(line.id);
                }
            }
        }
        if newly_failed.is_empty() {
            break result;
        }
        for id in newly_failed {
            let line = grid.line_mut(id).expect("line id from grid");
            line.status = LineStatus::Down;
            failed_lines.insert(id);
        }
    };

    let mut fractional_overloads = vec![0.0; grid.line_count()];
    for line in grid.lines_mut() {
        line.flow = if line.is_up() { result.flows[line.id] } else { 0.0 };
        if line.is_up() {
            fractional_overloads[line.id] = line.flow.abs() / line.flow_limit;
        }
    }
    let load_shed = result.total_shed();
    Ok(CascadeOutcome {
        load_shed,
        total_demand,
        is_blackout: is_blackout(load_shed, total_demand),
        failed_lines,
        overloaded_lines,
        redispatch_count,
        fractional_overloads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Line, Node};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ring(n: usize) -> Grid {
        let mut nodes = vec![Node::generator(0, 0.0, 100.0)];
        nodes.extend((1..n).map(|i| Node::load(i, 1.0)));
        let lines = (0..n).map(|i| Line::new(i, i, (i + 1) % n, 1.0, 50.0)).collect();
        Grid::new(nodes, lines).unwrap()
    }

    #[test]
    fn threshold_is_strict() {
        assert!(!is_blackout(1e-5, 1.0));
        assert!(is_blackout(1e-5 + 1e-12, 1.0));
        assert!(is_blackout(2e-5, 1.0));
        assert!(!is_blackout(0.0, 100.0));
        assert!(!is_blackout(0.0, 0.0));
    }

    #[test]
    fn initiating_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut g = ring(6);
        assert!(apply_initiating_outages(&mut g, 0.0, &mut rng).is_empty());
        assert!(g.lines().iter().all(|l| l.is_up()));
        let all = apply_initiating_outages(&mut g, 1.0, &mut rng);
        assert_eq!(all.len(), 6);
        assert!(g.lines().iter().all(|l| !l.is_up()));
        // Down lines are not trialed again.
        assert!(apply_initiating_outages(&mut g, 1.0, &mut rng).is_empty());
    }

    #[test]
    fn initiating_rate() {
        let expected_per_day = 617.0 * 1.44e-6;
        assert!((expected_per_day - 8.885e-4_f64).abs() < 1e-6);
        // Monte Carlo at an inflated rate to keep the test short.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = 0.01;
        let mut count = 0;
        let reps = 500;
        for _ in 0..reps {
            let mut g = ring(40);
            count += apply_initiating_outages(&mut g, p, &mut rng).len();
        }
        let mean = (reps * 40) as f64 * p;
        assert!((count as f64 - mean).abs() < 4.0 * mean.sqrt(), "{count}");
    }

    #[test]
    fn quiet_grid_single_dispatch() {
        let mut g = ring(5);
        let demand: Vec<f64> = g.base_loads();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut d = Dispatcher::new();
        let out = run_cascade(&mut g, &demand, None, &CascadeSettings::default(), &mut rng, &mut d).unwrap();
        assert_eq!(out.load_shed, 0.0);
        assert!(!out.is_blackout);
        assert_eq!(out.redispatch_count, 1);
        assert!(out.failed_lines.is_empty() && out.overloaded_lines.is_empty());
        assert!(out.fractional_overloads.iter().all(|m| (0.0..1.0).contains(m)));
        assert_eq!(d.lp_solves(), 0);
    }

    #[test]
    fn zero_p1_never_fails_lines() {
        let mut g = ring(5);
        for l in 0..5 {
            g.line_mut(l).unwrap().flow_limit = 0.6;
        }
        let demand = g.base_loads();
        let before = g.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut d = Dispatcher::new();
        let settings = CascadeSettings { p1: 0.0, ..Default::default() };
        let out = run_cascade(&mut g, &demand, None, &settings, &mut rng, &mut d).unwrap();
        let single = crate::dispatch::solve_dispatch(&DispatchProblem::new(&before, &demand)).unwrap();
        assert!(out.failed_lines.is_empty());
        assert!(!out.overloaded_lines.is_empty());
        assert_eq!(out.load_shed, single.total_shed());
        assert!(g.lines().iter().all(|l| l.is_up() && l.flow.abs() <= l.flow_limit * (1.0 + 1e-6)));
    }

    #[test]
    fn deterministic_under_seed() {
        let run = || {
            let mut g = crate::grid::generate_synthetic(30, 6, 45, 5).unwrap();
            let demand: Vec<f64> = g.base_loads().iter().map(|d| d * 1.3).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            let mut d = Dispatcher::new();
            let settings = CascadeSettings { p1: 0.5, ..Default::default() };
            let init = apply_initiating_outages(&mut g, 0.1, &mut rng);
            let out = run_cascade(&mut g, &demand, None, &settings, &mut rng, &mut d).unwrap();
            (init, out, g)
        };
        let (ia, a, ga) = run();
        let (ib, b, gb) = run();
        assert_eq!(ia, ib);
        assert_eq!(a, b);
        assert_eq!(ga, gb);
        for &l in &a.failed_lines {
            assert!(!ga.line(l).unwrap().is_up());
            assert!(!ia.contains(&l));
        }
    }
}
