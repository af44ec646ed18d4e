//! Generation dispatch and load shedding on the DC network.
//!
//! The dispatch minimises `c·Σ generation + W·Σ shed` subject to nodal
//! balance, DC line flows, generator limits and line limits, island by
//! island. With a uniform generation cost the objective equals
//! `c·D + (W - c)·shed`, so any dispatch that serves all demand within
//! every limit is optimal. The solver first tries the capacity-proportional
//! dispatch and only falls back to the linear program when that violates a
//! line limit or generation is short.
//!
//! The linear program is built in injection space using PTDF rows of the
//! island, adding line constraints lazily: only lines violated by the
//! current candidate enter the model, and the model is re-solved until the
//! candidate satisfies all limits. Among the equal-cost optima it prefers
//! the one closest (in L1) to the proportional dispatch, which keeps flows
//! continuous between the fast path and the constrained path.

mod network;
pub mod simplex;

use std::collections::HashMap;
use std::sync::Arc;

use thiserror::Error;

pub use network::Network;
use simplex::{BoundedLp, LpError};

use crate::grid::Grid;

/// Default uniform generation cost.
pub const DEFAULT_GENERATION_COST: f64 = 1.0;
/// Default load-shed penalty.
pub const DEFAULT_SHED_PENALTY: f64 = 100.0;

#[derive(Debug, Error)]
pub enum DispatchError {
    #[error("invalid dispatch problem: {0}")]
    InvalidProblem(String),
    #[error("solver failed on island {island}: {source}")]
    Solver { island: usize, source: LpError },
}

#[derive(Debug, Clone, Copy)]
pub struct DispatchProblem<'a> {
    pub grid: &'a Grid,
    /// Instantaneous demand per node (MW).
    pub demand: &'a [f64],
    /// Generation available per node at this instant; defaults to the
    /// installed capacity.
    pub available: Option<&'a [f64]>,
    pub generation_cost: f64,
    pub shed_penalty: f64,
}

impl<'a> DispatchProblem<'a> {
    pub fn new(grid: &'a Grid, demand: &'a [f64]) -> Self {
        DispatchProblem {
            grid,
            demand,
            available: None,
            generation_cost: DEFAULT_GENERATION_COST,
            shed_penalty: DEFAULT_SHED_PENALTY,
        }
    }

    pub fn with_available(mut self, available: &'a [f64]) -> Self {
        self.available = Some(available);
        self
    }

    pub fn with_costs(mut self, generation_cost: f64, shed_penalty: f64) -> Self {
        self.generation_cost = generation_cost;
        self.shed_penalty = shed_penalty;
        self
    }

    fn validate(&self) -> Result<(), DispatchError> {
        let n = self.grid.node_count();
        let bad = |m: String| Err(DispatchError::InvalidProblem(m));
        if self.demand.len() != n {
            return bad(format!("{} demand entries for {n} nodes", self.demand.len()));
        }
        if let Some(i) = self.demand.iter().position(|d| !(d.is_finite() && *d >= 0.0)) {
            return bad(format!("demand at node {i} is {}", self.demand[i]));
        }
        if let Some(av) = self.available {
            if av.len() != n {
                return bad(format!("{} availability entries for {n} nodes", av.len()));
            }
            for (i, (a, node)) in av.iter().zip(self.grid.nodes()).enumerate() {
                if !(a.is_finite() && *a >= 0.0 && *a <= node.gen_capacity * (1.0 + 1e-12)) {
                    return bad(format!("available generation {a} at node {i} outside [0, capacity]"));
                }
            }
        }
        if !(self.generation_cost >= 0.0 && self.shed_penalty > self.generation_cost) {
            return bad(format!(
                "need 0 <= generation cost ({}) < shed penalty ({})",
                self.generation_cost, self.shed_penalty
            ));
        }
        Ok(())
    }

    fn available_at(&self, node: usize) -> f64 {
        match self.available {
            Some(av) => av[node].min(self.grid.nodes()[node].gen_capacity),
            None => self.grid.nodes()[node].gen_capacity,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispatchResult {
    pub generation: Vec<f64>,
    pub shed: Vec<f64>,
    /// Signed flow per line, zero for Down lines.
    pub flows: Vec<f64>,
    /// Phase angle per node, zero at each island's reference bus.
    pub angles: Vec<f64>,
    pub objective: f64,
}

impl DispatchResult {
    pub fn total_shed(&self) -> f64 {
        total_shed(self)
    }

    pub fn total_generation(&self) -> f64 {
        self.generation.iter().sum()
    }
}

/// Total load shed L_S of a dispatch.
pub fn total_shed(result: &DispatchResult) -> f64 {
    result.shed.iter().sum()
}

/// Solves one dispatch problem without reusing any factorisation.
pub fn solve_dispatch(problem: &DispatchProblem) -> Result<DispatchResult, DispatchError> {
    Dispatcher::new().solve(problem)
}

/// Dispatch solver that caches network factorisations by topology.
///
/// The cache is keyed on the Up/Down pattern and checked against line
/// endpoints and impedances, so one dispatcher can serve a grid whose flow
/// limits and capacities evolve.
#[derive(Debug, Default)]
pub struct Dispatcher {
    structure: Vec<(usize, usize, u64)>,
    cache: HashMap<Vec<u64>, Arc<Network>>,
    lp_solves: u64,
}

const CACHE_CAPACITY: usize = 32;
/// Relative tolerance used when checking a candidate flow against its limit.
const LIMIT_TOL: f64 = 1e-9;

impl Dispatcher {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of linear programs solved so far (fast-path dispatches excluded).
    pub fn lp_solves(&self) -> u64 {
        self.lp_solves
    }

    /// Network data for the grid's current topology.
    pub fn network(&mut self, grid: &Grid) -> Arc<Network> {
        let same = self.structure.len() == grid.line_count()
            && self
                .structure
                .iter()
                .zip(grid.lines())
                .all(|(s, l)| *s == (l.from, l.to, l.impedance.to_bits()));
        if !same {
            self.structure = grid.lines().iter().map(|l| (l.from, l.to, l.impedance.to_bits())).collect();
            self.cache.clear();
        }
        let mut key = vec![0u64; grid.line_count().div_ceil(64) + 1];
        key[0] = grid.node_count() as u64;
        for line in grid.lines().iter().filter(|l| !l.is_up()) {
            key[1 + line.id / 64] |= 1 << (line.id % 64);
        }
        if let Some(net) = self.cache.get(&key) {
            return Arc::clone(net);
        }
        if self.cache.len() >= CACHE_CAPACITY {
            self.cache.clear();
        }
        let net = Arc::new(Network::build(grid));
        self.cache.insert(key, Arc::clone(&net));
        net
    }

    pub fn solve(&mut self, problem: &DispatchProblem) -> Result<DispatchResult, DispatchError> {
        problem.validate()?;
        let grid = problem.grid;
        let net = self.network(grid);
        let n = grid.node_count();
        let mut generation = vec![0.0; n];
        let mut shed = vec![0.0; n];
        let mut angles = vec![0.0; n];

        for (idx, island) in net.islands.iter().enumerate() {
            let demand: Vec<f64> = island.nodes.iter().map(|&i| problem.demand[i]).collect();
            let avail: Vec<f64> = island.nodes.iter().map(|&i| problem.available_at(i)).collect();
            let sol = self.solve_island(problem, &net, idx, &demand, &avail)?;
            for (pos, &node) in island.nodes.iter().enumerate() {
                generation[node] = sol.generation[pos];
                shed[node] = sol.shed[pos];
                angles[node] = sol.angles[pos];
            }
        }
        let flows = net.flows_from_angles(&angles);
        let objective = problem.generation_cost * generation.iter().sum::<f64>()
            + problem.shed_penalty * shed.iter().sum::<f64>();
        Ok(DispatchResult { generation, shed, flows, angles, objective })
    }

    fn solve_island(
        &mut self,
        problem: &DispatchProblem,
        net: &Network,
        idx: usize,
        demand: &[f64],
        avail: &[f64],
    ) -> Result<IslandDispatch, DispatchError> {
        let k = demand.len();
        let total_demand: f64 = demand.iter().sum();
        let total_avail: f64 = avail.iter().sum();
        let island = &net.islands[idx];
        if total_demand <= 0.0 {
            return Ok(IslandDispatch::idle(k));
        }
        if total_avail <= 0.0 {
            return Ok(IslandDispatch { generation: vec![0.0; k], shed: demand.to_vec(), angles: vec![0.0; k] });
        }

        let served_fraction = (total_demand / total_avail).min(1.0);
        let reference: Vec<f64> = avail.iter().map(|a| a * served_fraction).collect();
        let injection: Vec<f64> = reference.iter().zip(demand).map(|(g, d)| g - d).collect();
        let mut angles = vec![0.0; k];
        net.island_angles(idx, &injection, &mut angles);
        let violated = violated_lines(problem.grid, net, island, &angles);
        if violated.is_empty() && total_demand <= total_avail {
            return Ok(IslandDispatch { generation: reference, shed: vec![0.0; k], angles });
        }
        self.solve_island_lp(problem, net, idx, demand, avail, &reference, violated)
    }

    #[allow(clippy::too_many_arguments)]
    fn solve_island_lp(
        &mut self,
        problem: &DispatchProblem,
        net: &Network,
        idx: usize,
        demand: &[f64],
        avail: &[f64],
        reference: &[f64],
        mut active: Vec<usize>,
    ) -> Result<IslandDispatch, DispatchError> {
        let k = demand.len();
        let island = &net.islands[idx];
        let grid = problem.grid;
        let c = problem.generation_cost;
        let w = problem.shed_penalty;
        let eps = 1e-6 * (w - c);

        // Column layout: generation below/above the reference, served load,
        // then one flow variable per active line.
        let mut gen_cols: Vec<(usize, usize)> = Vec::new();
        let mut load_cols: Vec<(usize, usize)> = Vec::new();
        let mut base = BoundedLp::default();
        for pos in 0..k {
            if reference[pos] > 0.0 {
                let col = base.add_var(c - eps, 0.0, reference[pos]);
                gen_cols.push((pos, col));
            }
            let headroom = avail[pos] - reference[pos];
            if headroom > 0.0 {
                let col = base.add_var(c + eps, 0.0, headroom);
                gen_cols.push((pos, col));
            }
            if demand[pos] > 0.0 {
                load_cols.push((pos, base.add_var(-w, 0.0, demand[pos])));
            }
        }
        let mut balance = vec![0.0; base.costs.len()];
        for &(_, col) in &gen_cols {
            balance[col] = 1.0;
        }
        for &(_, col) in &load_cols {
            balance[col] = -1.0;
        }
        base.add_row(balance, 0.0);

        let rounds = island.lines.len() + 1;
        for _ in 0..rounds {
            let mut lp = base.clone();
            for &line in &active {
                let ptdf = net.ptdf_row(line);
                let limit = grid.lines()[line].flow_limit;
                let fcol = lp.add_var(0.0, -limit, limit);
                let mut row = vec![0.0; lp.costs.len()];
                for &(pos, col) in &gen_cols {
                    row[col] = ptdf[pos];
                }
                for &(pos, col) in &load_cols {
                    row[col] = -ptdf[pos];
                }
                row[fcol] = -1.0;
                lp.add_row(row, 0.0);
            }
            self.lp_solves += 1;
            let sol = lp.solve().map_err(|source| DispatchError::Solver { island: idx, source })?;

            let mut generation = vec![0.0; k];
            for &(pos, col) in &gen_cols {
                generation[pos] += sol.x[col];
            }
            let mut served = vec![0.0; k];
            for &(pos, col) in &load_cols {
                served[pos] = sol.x[col];
            }
            let mut shed = vec![0.0; k];
            for pos in 0..k {
                generation[pos] = generation[pos].clamp(0.0, avail[pos]);
                let s = (demand[pos] - served[pos]).clamp(0.0, demand[pos]);
                shed[pos] = if s <= 1e-10 * demand[pos].max(1.0) { 0.0 } else { s };
            }
            let injection: Vec<f64> = (0..k).map(|p| generation[p] - (demand[p] - shed[p])).collect();
            let mut angles = vec![0.0; k];
            net.island_angles(idx, &injection, &mut angles);
            let newly: Vec<usize> =
                violated_lines(problem.grid, net, island, &angles).into_iter().filter(|l| !active.contains(l)).collect();
            if newly.is_empty() {
                return Ok(IslandDispatch { generation, shed, angles });
            }
            active.extend(newly);
        }
        unreachable!("every round adds at least one island line")
    }
}

struct IslandDispatch {
    generation: Vec<f64>,
    shed: Vec<f64>,
    angles: Vec<f64>,
}

impl IslandDispatch {
    fn idle(k: usize) -> Self {
        IslandDispatch { generation: vec![0.0; k], shed: vec![0.0; k], angles: vec![0.0; k] }
    }
}

fn violated_lines(grid: &Grid, net: &Network, island: &network::Island, angles: &[f64]) -> Vec<usize> {
    island
        .lines
        .iter()
        .copied()
        .filter(|&l| {
            let br = net.branches[l].expect("island line is up");
            let flow = (angles[br.from] - angles[br.to]) * br.susceptance;
            let limit = grid.lines()[l].flow_limit;
            flow.abs() > limit * (1.0 + LIMIT_TOL)
        })
        .collect()
}
