//! Network topology and electrical state.
//!
//! A [`Grid`] holds the buses ([`Node`]) and transmission lines ([`Line`]) of
//! the simulated system. Line status and flow are the only parts that change
//! during a cascade; flow limits and generator capacities change on the slow
//! (daily) timescale.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::seq::index;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dispatch::Network;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("node {id}: {reason}")]
    InvalidNode { id: usize, reason: String },
    #[error("line {id}: {reason}")]
    InvalidLine { id: usize, reason: String },
    #[error("infeasible grid parameters: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Load,
    GeneratorLoad,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: usize,
    pub kind: NodeKind,
    /// Reference demand (MW) at intraday profile value 1.
    pub base_load: f64,
    /// Installed generation capacity (MW); zero for load-only buses.
    pub gen_capacity: f64,
}

impl Node {
    pub fn load(id: usize, base_load: f64) -> Self {
        Node { id, kind: NodeKind::Load, base_load, gen_capacity: 0.0 }
    }

    pub fn generator(id: usize, base_load: f64, gen_capacity: f64) -> Self {
        Node { id, kind: NodeKind::GeneratorLoad, base_load, gen_capacity }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineStatus {
    Up,
    Down,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub id: usize,
    pub from: usize,
    pub to: usize,
    /// Series reactance (per unit).
    pub impedance: f64,
    /// Maximum flow F^max (MW).
    pub flow_limit: f64,
    pub status: LineStatus,
    /// Signed flow from `from` to `to` (MW) as of the last accepted dispatch.
    pub flow: f64,
}

impl Line {
    pub fn new(id: usize, from: usize, to: usize, impedance: f64, flow_limit: f64) -> Self {
        Line { id, from, to, impedance, flow_limit, status: LineStatus::Up, flow: 0.0 }
    }

    pub fn is_up(&self) -> bool {
        self.status == LineStatus::Up
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    nodes: Vec<Node>,
    lines: Vec<Line>,
}

/// Partition of the buses into islands connected by Up lines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Components {
    /// Component label of each node, labels are `0..count` in order of first
    /// appearance by node id.
    pub labels: Vec<usize>,
    pub count: usize,
}

impl Components {
    /// Node ids grouped by component, each group sorted ascending.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.count];
        for (node, &label) in self.labels.iter().enumerate() {
            groups[label].push(node);
        }
        groups
    }
}

impl Grid {
    /// Builds a grid, checking every node and line invariant.
    pub fn new(nodes: Vec<Node>, lines: Vec<Line>) -> Result<Self, GridError> {
        for (idx, node) in nodes.iter().enumerate() {
            if node.id != idx {
                return Err(GridError::InvalidNode {
                    id: node.id,
                    reason: format!("ids must be sequential, expected {idx}"),
                });
            }
            if !(node.base_load.is_finite() && node.base_load >= 0.0) {
                return Err(GridError::InvalidNode {
                    id: node.id,
                    reason: format!("base load must be finite and >= 0, got {}", node.base_load),
                });
            }
            if !(node.gen_capacity.is_finite() && node.gen_capacity >= 0.0) {
                return Err(GridError::InvalidNode {
                    id: node.id,
                    reason: format!("generation capacity must be finite and >= 0, got {}", node.gen_capacity),
                });
            }
            match node.kind {
                NodeKind::Load if node.gen_capacity != 0.0 => {
                    return Err(GridError::InvalidNode {
                        id: node.id,
                        reason: "load-only node with nonzero generation capacity".into(),
                    })
                }
                NodeKind::GeneratorLoad if node.gen_capacity == 0.0 => {
                    return Err(GridError::InvalidNode {
                        id: node.id,
                        reason: "generator node with zero capacity".into(),
                    })
                }
                _ => {}
            }
        }
        let n = nodes.len();
        for (idx, line) in lines.iter().enumerate() {
            let bad = |reason: String| GridError::InvalidLine { id: line.id, reason };
            if line.id != idx {
                return Err(bad(format!("ids must be sequential, expected {idx}")));
            }
            if line.from >= n {
                return Err(bad(format!("endpoint {} is not a node of this {n}-node grid", line.from)));
            }
            if line.to >= n {
                return Err(bad(format!("endpoint {} is not a node of this {n}-node grid", line.to)));
            }
            if line.from == line.to {
                return Err(bad(format!("both endpoints are node {}", line.from)));
            }
            if !(line.impedance.is_finite() && line.impedance > 0.0) {
                return Err(bad(format!("impedance must be positive, got {}", line.impedance)));
            }
            if !(line.flow_limit.is_finite() && line.flow_limit > 0.0) {
                return Err(bad(format!("flow limit must be positive, got {}", line.flow_limit)));
            }
        }
        Ok(Grid { nodes, lines })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn line_count(&self) -> usize {
        self.lines.len()
    }

    pub fn line(&self, id: usize) -> Option<&Line> {
        self.lines.get(id)
    }

    pub fn line_mut(&mut self, id: usize) -> Option<&mut Line> {
        self.lines.get_mut(id)
    }

    pub(crate) fn lines_mut(&mut self) -> &mut [Line] {
        &mut self.lines
    }

    pub(crate) fn nodes_mut(&mut self) -> &mut [Node] {
        &mut self.nodes
    }

    /// Total installed generation capacity P_G.
    pub fn total_gen_capacity(&self) -> f64 {
        self.nodes.iter().map(|n| n.gen_capacity).sum()
    }

    /// Total reference demand at profile value 1.
    pub fn total_base_load(&self) -> f64 {
        self.nodes.iter().map(|n| n.base_load).sum()
    }

    pub fn gen_capacities(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.gen_capacity).collect()
    }

    pub fn base_loads(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.base_load).collect()
    }

    /// Marks every line Up and clears flows.
    pub fn restore_all(&mut self) {
        for line in &mut self.lines {
            line.status = LineStatus::Up;
            line.flow = 0.0;
        }
    }

    /// Islands of the graph restricted to Up lines.
    pub fn connected_components(&self) -> Components {
        let mut dsu = DisjointSets::new(self.nodes.len());
        for line in self.lines.iter().filter(|l| l.is_up()) {
            dsu.union(line.from, line.to);
        }
        let mut labels = vec![usize::MAX; self.nodes.len()];
        let mut root_label = vec![usize::MAX; self.nodes.len()];
        let mut count = 0;
        for (node, label) in labels.iter_mut().enumerate() {
            let root = dsu.find(node);
            if root_label[root] == usize::MAX {
                root_label[root] = count;
                count += 1;
            }
            *label = root_label[root];
        }
        Components { labels, count }
    }

    /// Writes the grid in the line-oriented text format.
    pub fn save<W: Write>(&self, mut out: W) -> Result<(), GridError> {
        out.write_all(self.to_text().as_bytes())?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "nodes {} lines {}", self.nodes.len(), self.lines.len());
        for node in &self.nodes {
            let kind = match node.kind {
                NodeKind::Load => 'L',
                NodeKind::GeneratorLoad => 'G',
            };
            let _ = writeln!(s, "node {} {} {} {}", node.id, kind, node.base_load, node.gen_capacity);
        }
        for line in &self.lines {
            let _ = writeln!(
                s,
                "line {} {} {} {} {}",
                line.id, line.from, line.to, line.impedance, line.flow_limit
            );
        }
        s
    }

    /// Parses a grid from the text format. All lines come back Up with zero flow.
    pub fn load<R: BufRead>(source: R) -> Result<Self, GridError> {
        let mut header: Option<(usize, usize)> = None;
        let mut nodes = Vec::new();
        let mut lines = Vec::new();
        for (idx, raw) in source.lines().enumerate() {
            let lineno = idx + 1;
            let raw = raw?;
            let text = raw.trim();
            if text.is_empty() || text.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = text.split_whitespace().collect();
            let perr = |message: String| GridError::Parse { line: lineno, message };
            match (fields[0], header) {
                ("nodes", None) => {
                    if fields.len() != 4 || fields[2] != "lines" {
                        return Err(perr("expected header `nodes <n> lines <m>`".into()));
                    }
                    header = Some((
                        parse_field(fields[1], "node count", lineno)?,
                        parse_field(fields[3], "line count", lineno)?,
                    ));
                }
                (_, None) => return Err(perr("missing `nodes <n> lines <m>` header".into())),
                ("nodes", Some(_)) => return Err(perr("duplicate header".into())),
                ("node", Some(_)) => {
                    if fields.len() != 5 {
                        return Err(perr(format!("node row needs 5 fields, found {}", fields.len())));
                    }
                    let id = parse_field(fields[1], "node id", lineno)?;
                    let kind = match fields[2] {
                        "L" => NodeKind::Load,
                        "G" => NodeKind::GeneratorLoad,
                        other => return Err(perr(format!("node kind must be L or G, got `{other}`"))),
                    };
                    let base_load = parse_field(fields[3], "base_load", lineno)?;
                    let gen_capacity = parse_field(fields[4], "gen_capacity", lineno)?;
                    nodes.push(Node { id, kind, base_load, gen_capacity });
                }
                ("line", Some(_)) => {
                    if fields.len() != 6 {
                        return Err(perr(format!("line row needs 6 fields, found {}", fields.len())));
                    }
                    lines.push(Line::new(
                        parse_field(fields[1], "line id", lineno)?,
                        parse_field(fields[2], "from", lineno)?,
                        parse_field(fields[3], "to", lineno)?,
                        parse_field(fields[4], "impedance", lineno)?,
                        parse_field(fields[5], "flow_limit", lineno)?,
                    ));
                }
                (other, Some(_)) => return Err(perr(format!("unknown record `{other}`"))),
            }
        }
        let (n, m) = header.ok_or(GridError::Parse { line: 0, message: "empty grid file".into() })?;
        if nodes.len() != n || lines.len() != m {
            return Err(GridError::Parse {
                line: 0,
                message: format!(
                    "header declares {n} nodes and {m} lines, file has {} and {}",
                    nodes.len(),
                    lines.len()
                ),
            });
        }
        Grid::new(nodes, lines)
    }
}

fn parse_field<T: std::str::FromStr>(text: &str, what: &str, line: usize) -> Result<T, GridError> {
    text.parse().map_err(|_| GridError::Parse { line, message: format!("bad {what} `{text}`") })
}

struct DisjointSets {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        DisjointSets { parent: (0..n).collect(), rank: vec![0; n] }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// Mean bus demand (MW) of synthetic grids.
pub const SYNTHETIC_MEAN_LOAD: f64 = 10.0;
/// Generation margin C_M of a freshly generated grid at base load.
pub const SYNTHETIC_INITIAL_MARGIN: f64 = 0.4;
/// Ratio of initial flow limit to the base-load flow.
pub const SYNTHETIC_LIMIT_FACTOR: f64 = 1.25;
/// Flow floor, as a fraction of the mean absolute base-load flow, used when
/// sizing limits of lightly loaded lines.
pub const SYNTHETIC_FLOW_FLOOR: f64 = 0.1;

/// Random connected grid: a random spanning tree plus uniformly chosen extra
/// edges, with loads, capacities and impedances drawn uniformly.
///
/// Flow limits are sized at `SYNTHETIC_LIMIT_FACTOR` times the flow of the
/// proportional dispatch at base load.
pub fn generate_synthetic(n: usize, n_gl: usize, m: usize, seed: u64) -> Result<Grid, GridError> {
    if n < 2 {
        return Err(GridError::Infeasible(format!("need at least 2 nodes, got {n}")));
    }
    if n_gl < 1 || n_gl > n {
        return Err(GridError::Infeasible(format!("generator count {n_gl} must lie in 1..={n}")));
    }
    if m < n - 1 {
        return Err(GridError::Infeasible(format!("{m} lines cannot connect {n} nodes")));
    }
    let max_edges = n * (n - 1) / 2;
    if m > max_edges {
        return Err(GridError::Infeasible(format!("{m} lines exceed the {max_edges} distinct node pairs")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Random recursive tree over a shuffled node order.
    let order = index::sample(&mut rng, n, n).into_vec();
    let mut edges: Vec<(usize, usize)> = Vec::with_capacity(m);
    let mut present: HashSet<(usize, usize)> = HashSet::with_capacity(m);
    for i in 1..n {
        let parent = order[rng.gen_range(0..i)];
        let e = ordered(order[i], parent);
        edges.push(e);
        present.insert(e);
    }
    let extra = m - (n - 1);
    if extra > 0 {
        let candidates: Vec<(usize, usize)> = (0..n)
            .flat_map(|a| ((a + 1)..n).map(move |b| (a, b)))
            .filter(|e| !present.contains(e))
            .collect();
        let mut picked = index::sample(&mut rng, candidates.len(), extra).into_vec();
        picked.sort_unstable();
        edges.extend(picked.into_iter().map(|k| candidates[k]));
    }

    let mut is_gen = vec![false; n];
    for k in index::sample(&mut rng, n, n_gl).into_iter() {
        is_gen[k] = true;
    }
    let base: Vec<f64> = (0..n).map(|_| SYNTHETIC_MEAN_LOAD * rng.gen_range(0.5..1.5)).collect();
    let weights: Vec<f64> = (0..n).map(|i| if is_gen[i] { rng.gen_range(0.5..1.5) } else { 0.0 }).collect();
    let total_load: f64 = base.iter().sum();
    let total_weight: f64 = weights.iter().sum();
    let target = (1.0 + SYNTHETIC_INITIAL_MARGIN) * total_load;
    let nodes: Vec<Node> = (0..n)
        .map(|i| {
            if is_gen[i] {
                Node::generator(i, base[i], weights[i] / total_weight * target)
            } else {
                Node::load(i, base[i])
            }
        })
        .collect();
    let lines: Vec<Line> = edges
        .iter()
        .enumerate()
        .map(|(id, &(a, b))| Line::new(id, a, b, rng.gen_range(0.5..1.5), 1.0))
        .collect();
    let mut grid = Grid::new(nodes, lines)?;

    // Size limits from the proportional dispatch at base load.
    let caps = grid.gen_capacities();
    let total_cap: f64 = caps.iter().sum();
    let injection: Vec<f64> = (0..n).map(|i| caps[i] / total_cap * total_load - base[i]).collect();
    let network = Network::build(&grid);
    let flows = network.flows(&injection);
    let mean_abs = flows.iter().map(|f| f.abs()).sum::<f64>() / flows.len() as f64;
    let floor = SYNTHETIC_FLOW_FLOOR * mean_abs;
    for (line, flow) in grid.lines.iter_mut().zip(&flows) {
        line.flow_limit = SYNTHETIC_LIMIT_FACTOR * flow.abs().max(floor);
    }
    Ok(grid)
}

fn ordered(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> Grid {
        Grid::new(
            vec![Node::generator(0, 1.0, 5.0), Node::load(1, 1.0), Node::load(2, 1.0)],
            vec![Line::new(0, 0, 1, 1.0, 10.0), Line::new(1, 1, 2, 1.0, 10.0)],
        )
        .unwrap()
    }

    #[test]
    fn single_node_no_lines() {
        let g = Grid::load("nodes 1 lines 0\nnode 0 G 1.5 3\n".as_bytes()).unwrap();
        assert_eq!(g.node_count(), 1);
        assert_eq!(g.line_count(), 0);
        assert_eq!(g.connected_components().count, 1);
    }

    #[test]
    fn bad_endpoint_names_line() {
        let mut text = String::from("nodes 10 lines 1\n");
        for i in 0..10 {
            text.push_str(&format!("node {i} L 1 0\n"));
        }
        text.push_str("line 0 3 999 1 1\n");
        let err = Grid::load(text.as_bytes()).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, GridError::InvalidLine { id: 0, .. }));
        assert!(msg.contains("999"), "{msg}");
    }

    #[test]
    fn nonpositive_impedance_rejected() {
        let text = "nodes 2 lines 1\nnode 0 G 1 2\nnode 1 L 1 0\nline 0 0 1 0 5\n";
        assert!(matches!(Grid::load(text.as_bytes()), Err(GridError::InvalidLine { id: 0, .. })));
    }

    #[test]
    fn parse_error_has_line_number() {
        let text = "# comment\nnodes 2 lines 0\nnode 0 G x 2\nnode 1 L 1 0\n";
        match Grid::load(text.as_bytes()) {
            Err(GridError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn count_mismatch_is_error() {
        let text = "nodes 3 lines 0\nnode 0 G 1 2\nnode 1 L 1 0\n";
        assert!(matches!(Grid::load(text.as_bytes()), Err(GridError::Parse { .. })));
    }

    #[test]
    fn generator_kind_consistency() {
        assert!(Grid::new(vec![Node { id: 0, kind: NodeKind::Load, base_load: 1.0, gen_capacity: 2.0 }], vec![]).is_err());
        assert!(Grid::new(vec![Node::generator(0, 1.0, 0.0)], vec![]).is_err());
    }

    #[test]
    fn components_follow_up_lines() {
        let mut g = path3();
        assert_eq!(g.connected_components().count, 1);
        g.line_mut(1).unwrap().status = LineStatus::Down;
        let c = g.connected_components();
        assert_eq!(c.groups(), vec![vec![0, 1], vec![2]]);
    }

    #[test]
    fn no_lines_gives_singletons() {
        let nodes = (0..4).map(|i| Node::load(i, 1.0)).collect();
        let g = Grid::new(nodes, vec![]).unwrap();
        assert_eq!(g.connected_components().count, 4);
    }

    #[test]
    fn synthetic_minimal() {
        let g = generate_synthetic(2, 1, 1, 7).unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.line_count(), 1);
        assert_eq!(g.nodes().iter().filter(|n| n.kind == NodeKind::GeneratorLoad).count(), 1);
        let l = &g.lines()[0];
        assert_eq!((l.from.min(l.to), l.from.max(l.to)), (0, 1));
    }

    #[test]
    fn synthetic_full_scale() {
        let g = generate_synthetic(400, 60, 617, 1).unwrap();
        assert_eq!(g.node_count(), 400);
        assert_eq!(g.line_count(), 617);
        assert_eq!(g.nodes().iter().filter(|n| n.kind == NodeKind::GeneratorLoad).count(), 60);
        assert_eq!(g.connected_components().count, 1);
        let margin = (g.total_gen_capacity() - g.total_base_load()) / g.total_base_load();
        assert!((margin - SYNTHETIC_INITIAL_MARGIN).abs() < 1e-9);
        let mut pairs: Vec<_> = g.lines().iter().map(|l| ordered(l.from, l.to)).collect();
        pairs.sort_unstable();
        pairs.dedup();
        assert_eq!(pairs.len(), 617);
    }

    #[test]
    fn synthetic_is_deterministic() {
        let a = generate_synthetic(50, 8, 80, 11).unwrap().to_text();
        let b = generate_synthetic(50, 8, 80, 11).unwrap().to_text();
        assert_eq!(a, b);
        assert_ne!(a, generate_synthetic(50, 8, 80, 12).unwrap().to_text());
    }

    #[test]
    fn synthetic_rejects_too_few_lines() {
        assert!(matches!(generate_synthetic(10, 2, 8, 0), Err(GridError::Infeasible(_))));
        assert!(matches!(generate_synthetic(4, 1, 7, 0), Err(GridError::Infeasible(_))));
    }
}
