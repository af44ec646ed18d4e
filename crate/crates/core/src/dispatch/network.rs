//! DC power-flow sensitivities for one topology.

use nalgebra::DMatrix;

use crate::grid::Grid;

/// A connected island of the Up-line graph with its reduced reactance matrix.
#[derive(Debug, Clone)]
pub(crate) struct Island {
    /// Global node ids; position 0 is the angle reference.
    pub nodes: Vec<usize>,
    /// Global ids of the Up lines inside the island.
    pub lines: Vec<usize>,
    /// `k x k` inverse susceptance matrix, zero in the reference row and
    /// column, stored row-major. Angles are `x * injection`.
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Branch {
    pub island: usize,
    pub from: usize,
    pub to: usize,
    pub susceptance: f64,
}

/// Islands, angle sensitivities and per-line branch data for the Up lines
/// of a grid.
#[derive(Debug, Clone)]
pub struct Network {
    pub(crate) islands: Vec<Island>,
    /// Branch data for Up lines; `None` for Down lines.
    pub(crate) branches: Vec<Option<Branch>>,
}

impl Network {
    pub fn build(grid: &Grid) -> Self {
        let comps = grid.connected_components();
        let n = grid.node_count();
        let mut islands: Vec<Island> = comps
            .groups()
            .into_iter()
            .map(|nodes| Island { nodes, lines: Vec::new(), x: Vec::new() })
            .collect();
        let mut node_pos = vec![0; n];
        for island in &islands {
            for (pos, &node) in island.nodes.iter().enumerate() {
                node_pos[node] = pos;
            }
        }
        let mut branches = vec![None; grid.line_count()];
        for line in grid.lines().iter().filter(|l| l.is_up()) {
            let island = comps.labels[line.from];
            islands[island].lines.push(line.id);
            branches[line.id] = Some(Branch {
                island,
                from: node_pos[line.from],
                to: node_pos[line.to],
                susceptance: 1.0 / line.impedance,
            });
        }
        for (idx, island) in islands.iter_mut().enumerate() {
            let k = island.nodes.len();
            island.x = vec![0.0; k * k];
            if k < 2 {
                continue;
            }
            let mut b = DMatrix::<f64>::zeros(k - 1, k - 1);
            for &l in &island.lines {
                let br = branches[l].expect("up line has branch data");
                debug_assert_eq!(br.island, idx);
                let (f, t, s) = (br.from, br.to, br.susceptance);
                if f > 0 {
                    b[(f - 1, f - 1)] += s;
                }
                if t > 0 {
                    b[(t - 1, t - 1)] += s;
                }
                if f > 0 && t > 0 {
                    b[(f - 1, t - 1)] -= s;
                    b[(t - 1, f - 1)] -= s;
                }
            }
            // A connected island with positive susceptances gives an SPD
            // reduced matrix.
            let inv = b
                .cholesky()
                .expect("reduced susceptance matrix of a connected island is positive definite")
                .inverse();
            for r in 1..k {
                for c in 1..k {
                    island.x[r * k + c] = inv[(r - 1, c - 1)];
                }
            }
        }
        Network { islands, branches }
    }

    pub fn island_count(&self) -> usize {
        self.islands.len()
    }

    /// Angles of one island for a local injection vector.
    pub(crate) fn island_angles(&self, island: usize, injection: &[f64], out: &mut [f64]) {
        let isl = &self.islands[island];
        let k = isl.nodes.len();
        for (r, o) in out.iter_mut().enumerate().take(k) {
            let row = &isl.x[r * k..(r + 1) * k];
            *o = row.iter().zip(injection).map(|(a, b)| a * b).sum();
        }
    }

    /// Flow sensitivity of `line` to injections at each island position.
    pub(crate) fn ptdf_row(&self, line: usize) -> Vec<f64> {
        let br = self.branches[line].expect("ptdf row requested for a down line");
        let isl = &self.islands[br.island];
        let k = isl.nodes.len();
        (0..k)
            .map(|c| (isl.x[br.from * k + c] - isl.x[br.to * k + c]) * br.susceptance)
            .collect()
    }

    /// Global angles for a global injection vector (each island balanced by
    /// its reference bus).
    pub fn angles(&self, injection: &[f64]) -> Vec<f64> {
        let mut angles = vec![0.0; injection.len()];
        let mut local = Vec::new();
        let mut theta = Vec::new();
        for (i, isl) in self.islands.iter().enumerate() {
            local.clear();
            local.extend(isl.nodes.iter().map(|&n| injection[n]));
            theta.resize(isl.nodes.len(), 0.0);
            self.island_angles(i, &local, &mut theta);
            for (&n, &t) in isl.nodes.iter().zip(&theta) {
                angles[n] = t;
            }
        }
        angles
    }

    /// Line flows (zero for Down lines) for a global injection vector.
    pub fn flows(&self, injection: &[f64]) -> Vec<f64> {
        let angles = self.angles(injection);
        self.flows_from_angles(&angles)
    }

    pub(crate) fn flows_from_angles(&self, angles: &[f64]) -> Vec<f64> {
        self.branches
            .iter()
            .map(|br| match br {
                Some(br) => {
                    let isl = &self.islands[br.island];
                    (angles[isl.nodes[br.from]] - angles[isl.nodes[br.to]]) * br.susceptance
                }
                None => 0.0,
            })
            .collect()
    }
}
