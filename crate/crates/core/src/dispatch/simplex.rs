//! Dense bounded-variable primal simplex.
//!
//! Solves `min c·x  s.t.  A x = b,  l <= x <= u` with finite bounds. Phase 1
//! starts every structural variable at its lower bound and drives one
//! artificial per row to zero; phase 2 keeps any artificial still in the
//! basis pinned to `[0, 0]`. Nonbasic variables sit at a bound, so an entering
//! variable either pivots or simply flips to its opposite bound.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LpError {
    #[error("problem is infeasible (residual {0:e})")]
    Infeasible(f64),
    #[error("objective is unbounded below")]
    Unbounded,
    #[error("iteration limit {0} reached")]
    IterationLimit(usize),
    #[error("malformed problem: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Default)]
pub struct BoundedLp {
    pub costs: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Dense constraint rows, each `costs.len()` wide.
    pub rows: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Basic,
    AtLower,
    AtUpper,
}

const PIVOT_TOL: f64 = 1e-9;
const BLAND_AFTER: usize = 40;

impl BoundedLp {
    pub fn new(n: usize) -> Self {
        BoundedLp {
            costs: vec![0.0; n],
            lower: vec![0.0; n],
            upper: vec![0.0; n],
            rows: Vec::new(),
            rhs: Vec::new(),
        }
    }

    /// Adds a variable and returns its column index.
    pub fn add_var(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        self.costs.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        for row in &mut self.rows {
            row.push(0.0);
        }
        self.costs.len() - 1
    }

    pub fn add_row(&mut self, coefficients: Vec<f64>, rhs: f64) {
        self.rows.push(coefficients);
        self.rhs.push(rhs);
    }

    fn validate(&self) -> Result<(), LpError> {
        let n = self.costs.len();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(LpError::Malformed("bound vectors do not match cost vector".into()));
        }
        if self.rows.len() != self.rhs.len() {
            return Err(LpError::Malformed("row count does not match rhs".into()));
        }
        if let Some(r) = self.rows.iter().position(|r| r.len() != n) {
            return Err(LpError::Malformed(format!("row {r} has wrong width")));
        }
        for j in 0..n {
            let (l, u) = (self.lower[j], self.upper[j]);
            if !l.is_finite() || !u.is_finite() || l > u {
                return Err(LpError::Malformed(format!("variable {j} has bounds [{l}, {u}]")));
            }
        }
        Ok(())
    }

    pub fn solve(&self) -> Result<LpSolution, LpError> {
        self.validate()?;
        Tableau::new(self).run()
    }
}

struct Tableau {
    m: usize,
    n: usize,
    width: usize,
    t: Vec<f64>,
    x: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    state: Vec<State>,
    basis: Vec<usize>,
    d: Vec<f64>,
    costs: Vec<f64>,
    phase2: Vec<f64>,
    iterations: usize,
    limit: usize,
}

impl Tableau {
    fn new(lp: &BoundedLp) -> Self {
        let m = lp.rows.len();
        let n = lp.costs.len();
        let width = n + m;
        let mut t = vec![0.0; m * width];
        let mut x = vec![0.0; width];
        let mut lower = lp.lower.clone();
        let mut upper = lp.upper.clone();
        lower.extend(std::iter::repeat_n(0.0, m));
        upper.extend(std::iter::repeat_n(f64::INFINITY, m));
        x[..n].copy_from_slice(&lp.lower);
        let mut state = vec![State::AtLower; width];
        let mut basis = Vec::with_capacity(m);
        for (i, row) in lp.rows.iter().enumerate() {
            let residual = lp.rhs[i] - row.iter().zip(&lp.lower).map(|(a, l)| a * l).sum::<f64>();
            let sign = if residual < 0.0 { -1.0 } else { 1.0 };
            let dst = &mut t[i * width..(i + 1) * width];
            for (d, a) in dst[..n].iter_mut().zip(row) {
                *d = sign * a;
            }
            dst[n + i] = 1.0;
            x[n + i] = residual.abs();
            state[n + i] = State::Basic;
            basis.push(n + i);
        }
        let limit = 200 * (width + 10);
        Tableau {
            m,
            n,
            width,
            t,
            x,
            lower,
            upper,
            state,
            basis,
            d: vec![0.0; width],
            costs: vec![0.0; width],
            phase2: lp.costs.iter().copied().chain(std::iter::repeat_n(0.0, m)).collect(),
            iterations: 0,
            limit,
        }
    }

    fn run(mut self) -> Result<LpSolution, LpError> {
        let (m, n) = (self.m, self.n);
        // Phase 1: minimise the artificial sum.
        let mut phase1 = vec![0.0; self.width];
        phase1[n..].iter_mut().for_each(|c| *c = 1.0);
        let scale = 1.0 + self.x[n..].iter().fold(0.0_f64, |a, &v| a.max(v));
        if self.x[n..].iter().any(|&v| v > 0.0) {
            self.set_costs(phase1);
            self.iterate()?;
        }
        let infeasibility: f64 = self.x[n..].iter().sum();
        if infeasibility > 1e-9 * scale {
            return Err(LpError::Infeasible(infeasibility));
        }
        for a in n..n + m {
            self.upper[a] = 0.0;
            self.x[a] = 0.0;
        }
        // Phase 2.
        let costs = std::mem::take(&mut self.phase2);
        self.set_costs(costs);
        self.iterate()?;
        let x: Vec<f64> = self.x[..n].to_vec();
        let objective = x.iter().zip(&self.costs).map(|(a, c)| a * c).sum();
        Ok(LpSolution { x, objective, iterations: self.iterations })
    }

    fn set_costs(&mut self, costs: Vec<f64>) {
        self.costs = costs;
        let w = self.width;
        self.d.copy_from_slice(&self.costs);
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = self.costs[b];
            if cb != 0.0 {
                let row = &self.t[i * w..(i + 1) * w];
                for (d, a) in self.d.iter_mut().zip(row) {
                    *d -= cb * a;
                }
            }
        }
        for &b in &self.basis {
            self.d[b] = 0.0;
        }
    }

    fn iterate(&mut self) -> Result<(), LpError> {
        let w = self.width;
        let cost_scale = 1.0 + self.costs.iter().fold(0.0_f64, |a, c| a.max(c.abs()));
        let dtol = 1e-11 * cost_scale;
        let mut degenerate_run = 0usize;
        loop {
            if self.iterations >= self.limit {
                return Err(LpError::IterationLimit(self.limit));
            }
            let bland = degenerate_run > BLAND_AFTER;
            let Some(entering) = self.price(dtol, bland) else {
                return Ok(());
            };
            self.iterations += 1;
            let dir = if self.state[entering] == State::AtLower { 1.0 } else { -1.0 };

            let mut step = self.upper[entering] - self.lower[entering];
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let alpha = dir * self.t[i * w + entering];
                let b = self.basis[i];
                let limit = if alpha > PIVOT_TOL {
                    (self.x[b] - self.lower[b]) / alpha
                } else if alpha < -PIVOT_TOL {
                    if self.upper[b].is_infinite() {
                        continue;
                    }
                    (self.upper[b] - self.x[b]) / -alpha
                } else {
                    continue;
                };
                let limit = limit.max(0.0);
                let better = match leave {
                    None => limit < step,
                    Some((r, a)) => {
                        if limit < step - 1e-12 {
                            true
                        } else if limit <= step + 1e-12 {
                            if bland {
                                b < self.basis[r]
                            } else {
                                alpha.abs() > a.abs()
                            }
                        } else {
                            false
                        }
                    }
                };
                if better {
                    step = limit;
                    leave = Some((i, alpha));
                }
            }
            if step.is_infinite() {
                return Err(LpError::Unbounded);
            }
            if step <= 1e-12 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }

            for i in 0..self.m {
                let a = self.t[i * w + entering];
                if a != 0.0 {
                    let b = self.basis[i];
                    self.x[b] -= dir * step * a;
                }
            }
            match leave {
                None => {
                    // Bound flip.
                    if dir > 0.0 {
                        self.x[entering] = self.upper[entering];
                        self.state[entering] = State::AtUpper;
                    } else {
                        self.x[entering] = self.lower[entering];
                        self.state[entering] = State::AtLower;
                    }
                }
                Some((r, alpha)) => {
                    self.x[entering] += dir * step;
                    let out = self.basis[r];
                    if alpha > 0.0 {
                        self.x[out] = self.lower[out];
                        self.state[out] = State::AtLower;
                    } else {
                        self.x[out] = self.upper[out];
                        self.state[out] = State::AtUpper;
                    }
                    self.pivot(r, entering);
                }
            }
        }
    }

    fn price(&self, dtol: f64, bland: bool) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.width {
            let score = match self.state[j] {
                State::Basic => continue,
                _ if self.upper[j] <= self.lower[j] => continue,
                State::AtLower => -self.d[j],
                State::AtUpper => self.d[j],
            };
            if score > dtol {
                if bland {
                    return Some(j);
                }
                if best.is_none_or(|(_, s)| score > s) {
                    best = Some((j, score));
                }
            }
        }
        best.map(|(j, _)| j)
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let w = self.width;
        let piv = self.t[r * w + j];
        {
            let row = &mut self.t[r * w..(r + 1) * w];
            for v in row.iter_mut() {
                *v /= piv;
            }
            row[j] = 1.0;
        }
        let pivot_row: Vec<f64> = self.t[r * w..(r + 1) * w].to_vec();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * w + j];
            if f != 0.0 {
                let row = &mut self.t[i * w..(i + 1) * w];
                for (v, p) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * p;
                }
                row[j] = 0.0;
            }
        }
        let dj = self.d[j];
        if dj != 0.0 {
            for (d, p) in self.d.iter_mut().zip(&pivot_row) {
                *d -= dj * p;
            }
        }
        self.d[j] = 0.0;
        self.basis[r] = j;
        self.state[j] = State::Basic;
    }
}
