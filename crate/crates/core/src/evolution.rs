//! Slow dynamics: demand growth, day-to-day variability, and the line and
//! generation upgrades that respond to blackouts and shrinking margins.

use std::collections::BTreeSet;

use rand::Rng;
use thiserror::Error;

use crate::grid::{Grid, LineStatus};

#[derive(Debug, Error, PartialEq)]
pub enum EvolutionError {
    #[error("invalid evolution parameter: {0}")]
    InvalidParams(String),
    #[error("unknown line id {0}")]
    UnknownLine(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolutionParams {
    /// Daily demand growth factor.
    pub lambda_bar: f64,
    /// Line limit multiplier after a blackout.
    pub mu: f64,
    pub margin_threshold: f64,
    pub margin_target: f64,
    /// Half-width of the uniform day factor around 1.
    pub daily_variability: f64,
}

impl Default for EvolutionParams {
    fn default() -> Self {
        EvolutionParams {
            lambda_bar: 1.00058,
            mu: 1.07,
            margin_threshold: 0.2,
            margin_target: 0.4,
            daily_variability: 0.05,
        }
    }
}

impl EvolutionParams {
    pub fn validate(&self) -> Result<(), EvolutionError> {
        let bad = |m: String| Err(EvolutionError::InvalidParams(m));
        if !(self.lambda_bar >= 1.0 && self.lambda_bar.is_finite()) {
            return bad(format!("lambda_bar = {} must be >= 1", self.lambda_bar));
        }
        if !(self.mu > 1.0 && self.mu.is_finite()) {
            return bad(format!("mu = {} must be > 1", self.mu));
        }
        if !(self.margin_threshold > 0.0 && self.margin_threshold < self.margin_target && self.margin_target.is_finite())
        {
            return bad(format!(
                "need 0 < margin_threshold ({}) < margin_target ({})",
                self.margin_threshold, self.margin_target
            ));
        }
        if !(0.0..1.0).contains(&self.daily_variability) {
            return bad(format!("daily_variability = {} outside [0, 1)", self.daily_variability));
        }
        Ok(())
    }
}

/// Grows every base load by `lambda_bar` and draws the day factor, uniform
/// on `[1 - γ, 1 + γ]`. The uniform is drawn even when `γ = 0`.
pub fn advance_day<R: Rng + ?Sized>(demand_base: &mut [f64], params: &EvolutionParams, rng: &mut R) -> f64 {
    for d in demand_base.iter_mut() {
        *d *= params.lambda_bar;
    }
    let u: f64 = rng.gen();
    1.0 + params.daily_variability * (2.0 * u - 1.0)
}

/// Restores and upgrades the listed lines, consuming the set.
pub fn upgrade_lines(grid: &mut Grid, lines: &mut BTreeSet<usize>, mu: f64) -> Result<usize, EvolutionError> {
    if let Some(&bad) = lines.iter().find(|&&id| id >= grid.line_count()) {
        return Err(EvolutionError::UnknownLine(bad));
    }
    let count = lines.len();
    for id in std::mem::take(lines) {
        let line = grid.line_mut(id).expect("checked above");
        line.flow_limit *= mu;
        line.status = LineStatus::Up;
    }
    Ok(count)
}

/// `C_M = (P_G - P_D) / P_D`.
pub fn generation_margin(total_capacity: f64, demand: f64) -> f64 {
    (total_capacity - demand) / demand
}

/// Rescales all capacities to `margin_target` when the margin against the
/// day's peak has fallen to `margin_threshold` or below.
pub fn maybe_upgrade_generation(grid: &mut Grid, peak_demand: f64, params: &EvolutionParams) -> bool {
    let pg = grid.total_gen_capacity();
    if pg <= 0.0 || generation_margin(pg, peak_demand) > params.margin_threshold {
        return false;
    }
    let scale = peak_demand * (1.0 + params.margin_target) / pg;
    for node in grid.nodes_mut() {
        node.gen_capacity *= scale;
    }
    true
}
