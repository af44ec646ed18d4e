use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{HarnessError, MAX_SEED};
use crate::control::calibrate_thresholds;
use crate::evolution::EvolutionParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutageCadence {
    /// Every line trials `p0/288` at every step.
    PerStep,
    /// Every line trials `p0` once a day, at a step drawn uniformly.
    PerDay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BurstStorage {
    /// Recovered bursts apply `b·|r|` to the node's current scheduled demand.
    Relative,
    /// Recovered bursts add the power recorded when they were sampled.
    Absolute,
}

/// Every simulation parameter, read from a flat TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Grid file; when absent a synthetic grid is generated.
    pub grid_file: Option<PathBuf>,
    pub grid_nodes: usize,
    pub grid_generators: usize,
    pub grid_lines: usize,
    /// Optional 288-line intraday profile; the two-peak default otherwise.
    pub profile_file: Option<PathBuf>,

    pub days: u32,
    pub warmup_days: u32,

    /// Initiating outage probability per line per day.
    pub p0: f64,
    pub p1: f64,
    pub p3: f64,
    pub p4: f64,
    pub lambda_bar: f64,
    pub mu: f64,
    pub b: f64,

    pub control_enabled: bool,
    pub control_f1: f64,
    pub control_f2: f64,

    pub gamma: f64,
    pub generation_headroom: f64,
    pub generation_cost: f64,
    pub shed_penalty: f64,
    pub margin_threshold: f64,
    pub margin_target: f64,

    pub initiating_outage_cadence: OutageCadence,
    pub postponed_burst_storage: BurstStorage,

    pub seed_outages: u64,
    pub seed_overload_trials: u64,
    pub seed_bursts: u64,
    pub seed_recovery: u64,
    pub seed_daily_factor: u64,
    pub seed_synthesis: u64,

    pub intraday_bin_minutes: usize,
    pub tail_fit_fraction: f64,
    pub tail_fit_min_points: usize,
    /// Writes a per-step control diagnostics file.
    pub step_diagnostics: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            grid_file: None,
            grid_nodes: 100,
            grid_generators: 15,
            grid_lines: 154,
            profile_file: None,
            days: 2000,
            warmup_days: 500,
            p0: 1.44e-6,
            p1: 0.01,
            p3: 0.00025,
            p4: 0.00125,
            lambda_bar: 1.00058,
            mu: 1.07,
            b: 0.0,
            control_enabled: false,
            control_f1: 0.85,
            control_f2: 0.75,
            gamma: 0.05,
            generation_headroom: 0.25,
            generation_cost: crate::dispatch::DEFAULT_GENERATION_COST,
            shed_penalty: crate::dispatch::DEFAULT_SHED_PENALTY,
            margin_threshold: 0.2,
            margin_target: 0.4,
            initiating_outage_cadence: OutageCadence::PerStep,
            postponed_burst_storage: BurstStorage::Relative,
            seed_outages: 1,
            seed_overload_trials: 2,
            seed_bursts: 3,
            seed_recovery: 4,
            seed_daily_factor: 5,
            seed_synthesis: 6,
            intraday_bin_minutes: 60,
            tail_fit_fraction: 0.1,
            tail_fit_min_points: 10,
            step_diagnostics: false,
        }
    }
}

impl SimConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Panics on seeds above [`MAX_SEED`], which TOML cannot represent.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Reads a config file; relative grid and profile paths resolve against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.grid_file, &mut cfg.profile_file].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn evolution(&self) -> EvolutionParams {
        EvolutionParams {
            lambda_bar: self.lambda_bar,
            mu: self.mu,
            margin_threshold: self.margin_threshold,
            margin_target: self.margin_target,
            daily_variability: self.gamma,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        for (name, p) in [("p0", self.p0), ("p1", self.p1), ("p3", self.p3), ("p4", self.p4)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} outside [0, 1]"));
            }
        }
        if self.days <= self.warmup_days {
            return bad(format!("days ({}) must exceed warmup_days ({})", self.days, self.warmup_days));
        }
        if !(self.b >= 0.0 && self.b.is_finite()) {
            return bad(format!("b = {} must be finite and >= 0", self.b));
        }
        if !(self.generation_headroom >= 0.0 && self.generation_headroom.is_finite()) {
            return bad(format!("generation_headroom = {} must be >= 0", self.generation_headroom));
        }
        if !(self.generation_cost >= 0.0 && self.shed_penalty > self.generation_cost) {
            return bad("need 0 <= generation_cost < shed_penalty".into());
        }
        if !(self.tail_fit_fraction > 0.0 && self.tail_fit_fraction <= 1.0) {
            return bad(format!("tail_fit_fraction = {} outside (0, 1]", self.tail_fit_fraction));
        }
        calibrate_thresholds(1.0, self.control_f1, self.control_f2).map_err(|e| HarnessError::Config(e.to_string()))?;
        self.evolution().validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        crate::metrics::intraday_histogram(&[], self.intraday_bin_minutes)
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        let seeds = [
            self.seed_outages,
            self.seed_overload_trials,
            self.seed_bursts,
            self.seed_recovery,
            self.seed_daily_factor,
            self.seed_synthesis,
        ];
        if seeds.iter().any(|&s| s > MAX_SEED) {
            return bad(format!("seeds must not exceed {MAX_SEED}"));
        }
        if self.grid_file.is_none() && self.grid_nodes < 2 {
            return bad("synthetic grids need at least 2 nodes".into());
        }
        Ok(())
    }
}
