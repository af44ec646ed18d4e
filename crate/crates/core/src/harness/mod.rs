//! Configuration, seeded streams, the day/step simulation loop, sweeps and
//! persistence.
//!
//! A day starts by growing demand and drawing the day factor, repairing and
//! upgrading the lines involved in yesterday's blackouts, checking the
//! generation margin against the day's scheduled peak and calibrating the
//! control thresholds. Each 5-minute step then builds nodal demand, samples
//! bursts, applies control, trials initiating outages and runs the cascade.
//! Lines lost in a step are back in service for the next step.

mod config;
mod rng;
mod sweep;

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use thiserror::Error;

pub use config::{BurstStorage, OutageCadence, SimConfig};
pub use rng::{replica_config, replica_seed, Streams, MAX_SEED};
pub use sweep::{run_sweep, SweepAxis, SweepPoint, SweepRow, SweepTable};

use crate::cascade::{apply_initiating_outages, run_cascade, CascadeSettings};
use crate::control::{calibrate_thresholds, filter_bursts, recover_pending, BurstLedger, ControlPolicy, PendingQueue};
use crate::demand::{burst_power, generation_limit, sample_bursts, DemandError, IntradayProfile, STEPS_PER_DAY};
use crate::dispatch::{DispatchError, Dispatcher};
use crate::evolution::{advance_day, generation_margin, maybe_upgrade_generation, upgrade_lines, EvolutionParams};
use crate::grid::{generate_synthetic, Grid, GridError};
use crate::metrics::{MetricsError, RunStatistics, StressAccumulator, TailFit};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("grid: {0}")]
    Grid(#[from] GridError),
    #[error("profile: {0}")]
    Demand(#[from] DemandError),
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("records line {line}: {message}")]
    Records { line: usize, message: String },
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.to_path_buf(), source }
    }
}

/// One cascade with load shed or line failures.
#[derive(Debug, Clone, PartialEq)]
pub struct BlackoutRecord {
    pub day: u32,
    pub step: usize,
    pub load_shed: f64,
    pub total_demand: f64,
    /// Initiating outages plus overload failures.
    pub n_failed_lines: usize,
    pub n_overloaded_lines: usize,
    pub is_blackout: bool,
}

impl BlackoutRecord {
    /// `L_S / P_D`.
    pub fn size(&self) -> f64 {
        if self.total_demand > 0.0 {
            self.load_shed / self.total_demand
        } else {
            0.0
        }
    }
}

const RECORDS_HEADER: &str = "day\tstep\tload_shed\ttotal_demand\tn_failed_lines\tn_overloaded_lines\tis_blackout";

pub fn write_records<W: Write>(records: &[BlackoutRecord], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{RECORDS_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.day,
            r.step,
            r.load_shed,
            r.total_demand,
            r.n_failed_lines,
            r.n_overloaded_lines,
            u8::from(r.is_blackout)
        )?;
    }
    Ok(())
}

pub fn read_records<R: BufRead>(source: R) -> Result<Vec<BlackoutRecord>, HarnessError> {
    let mut records = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let line = line.map_err(|e| HarnessError::Records { line: idx + 1, message: e.to_string() })?;
        if idx == 0 {
            if line.trim() != RECORDS_HEADER {
                return Err(HarnessError::Records { line: 1, message: "unexpected header".into() });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        let err = |m: &str| HarnessError::Records { line: idx + 1, message: m.to_string() };
        if f.len() != 7 {
            return Err(err("expected 7 fields"));
        }
        let is_blackout = match f[6] {
            "1" => true,
            "0" => false,
            _ => return Err(err("is_blackout must be 0 or 1")),
        };
        records.push(BlackoutRecord {
            day: f[0].parse().map_err(|_| err("bad day"))?,
            step: f[1].parse().map_err(|_| err("bad step"))?,
            load_shed: f[2].parse().map_err(|_| err("bad load_shed"))?,
            total_demand: f[3].parse().map_err(|_| err("bad total_demand"))?,
            n_failed_lines: f[4].parse().map_err(|_| err("bad n_failed_lines"))?,
            n_overloaded_lines: f[5].parse().map_err(|_| err("bad n_overloaded_lines"))?,
            is_blackout,
        });
    }
    Ok(records)
}

/// Records from `warmup_days` onward.
pub fn statistics_window(records: &[BlackoutRecord], warmup_days: u32) -> Vec<BlackoutRecord> {
    records.iter().filter(|r| r.day >= warmup_days).cloned().collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DailyDiagnostics {
    pub day: u32,
    pub day_factor: f64,
    pub scheduled_peak: f64,
    pub gen_capacity: f64,
    pub generation_margin: f64,
    pub lines_upgraded: usize,
    pub generation_upgraded: bool,
    pub blackouts: usize,
    pub mean_stress: f64,
    pub pending_bursts: usize,
    /// Control threshold, infinite when control is off.
    pub pl1: f64,
    /// Recovery threshold, infinite when control is off.
    pub pl2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    pub day: u32,
    pub step: usize,
    /// Total scheduled demand before bursts.
    pub scheduled_demand: f64,
    pub queue_len: usize,
    pub applied: usize,
    pub postponed: usize,
    pub recovered: usize,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub config: SimConfig,
    pub records: Vec<BlackoutRecord>,
    pub statistics: RunStatistics,
    pub daily: Vec<DailyDiagnostics>,
    pub steps: Vec<StepDiagnostics>,
    pub bursts: BurstLedger,
    pub pending_at_end: usize,
    /// Post-warmup burst power actually added to demand, per step of day.
    pub burst_power_by_step: Vec<f64>,
    pub lp_solves: u64,
    pub final_grid: Grid,
}

impl SimOutput {
    /// Writes records, summary, diagnostics and plot tables into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<(), HarnessError> {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        let create = |name: &str| -> Result<(PathBuf, BufWriter<File>), HarnessError> {
            let path = dir.join(name);
            let file = File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
            Ok((path, BufWriter::new(file)))
        };
        let (path, mut w) = create("records.tsv")?;
        write_records(&self.records, &mut w).and_then(|_| w.flush()).map_err(|e| HarnessError::io(&path, e))?;

        let (path, mut w) = create("summary.txt")?;
        self.statistics.write_summary(&mut w)?;
        let extra = writeln!(w, "bursts_sampled\t{}", self.bursts.sampled)
            .and_then(|_| writeln!(w, "bursts_applied\t{}", self.bursts.applied))
            .and_then(|_| writeln!(w, "bursts_postponed\t{}", self.bursts.postponed))
            .and_then(|_| writeln!(w, "bursts_recovered\t{}", self.bursts.recovered))
            .and_then(|_| writeln!(w, "bursts_pending\t{}", self.pending_at_end))
            .and_then(|_| writeln!(w, "lp_solves\t{}", self.lp_solves))
            .and_then(|_| w.flush());
        extra.map_err(|e| HarnessError::io(&path, e))?;

        let (path, mut w) = create("daily.tsv")?;
        self.write_daily(&mut w).and_then(|_| w.flush()).map_err(|e| HarnessError::io(&path, e))?;

        if self.config.step_diagnostics {
            let (path, mut w) = create("steps.tsv")?;
            let res = writeln!(w, "day\tstep\tscheduled_demand\tqueue_len\tapplied\tpostponed\trecovered").and_then(|_| {
                for s in &self.steps {
                    writeln!(
                        w,
                        "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                        s.day, s.step, s.scheduled_demand, s.queue_len, s.applied, s.postponed, s.recovered
                    )?;
                }
                w.flush()
            });
            res.map_err(|e| HarnessError::io(&path, e))?;
        }

        let (_, mut w) = create("rank.tsv")?;
        self.statistics.write_rank_table(&mut w)?;
        let (_, mut w) = create("intraday.tsv")?;
        self.statistics.write_intraday_table(&mut w)?;
        let (_, mut w) = create("overload.tsv")?;
        self.statistics.write_overload_table(&mut w)?;
        Ok(())
    }

    fn write_daily<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "day\tday_factor\tscheduled_peak\tgen_capacity\tgeneration_margin\tlines_upgraded\tgeneration_upgraded\tblackouts\tmean_stress\tpending_bursts\tpl1\tpl2"
        )?;
        for d in &self.daily {
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                d.day,
                d.day_factor,
                d.scheduled_peak,
                d.gen_capacity,
                d.generation_margin,
                d.lines_upgraded,
                u8::from(d.generation_upgraded),
                d.blackouts,
                d.mean_stress,
                d.pending_bursts,
                d.pl1,
                d.pl2
            )?;
        }
        Ok(())
    }
}

/// Grid named by the config: the file when given, otherwise synthetic.
pub fn build_grid(cfg: &SimConfig) -> Result<Grid, HarnessError> {
    match &cfg.grid_file {
        Some(path) => {
            let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
            Ok(Grid::load(BufReader::new(file))?)
        }
        None => Ok(generate_synthetic(cfg.grid_nodes, cfg.grid_generators, cfg.grid_lines, cfg.seed_synthesis)?),
    }
}

pub fn build_profile(cfg: &SimConfig) -> Result<IntradayProfile, HarnessError> {
    match &cfg.profile_file {
        Some(path) => {
            let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
            Ok(IntradayProfile::load(BufReader::new(file))?)
        }
        None => Ok(IntradayProfile::two_peak()),
    }
}

pub fn run_simulation(cfg: &SimConfig) -> Result<SimOutput, HarnessError> {
    cfg.validate()?;
    let grid = build_grid(cfg)?;
    let profile = build_profile(cfg)?;
    simulate(cfg, grid, &profile)
}

/// Runs the day/step loop on a given grid and profile.
pub fn simulate(cfg: &SimConfig, mut grid: Grid, profile: &IntradayProfile) -> Result<SimOutput, HarnessError> {
    cfg.validate()?;
    let n = grid.node_count();
    let evo = cfg.evolution();
    let day_zero = EvolutionParams { lambda_bar: 1.0, ..evo };
    let settings = CascadeSettings { p1: cfg.p1, generation_cost: cfg.generation_cost, shed_penalty: cfg.shed_penalty };
    let mut streams = Streams::from_config(cfg);
    let mut dispatcher = Dispatcher::new();
    let mut base = grid.base_loads();
    let mut queue = PendingQueue::new();
    let mut ledger = BurstLedger::default();
    let mut to_upgrade: BTreeSet<usize> = BTreeSet::new();
    let mut stress = StressAccumulator::default();
    let mut records = Vec::new();
    let mut daily = Vec::with_capacity(cfg.days as usize);
    let mut steps = Vec::new();
    let mut burst_power_by_step = vec![0.0; STEPS_PER_DAY];

    let mut scheduled = vec![0.0; n];
    let mut demand = vec![0.0; n];
    let mut available = vec![0.0; n];

    for day in 0..cfg.days {
        let day_factor = advance_day(&mut base, if day == 0 { &day_zero } else { &evo }, &mut streams.daily_factor);
        let lines_upgraded = upgrade_lines(&mut grid, &mut to_upgrade, cfg.mu).expect("upgrade ids come from the grid");
        let base_total: f64 = base.iter().sum();
        let scheduled_peak = base_total * profile.peak() * day_factor;
        let generation_upgraded = maybe_upgrade_generation(&mut grid, scheduled_peak, &evo);
        let policy = if cfg.control_enabled {
            let (pl1, pl2) = calibrate_thresholds(scheduled_peak, cfg.control_f1, cfg.control_f2)
                .map_err(|e| HarnessError::Config(e.to_string()))?;
            ControlPolicy { enabled: true, pl1, pl2, p4: cfg.p4 }
        } else {
            ControlPolicy::disabled()
        };
        let capacities = grid.gen_capacities();
        let installed: f64 = capacities.iter().sum();
        let initiating_step = match cfg.initiating_outage_cadence {
            OutageCadence::PerStep => None,
            OutageCadence::PerDay => Some(streams.outages.gen_range(0..STEPS_PER_DAY)),
        };
        let counted = day >= cfg.warmup_days;
        let mut day_blackouts = 0;
        let mut day_stress = StressAccumulator::default();

        for (step, &multiplier) in profile.samples().iter().enumerate() {
            let scale = multiplier * day_factor;
            for (s, b) in scheduled.iter_mut().zip(&base) {
                *s = b * scale;
            }
            let scheduled_total = base_total * scale;

            let sampled = sample_bursts(&scheduled, step, cfg.p3, cfg.b, &mut streams.bursts);
            ledger.sampled += sampled.len() as u64;
            let recovered = recover_pending(&mut queue, scheduled_total, &policy, &mut streams.recovery);
            let queued_before = queue.len();
            let applied = filter_bursts(sampled, scheduled_total, &policy, &mut queue);
            let postponed = queue.len() - queued_before;
            ledger.applied += applied.len() as u64;
            ledger.postponed += postponed as u64;
            ledger.recovered += recovered.len() as u64;

            demand.copy_from_slice(&scheduled);
            let absolute = cfg.postponed_burst_storage == BurstStorage::Absolute;
            for burst in &applied {
                demand[burst.node] += burst_power(burst, scheduled[burst.node], false);
            }
            for burst in &recovered {
                demand[burst.node] += burst_power(burst, scheduled[burst.node], absolute);
            }
            if counted {
                let added: f64 = demand.iter().sum::<f64>() - scheduled_total;
                burst_power_by_step[step] += added.max(0.0);
            }
            if cfg.step_diagnostics {
                steps.push(StepDiagnostics {
                    day,
                    step,
                    scheduled_demand: scheduled_total,
                    queue_len: queue.len(),
                    applied: applied.len(),
                    postponed,
                    recovered: recovered.len(),
                });
            }

            let fraction = generation_limit(scheduled_total, installed, cfg.generation_headroom);
            for (a, c) in available.iter_mut().zip(&capacities) {
                *a = c * fraction;
            }

            let initiating = match initiating_step {
                None => apply_initiating_outages(&mut grid, cfg.p0 / STEPS_PER_DAY as f64, &mut streams.outages),
                Some(s) if s == step => apply_initiating_outages(&mut grid, cfg.p0, &mut streams.outages),
                Some(_) => BTreeSet::new(),
            };
            let outcome =
                run_cascade(&mut grid, &demand, Some(&available), &settings, &mut streams.overload_trials, &mut dispatcher)?;

            let step_mean = outcome.mean_fractional_overload();
            day_stress.add_mean(step_mean);
            if counted {
                stress.add_mean(step_mean);
            }
            let lines_lost = !initiating.is_empty() || !outcome.failed_lines.is_empty();
            if outcome.load_shed > 0.0 || lines_lost {
                records.push(BlackoutRecord {
                    day,
                    step,
                    load_shed: outcome.load_shed,
                    total_demand: outcome.total_demand,
                    n_failed_lines: initiating.len() + outcome.failed_lines.len(),
                    n_overloaded_lines: outcome.overloaded_lines.len(),
                    is_blackout: outcome.is_blackout,
                });
            }
            if outcome.is_blackout {
                day_blackouts += 1;
                to_upgrade.extend(&initiating);
                to_upgrade.extend(&outcome.failed_lines);
                to_upgrade.extend(&outcome.overloaded_lines);
            }
            if lines_lost {
                grid.restore_all();
            }
        }

        daily.push(DailyDiagnostics {
            day,
            day_factor,
            scheduled_peak,
            gen_capacity: installed,
            generation_margin: generation_margin(installed, scheduled_peak),
            lines_upgraded,
            generation_upgraded,
            blackouts: day_blackouts,
            mean_stress: day_stress.mean().unwrap_or(0.0),
            pending_bursts: queue.len(),
            pl1: policy.pl1,
            pl2: policy.pl2,
        });
    }

    let window = statistics_window(&records, cfg.warmup_days);
    let fit = TailFit { fraction: cfg.tail_fit_fraction, min_points: cfg.tail_fit_min_points, ..TailFit::default() };
    let statistics =
        RunStatistics::compute(&window, cfg.days - cfg.warmup_days, stress.mean(), &fit, cfg.intraday_bin_minutes)?;
    Ok(SimOutput {
        config: cfg.clone(),
        records,
        statistics,
        daily,
        steps,
        bursts: ledger,
        pending_at_end: queue.len(),
        burst_power_by_step,
        lp_solves: dispatcher.lp_solves(),
        final_grid: grid,
    })
}
