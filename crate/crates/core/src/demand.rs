//! Intraday demand, generation limits and random power bursts.

use std::io::BufRead;

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::grid::Node;

/// Five-minute steps per day.
pub const STEPS_PER_DAY: usize = 288;
/// Minutes per step.
pub const STEP_MINUTES: usize = 5;
/// Bursts draw `|r|` from a standard Gaussian capped at this value.
pub const BURST_TRUNCATION: f64 = 5.0;

#[derive(Debug, Error)]
pub enum DemandError {
    #[error("step {0} outside 0..{STEPS_PER_DAY}")]
    StepOutOfRange(usize),
    #[error("profile needs {STEPS_PER_DAY} samples, got {0}")]
    WrongLength(usize),
    #[error("profile sample {index} is {value}, must be positive and finite")]
    BadSample { index: usize, value: f64 },
    #[error("profile line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Daily demand multipliers, one per 5-minute step, with mean 1.
#[derive(Debug, Clone, PartialEq)]
pub struct IntradayProfile {
    samples: Vec<f64>,
    peak: f64,
}

impl IntradayProfile {
    /// Normalises `samples` to unit mean.
    pub fn new(samples: Vec<f64>) -> Result<Self, DemandError> {
        if samples.len() != STEPS_PER_DAY {
            return Err(DemandError::WrongLength(samples.len()));
        }
        if let Some(index) = samples.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(DemandError::BadSample { index, value: samples[index] });
        }
        let mean = samples.iter().sum::<f64>() / STEPS_PER_DAY as f64;
        let samples: Vec<f64> = samples.iter().map(|v| v / mean).collect();
        let peak = samples.iter().copied().fold(f64::MIN, f64::max);
        Ok(IntradayProfile { samples, peak })
    }

    pub fn flat() -> Self {
        IntradayProfile { samples: vec![1.0; STEPS_PER_DAY], peak: 1.0 }
    }

    /// Two-peak weekday shape: a morning bump at 10:00 and a higher evening
    /// bump at 20:00 on a flat base.
    pub fn two_peak() -> Self {
        Self::from_bumps(&[
            Bump { hour: 10.0, width_hours: 2.5, amplitude: 0.35 },
            Bump { hour: 20.0, width_hours: 2.0, amplitude: 0.5 },
        ])
    }

    /// `1 + Σ a·g(t)` with periodic Gaussian bumps, normalised to unit mean.
    pub fn from_bumps(bumps: &[Bump]) -> Self {
        let samples = (0..STEPS_PER_DAY)
            .map(|s| {
                let hour = (s * STEP_MINUTES) as f64 / 60.0;
                1.0 + bumps.iter().map(|b| b.value(hour)).sum::<f64>()
            })
            .collect();
        Self::new(samples).expect("bump profile is positive")
    }

    /// Reads 288 multipliers, one per line; `#` starts a comment line.
    pub fn load<R: BufRead>(source: R) -> Result<Self, DemandError> {
        let mut samples = Vec::with_capacity(STEPS_PER_DAY);
        for (idx, raw) in source.lines().enumerate() {
            let raw = raw?;
            let text = raw.trim();
            if text.is_empty() || text.starts_with('#') {
                continue;
            }
            let v: f64 = text
                .parse()
                .map_err(|_| DemandError::Parse { line: idx + 1, message: format!("bad multiplier `{text}`") })?;
            samples.push(v);
        }
        Self::new(samples)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn peak(&self) -> f64 {
        self.peak
    }

    pub fn value(&self, step: usize) -> Result<f64, DemandError> {
        self.samples.get(step).copied().ok_or(DemandError::StepOutOfRange(step))
    }

    /// Indices of strict local maxima on the 24-hour circle.
    pub fn local_maxima(&self) -> Vec<usize> {
        let n = self.samples.len();
        (0..n)
            .filter(|&i| {
                let prev = self.samples[(i + n - 1) % n];
                let next = self.samples[(i + 1) % n];
                self.samples[i] > prev && self.samples[i] >= next
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Bump {
    pub hour: f64,
    pub width_hours: f64,
    pub amplitude: f64,
}

impl Bump {
    fn value(&self, hour: f64) -> f64 {
        let mut dist = (hour - self.hour).abs() % 24.0;
        if dist > 12.0 {
            dist = 24.0 - dist;
        }
        self.amplitude * (-0.5 * (dist / self.width_hours).powi(2)).exp()
    }
}

/// Multiplier of a profile at `step`.
pub fn profile_value(profile: &IntradayProfile, step: usize) -> Result<f64, DemandError> {
    profile.value(step)
}

/// Scheduled demand P_{i,0}(t) of one node.
pub fn nodal_demand(node: &Node, multiplier: f64, growth: f64, day_factor: f64) -> f64 {
    node.base_load * growth * multiplier * day_factor
}

/// Fraction of installed capacity available at an instant.
///
/// The generation limit follows the scheduled demand with a relative
/// headroom and never exceeds the installed capacity: each generator may
/// supply `min(1, (1 + headroom)·D(t)/P_G)` of its capacity, i.e.
/// `(1 + headroom)` times its demand-proportional share.
pub fn generation_limit(scheduled_total: f64, installed_total: f64, headroom: f64) -> f64 {
    if installed_total <= 0.0 {
        return 0.0;
    }
    ((1.0 + headroom) * scheduled_total / installed_total).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BurstStatus {
    Applied,
    Postponed,
    Recovered,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BurstEvent {
    pub node: usize,
    /// Intraday step at which the burst was sampled.
    pub step: usize,
    /// `b·|r|`; the burst adds this fraction of the node's scheduled demand.
    pub rel_amplitude: f64,
    /// Burst power (MW) at the time it was sampled.
    pub origin_power: f64,
    pub status: BurstStatus,
}

/// Power a burst adds at a node whose current scheduled demand is
/// `scheduled_now`: `b·|r|·P_{i,0}(t)`, or the power recorded at sampling
/// time when `absolute` is set.
pub fn burst_power(burst: &BurstEvent, scheduled_now: f64, absolute: bool) -> f64 {
    if absolute {
        burst.origin_power
    } else {
        burst.rel_amplitude * scheduled_now
    }
}

/// Per-node burst trials for one step.
///
/// Every node draws one uniform; on success a Gaussian `r` gives
/// `rel_amplitude = b·min(|r|, 5)`. `scheduled[i]` is P_{i,0}(t), used only
/// to record the burst's power.
pub fn sample_bursts<R: Rng + ?Sized>(
    scheduled: &[f64],
    step: usize,
    p3: f64,
    b: f64,
    rng: &mut R,
) -> Vec<BurstEvent> {
    let mut out = Vec::new();
    for (node, &p0) in scheduled.iter().enumerate() {
        if rng.gen::<f64>() < p3 {
            let r: f64 = rng.sample(StandardNormal);
            let rel = b * r.abs().min(BURST_TRUNCATION);
            out.push(BurstEvent { node, step, rel_amplitude: rel, origin_power: rel * p0, status: BurstStatus::Applied });
        }
    }
    out
}
