//! Threshold demand control: bursts arriving while scheduled demand is above
//! the control threshold are postponed, and pending bursts are released at
//! random while demand is below the recovery threshold.

use std::collections::VecDeque;

use rand::Rng;
use thiserror::Error;

use crate::demand::{BurstEvent, BurstStatus};

#[derive(Debug, Error, PartialEq)]
pub enum ControlError {
    #[error("recovery threshold {pl2} above control threshold {pl1}")]
    Thresholds { pl1: f64, pl2: f64 },
    #[error("recovery probability {0} outside [0, 1]")]
    Probability(f64),
    #[error("threshold fractions must satisfy 0 < f2 <= f1 <= 1, got f1 = {f1}, f2 = {f2}")]
    Fractions { f1: f64, f2: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlPolicy {
    pub enabled: bool,
    /// Total demand (MW) above which bursts are postponed.
    pub pl1: f64,
    /// Total demand (MW) below which pending bursts may recover.
    pub pl2: f64,
    /// Per-step recovery probability of each pending burst.
    pub p4: f64,
}

impl ControlPolicy {
    pub fn disabled() -> Self {
        ControlPolicy { enabled: false, pl1: f64::INFINITY, pl2: f64::INFINITY, p4: 0.0 }
    }

    pub fn new(pl1: f64, pl2: f64, p4: f64) -> Result<Self, ControlError> {
        let p = ControlPolicy { enabled: true, pl1, pl2, p4 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        if self.pl2 > self.pl1 {
            return Err(ControlError::Thresholds { pl1: self.pl1, pl2: self.pl2 });
        }
        if !(0.0..=1.0).contains(&self.p4) {
            return Err(ControlError::Probability(self.p4));
        }
        Ok(())
    }
}

/// Bursts waiting for recovery, oldest first.
#[derive(Debug, Clone, Default)]
pub struct PendingQueue {
    entries: VecDeque<BurstEvent>,
}

impl PendingQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &BurstEvent> {
        self.entries.iter()
    }
}

/// Gates this step's bursts on the pre-burst scheduled demand.
pub fn filter_bursts(
    bursts: Vec<BurstEvent>,
    total_demand_pre_burst: f64,
    policy: &ControlPolicy,
    queue: &mut PendingQueue,
) -> Vec<BurstEvent> {
    if !policy.enabled || total_demand_pre_burst <= policy.pl1 {
        return bursts.into_iter().map(|b| BurstEvent { status: BurstStatus::Applied, ..b }).collect();
    }
    queue.entries.extend(bursts.into_iter().map(|b| BurstEvent { status: BurstStatus::Postponed, ..b }));
    Vec::new()
}

/// Releases pending bursts, each with probability `p4`, when demand is
/// below the recovery threshold.
pub fn recover_pending<R: Rng + ?Sized>(
    queue: &mut PendingQueue,
    total_demand_pre_burst: f64,
    policy: &ControlPolicy,
    rng: &mut R,
) -> Vec<BurstEvent> {
    if !policy.enabled || queue.is_empty() || total_demand_pre_burst >= policy.pl2 {
        return Vec::new();
    }
    let mut recovered = Vec::new();
    let mut kept = VecDeque::with_capacity(queue.entries.len());
    for entry in queue.entries.drain(..) {
        if rng.gen::<f64>() < policy.p4 {
            recovered.push(BurstEvent { status: BurstStatus::Recovered, ..entry });
        } else {
            kept.push_back(entry);
        }
    }
    queue.entries = kept;
    recovered
}

/// Control and recovery thresholds as fractions of the day's scheduled peak.
pub fn calibrate_thresholds(scheduled_peak: f64, f1: f64, f2: f64) -> Result<(f64, f64), ControlError> {
    if !(f2 > 0.0 && f2 <= f1 && f1 <= 1.0) {
        return Err(ControlError::Fractions { f1, f2 });
    }
    Ok((f1 * scheduled_peak, f2 * scheduled_peak))
}

/// Running totals of burst outcomes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BurstLedger {
    pub sampled: u64,
    pub applied: u64,
    pub postponed: u64,
    pub recovered: u64,
}

impl BurstLedger {
    /// `sampled == applied + recovered + pending` must hold.
    pub fn balances(&self, pending: usize) -> bool {
        self.sampled == self.applied + self.recovered + pending as u64
            && self.postponed == self.recovered + pending as u64
    }
}
