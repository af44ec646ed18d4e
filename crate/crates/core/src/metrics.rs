//! Run statistics: blackout frequency and size, rank functions with a
//! power-law tail fit, intraday and overload histograms, and grid stress.

use std::collections::BTreeMap;
use std::io::Write;

use thiserror::Error;

use crate::demand::{STEPS_PER_DAY, STEP_MINUTES};
use crate::harness::BlackoutRecord;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("bin width {0} min must be a positive multiple of {STEP_MINUTES} dividing 1440")]
    BinWidth(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Running time average of the per-step mean fractional overload.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StressAccumulator {
    sum: f64,
    samples: u64,
}

impl StressAccumulator {
    /// Adds one step; `fractional_overloads` holds `|F|/F_max` for every
    /// line (zero for Down lines), so the mean is over all `N` lines.
    pub fn add_step(&mut self, fractional_overloads: &[f64]) {
        if fractional_overloads.is_empty() {
            return;
        }
        self.add_mean(fractional_overloads.iter().sum::<f64>() / fractional_overloads.len() as f64);
    }

    pub fn add_mean(&mut self, step_mean: f64) {
        self.sum += step_mean;
        self.samples += 1;
    }

    pub fn samples(&self) -> u64 {
        self.samples
    }

    pub fn mean(&self) -> Option<f64> {
        (self.samples > 0).then(|| self.sum / self.samples as f64)
    }

    pub fn merge(&mut self, other: &StressAccumulator) {
        self.sum += other.sum;
        self.samples += other.samples;
    }
}

/// ⟨M⟩ from per-step mean fractional overloads.
pub fn stress(step_means: &[f64]) -> Option<f64> {
    let mut acc = StressAccumulator::default();
    for &m in step_means {
        acc.add_mean(m);
    }
    acc.mean()
}

/// Window of the tail fit: the largest `fraction` of ranks, at least
/// `min_points` of them, fitted only when `min_events` sizes are present.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailFit {
    pub fraction: f64,
    pub min_points: usize,
    pub min_events: usize,
}

impl Default for TailFit {
    fn default() -> Self {
        TailFit { fraction: 0.1, min_points: 10, min_events: 20 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankFunction {
    /// `(rank, size)` with sizes descending and ranks `1..=K`.
    pub points: Vec<(usize, f64)>,
    /// `α` in `rank ∝ size^-α`, from a least-squares fit of `ln size` on
    /// `ln rank` over the tail window.
    pub tail_exponent: Option<f64>,
}

pub fn rank_function(sizes: &[f64], fit: &TailFit) -> RankFunction {
    let mut sorted: Vec<f64> = sizes.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let points: Vec<(usize, f64)> = sorted.iter().enumerate().map(|(i, &s)| (i + 1, s)).collect();
    let tail_exponent = if points.len() >= fit.min_events {
        let k = ((points.len() as f64 * fit.fraction).round() as usize).max(fit.min_points).min(points.len());
        let (x, y): (Vec<f64>, Vec<f64>) = points[..k]
            .iter()
            .filter(|(_, s)| *s > 0.0)
            .map(|&(r, s)| ((r as f64).ln(), s.ln()))
            .unzip();
        linear_fit(&x, &y).and_then(|f| (f.slope < 0.0).then(|| -1.0 / f.slope))
    } else {
        None
    };
    RankFunction { points, tail_exponent }
}

/// Ordinary least squares `y = intercept + slope·x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope (NaN with fewer than three points).
    pub slope_stderr: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let n = x.len().min(y.len());
    if n < 2 {
        return None;
    }
    let mx = x[..n].iter().sum::<f64>() / n as f64;
    let my = y[..n].iter().sum::<f64>() / n as f64;
    let sxx: f64 = x[..n].iter().map(|v| (v - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = x[..n].iter().zip(&y[..n]).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_stderr = if n > 2 {
        let rss: f64 = x[..n].iter().zip(&y[..n]).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
        (rss / (n - 2) as f64 / sxx).sqrt()
    } else {
        f64::NAN
    };
    Some(LinearFit { slope, intercept, slope_stderr })
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut out = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let r = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                out[k] = r;
            }
            i = j + 1;
        }
        out
    }
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let m = (n + 1.0) / 2.0;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - m) * (b - m)).sum();
    let vx: f64 = rx.iter().map(|a| (a - m).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - m).powi(2)).sum();
    (vx > 0.0 && vy > 0.0).then(|| cov / (vx * vy).sqrt())
}

/// Official blackouts per day.
pub fn blackout_frequency(records: &[BlackoutRecord], days: u32) -> f64 {
    if days == 0 {
        return 0.0;
    }
    records.iter().filter(|r| r.is_blackout).count() as f64 / days as f64
}

/// Blackout counts per time-of-day bin.
pub fn intraday_histogram(records: &[BlackoutRecord], bin_minutes: usize) -> Result<Vec<u64>, MetricsError> {
    if bin_minutes == 0 || !bin_minutes.is_multiple_of(STEP_MINUTES) || !1440usize.is_multiple_of(bin_minutes) {
        return Err(MetricsError::BinWidth(bin_minutes));
    }
    let mut bins = vec![0u64; 1440 / bin_minutes];
    for r in records.iter().filter(|r| r.is_blackout) {
        bins[(r.step % STEPS_PER_DAY) * STEP_MINUTES / bin_minutes] += 1;
    }
    Ok(bins)
}

/// Blackout counts keyed by the number of overloaded lines.
pub fn overload_histogram(records: &[BlackoutRecord]) -> BTreeMap<usize, u64> {
    let mut hist = BTreeMap::new();
    for r in records.iter().filter(|r| r.is_blackout) {
        *hist.entry(r.n_overloaded_lines).or_insert(0) += 1;
    }
    hist
}

/// Local maxima of a histogram (ties broken toward the lower bin) whose
/// counts reach `min_fraction` of the largest bin.
pub fn histogram_modes(hist: &BTreeMap<usize, u64>, min_fraction: f64) -> Vec<usize> {
    let top = hist.values().copied().max().unwrap_or(0);
    if top == 0 {
        return Vec::new();
    }
    let max_key = *hist.keys().next_back().unwrap();
    let at = |k: usize| hist.get(&k).copied().unwrap_or(0);
    (0..=max_key)
        .filter(|&k| {
            let c = at(k);
            c > 0
                && c as f64 >= min_fraction * top as f64
                && (k == 0 || c > at(k - 1))
                && c >= at(k + 1)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunStatistics {
    pub days: u32,
    pub blackout_count: usize,
    pub blackout_frequency: f64,
    pub mean_blackout_size: Option<f64>,
    pub rank: RankFunction,
    pub intraday_histogram: Vec<u64>,
    pub overload_histogram: BTreeMap<usize, u64>,
    pub mean_stress: Option<f64>,
}

impl RunStatistics {
    /// Statistics over `records` spanning `days` days; `records` must
    /// already be restricted to the statistics window.
    pub fn compute(
        records: &[BlackoutRecord],
        days: u32,
        mean_stress: Option<f64>,
        fit: &TailFit,
        bin_minutes: usize,
    ) -> Result<Self, MetricsError> {
        let sizes: Vec<f64> = records.iter().filter(|r| r.is_blackout).map(|r| r.size()).collect();
        let mean_blackout_size = (!sizes.is_empty()).then(|| sizes.iter().sum::<f64>() / sizes.len() as f64);
        Ok(RunStatistics {
            days,
            blackout_count: sizes.len(),
            blackout_frequency: blackout_frequency(records, days),
            mean_blackout_size,
            rank: rank_function(&sizes, fit),
            intraday_histogram: intraday_histogram(records, bin_minutes)?,
            overload_histogram: overload_histogram(records),
            mean_stress,
        })
    }

    /// `key<TAB>value` lines; absent values are written as `NA`.
    pub fn write_summary<W: Write>(&self, mut out: W) -> Result<(), MetricsError> {
        let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| v.to_string());
        writeln!(out, "days\t{}", self.days)?;
        writeln!(out, "blackout_count\t{}", self.blackout_count)?;
        writeln!(out, "blackout_frequency\t{}", self.blackout_frequency)?;
        writeln!(out, "mean_blackout_size\t{}", opt(self.mean_blackout_size))?;
        writeln!(out, "tail_exponent\t{}", opt(self.rank.tail_exponent))?;
        writeln!(out, "mean_stress\t{}", opt(self.mean_stress))?;
        Ok(())
    }

    pub fn write_rank_table<W: Write>(&self, mut out: W) -> Result<(), MetricsError> {
        writeln!(out, "rank\tsize")?;
        for (r, s) in &self.rank.points {
            writeln!(out, "{r}\t{s}")?;
        }
        Ok(())
    }

    pub fn write_intraday_table<W: Write>(&self, mut out: W) -> Result<(), MetricsError> {
        writeln!(out, "bin_start_minute\tblackouts")?;
        let width = 1440 / self.intraday_histogram.len().max(1);
        for (i, c) in self.intraday_histogram.iter().enumerate() {
            writeln!(out, "{}\t{c}", i * width)?;
        }
        Ok(())
    }

    pub fn write_overload_table<W: Write>(&self, mut out: W) -> Result<(), MetricsError> {
        writeln!(out, "overloaded_lines\tblackouts")?;
        for (k, c) in &self.overload_histogram {
            writeln!(out, "{k}\t{c}")?;
        }
        Ok(())
    }
}
