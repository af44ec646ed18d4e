use std::io::Write;

use rayon::prelude::*;

use super::{replica_config, run_simulation, HarnessError, SimConfig, SimOutput};

#[derive(Debug, Clone, PartialEq)]
pub enum SweepAxis {
    /// Burst amplitudes at the base `p3`.
    B(Vec<f64>),
    /// `(b, p3)` pairs with `b·p3 = product`. Each point is compared with a
    /// run at the same `b` and `p3 = reference_p3`.
    ConstantProduct { product: f64, p3_values: Vec<f64>, reference_p3: f64 },
}

impl SweepAxis {
    /// Parses `b:0,0.05,0.1` or `bp3:<product>:<p3>,<p3>,...`; the
    /// reference `p3` of the latter is `base_p3`.
    pub fn parse(spec: &str, base_p3: f64) -> Result<Self, HarnessError> {
        let bad = || HarnessError::Config(format!("bad sweep axis `{spec}`"));
        let list = |s: &str| -> Result<Vec<f64>, HarnessError> {
            let v: Result<Vec<f64>, _> = s.split(',').map(|x| x.trim().parse::<f64>()).collect();
            v.map_err(|_| bad()).and_then(|v| if v.is_empty() { Err(bad()) } else { Ok(v) })
        };
        let (kind, rest) = spec.split_once(':').ok_or_else(bad)?;
        match kind.trim() {
            "b" => Ok(SweepAxis::B(list(rest)?)),
            "bp3" => {
                let (product, values) = rest.split_once(':').ok_or_else(bad)?;
                let product: f64 = product.trim().parse().map_err(|_| bad())?;
                Ok(SweepAxis::ConstantProduct { product, p3_values: list(values)?, reference_p3: base_p3 })
            }
            _ => Err(bad()),
        }
    }

    pub fn points(&self, base: &SimConfig) -> Vec<SweepPoint> {
        match self {
            SweepAxis::B(values) => values.iter().map(|&b| SweepPoint { b, p3: base.p3 }).collect(),
            SweepAxis::ConstantProduct { product, p3_values, .. } => {
                p3_values.iter().map(|&p3| SweepPoint { b: product / p3, p3 }).collect()
            }
        }
    }

    fn validate(&self) -> Result<(), HarnessError> {
        let empty = match self {
            SweepAxis::B(v) => v.is_empty(),
            SweepAxis::ConstantProduct { p3_values, .. } => p3_values.is_empty(),
        };
        if empty {
            return Err(HarnessError::Config("sweep axis has no points".into()));
        }
        if let SweepAxis::ConstantProduct { p3_values, .. } = self {
            if p3_values.iter().any(|&p| p <= 0.0) {
                return Err(HarnessError::Config("constant-product sweep needs p3 > 0".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub b: f64,
    pub p3: f64,
}

/// Aggregated replicas of one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub point: SweepPoint,
    pub control: bool,
    pub frequencies: Vec<f64>,
    pub mean_frequency: f64,
    pub mean_size: Option<f64>,
    pub mean_stress: Option<f64>,
    /// Mean frequency at the same `b` and the reference `p3`.
    pub reference_frequency: Option<f64>,
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| v.to_string());
        writeln!(out, "b\tp3\tcontrol\treplicas\tmean_frequency\tsd_frequency\tmean_size\tmean_stress\treference_frequency\tratio")?;
        for r in &self.rows {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.point.b,
                r.point.p3,
                u8::from(r.control),
                r.frequencies.len(),
                r.mean_frequency,
                sd(&r.frequencies),
                opt(r.mean_size),
                opt(r.mean_stress),
                opt(r.reference_frequency),
                opt(r.ratio)
            )?;
        }
        Ok(())
    }
}

fn sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Per-run scalars kept by a sweep.
#[derive(Debug, Clone, Copy)]
struct RunSummary {
    frequency: f64,
    size: Option<f64>,
    stress: Option<f64>,
}

impl From<&SimOutput> for RunSummary {
    fn from(o: &SimOutput) -> Self {
        RunSummary {
            frequency: o.statistics.blackout_frequency,
            size: o.statistics.mean_blackout_size,
            stress: o.statistics.mean_stress,
        }
    }
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Runs every (point, control mode, replica) and aggregates in that order.
pub fn run_sweep(
    base: &SimConfig,
    axis: &SweepAxis,
    replicas: u32,
    controls: &[bool],
) -> Result<SweepTable, HarnessError> {
    axis.validate()?;
    if replicas == 0 || controls.is_empty() {
        return Err(HarnessError::Config("sweep needs at least one replica and one control mode".into()));
    }
    let points = axis.points(base);
    let reference_p3 = match axis {
        SweepAxis::ConstantProduct { reference_p3, .. } => Some(*reference_p3),
        SweepAxis::B(_) => None,
    };
    // Distinct run configurations: sweep points first, then any reference
    // points not already among them.
    let mut configs: Vec<(SweepPoint, bool)> = Vec::new();
    for &control in controls {
        for &p in &points {
            configs.push((p, control));
        }
    }
    let n_main = configs.len();
    if let Some(p3_ref) = reference_p3 {
        for i in 0..n_main {
            let (p, control) = configs[i];
            let reference = SweepPoint { b: p.b, p3: p3_ref };
            if !configs.contains(&(reference, control)) {
                configs.push((reference, control));
            }
        }
    }
    let jobs: Vec<(usize, u32)> = (0..configs.len()).flat_map(|c| (0..replicas).map(move |r| (c, r))).collect();
    let results: Result<Vec<RunSummary>, HarnessError> = jobs
        .par_iter()
        .map(|&(c, r)| {
            let (p, control) = configs[c];
            let cfg = SimConfig { b: p.b, p3: p.p3, control_enabled: control, ..replica_config(base, r) };
            run_simulation(&cfg).map(|o| RunSummary::from(&o))
        })
        .collect();
    let results = results?;
    let per_config: Vec<&[RunSummary]> = results.chunks(replicas as usize).collect();
    let mean_freq = |c: usize| per_config[c].iter().map(|s| s.frequency).sum::<f64>() / replicas as f64;

    let rows = (0..n_main)
        .map(|c| {
            let (point, control) = configs[c];
            let runs = per_config[c];
            let mean_frequency = mean_freq(c);
            let reference_frequency = reference_p3.map(|p3| {
                let idx = configs
                    .iter()
                    .position(|&(q, k)| k == control && q == SweepPoint { b: point.b, p3 })
                    .expect("reference run scheduled");
                mean_freq(idx)
            });
            SweepRow {
                point,
                control,
                frequencies: runs.iter().map(|s| s.frequency).collect(),
                mean_frequency,
                mean_size: mean_of(runs.iter().map(|s| s.size)),
                mean_stress: mean_of(runs.iter().map(|s| s.stress)),
                reference_frequency,
                ratio: reference_frequency.and_then(|f0| (f0 > 0.0).then(|| mean_frequency / f0)),
            }
        })
        .collect();
    Ok(SweepTable { rows })
}
