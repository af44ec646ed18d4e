use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use opa_core::grid::generate_synthetic;
use opa_core::harness::{read_records, run_simulation, run_sweep, statistics_window, SimConfig, SweepAxis};
use opa_core::metrics::{RunStatistics, TailFit};

#[derive(Parser)]
#[command(name = "opa", version, about = "Cascading blackout simulator with intraday demand and demand control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ControlMode {
    /// Use the config's `control_enabled`.
    Config,
    On,
    Off,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write records, summary and tables.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep burst amplitude (`b:0,0.1,...`) or a constant b·p3 product
    /// (`bp3:<product>:<p3>,<p3>,...`).
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        axis: String,
        #[arg(long, default_value_t = 1)]
        replicas: u32,
        #[arg(long, value_enum, default_value = "config")]
        control: ControlMode,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic grid file.
    GenGrid {
        #[arg(long)]
        nodes: usize,
        #[arg(long)]
        gens: usize,
        #[arg(long)]
        lines: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute statistics from a records file.
    Stats {
        #[arg(long)]
        records: PathBuf,
        /// Days covered by the records; defaults to the last recorded day + 1.
        #[arg(long)]
        days: Option<u32>,
        #[arg(long, default_value_t = 0)]
        warmup_days: u32,
        #[arg(long, default_value_t = 60)]
        bin_minutes: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn create(path: &PathBuf) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate { config, out } => {
            let cfg = SimConfig::load(&config)?;
            let output = run_simulation(&cfg)?;
            output.write_to(&out)?;
            let s = &output.statistics;
            println!(
                "{} blackouts over {} days ({:.4}/day), mean stress {}",
                s.blackout_count,
                s.days,
                s.blackout_frequency,
                s.mean_stress.map_or("NA".into(), |m| format!("{m:.4}"))
            );
        }
        Command::Sweep { config, axis, replicas, control, out } => {
            let cfg = SimConfig::load(&config)?;
            let axis = SweepAxis::parse(&axis, cfg.p3)?;
            let controls = match control {
                ControlMode::Config => vec![cfg.control_enabled],
                ControlMode::On => vec![true],
                ControlMode::Off => vec![false],
                ControlMode::Both => vec![false, true],
            };
            let table = run_sweep(&cfg, &axis, replicas, &controls)?;
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let path = out.join("sweep.tsv");
            let mut w = create(&path)?;
            table.write(&mut w)?;
            w.flush()?;
            println!("{} rows written to {}", table.rows.len(), path.display());
        }
        Command::GenGrid { nodes, gens, lines, seed, out } => {
            let grid = generate_synthetic(nodes, gens, lines, seed)?;
            let mut w = create(&out)?;
            grid.save(&mut w)?;
            w.flush()?;
        }
        Command::Stats { records, days, warmup_days, bin_minutes, out } => {
            let file = File::open(&records).with_context(|| format!("opening {}", records.display()))?;
            let all = read_records(BufReader::new(file))?;
            let days = match days {
                Some(d) => d,
                None => all.iter().map(|r| r.day + 1).max().unwrap_or(0),
            };
            if days <= warmup_days {
                bail!("days ({days}) must exceed warmup_days ({warmup_days})");
            }
            let window = statistics_window(&all, warmup_days);
            let stats = RunStatistics::compute(&window, days - warmup_days, None, &TailFit::default(), bin_minutes)?;
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            stats.write_summary(create(&out.join("summary.txt"))?)?;
            stats.write_rank_table(create(&out.join("rank.tsv"))?)?;
            stats.write_intraday_table(create(&out.join("intraday.tsv"))?)?;
            stats.write_overload_table(create(&out.join("overload.tsv"))?)?;
        }
    }
    Ok(())
}
