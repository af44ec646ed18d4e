use opa_core::demand::{nodal_demand, IntradayProfile, STEPS_PER_DAY};
use opa_core::grid::{generate_synthetic, Grid};
use opa_core::harness::{run_simulation, simulate, write_records, BurstStorage, OutageCadence, SimConfig};
use proptest::prelude::*;

fn small(days: u32) -> SimConfig {
    SimConfig { grid_nodes: 16, grid_generators: 4, grid_lines: 22, days, warmup_days: 0, ..Default::default() }
}

fn records_bytes(cfg: &SimConfig) -> Vec<u8> {
    let out = run_simulation(cfg).unwrap();
    let mut buf = Vec::new();
    write_records(&out.records, &mut buf).unwrap();
    buf
}

#[test]
fn same_seeds_give_identical_records() {
    let cfg = SimConfig { p0: 0.3, b: 0.2, p3: 0.002, control_enabled: true, ..small(20) };
    let a = records_bytes(&cfg);
    assert!(a.len() > 100);
    assert_eq!(a, records_bytes(&cfg));
}

#[test]
fn burst_stream_does_not_touch_other_streams_at_zero_amplitude() {
    let cfg = SimConfig { p0: 0.3, b: 0.0, p3: 0.01, ..small(15) };
    let other = SimConfig { seed_bursts: 999, ..cfg.clone() };
    assert_eq!(records_bytes(&cfg), records_bytes(&other));
}

#[test]
fn initiating_outages_ignore_burst_seed_when_cascades_are_off() {
    let cfg = SimConfig { p0: 0.3, p1: 0.0, b: 0.3, p3: 0.005, ..small(15) };
    let other = SimConfig { seed_bursts: 12345, ..cfg.clone() };
    let key = |c: &SimConfig| -> Vec<(u32, usize, usize)> {
        run_simulation(c)
            .unwrap()
            .records
            .iter()
            .filter(|r| r.n_failed_lines > 0)
            .map(|r| (r.day, r.step, r.n_failed_lines))
            .collect()
    };
    let a = key(&cfg);
    assert!(!a.is_empty());
    assert_eq!(a, key(&other));
}

#[test]
fn control_thresholds_hold_every_step() {
    let cfg = SimConfig {
        b: 0.3,
        p3: 0.01,
        p4: 0.01,
        control_enabled: true,
        step_diagnostics: true,
        ..small(6)
    };
    let out = run_simulation(&cfg).unwrap();
    assert_eq!(out.steps.len(), 6 * STEPS_PER_DAY);
    let mut postponed = 0;
    let mut recovered = 0;
    for s in &out.steps {
        let day = &out.daily[s.day as usize];
        assert!(day.pl2 < day.pl1);
        if s.scheduled_demand > day.pl1 {
            assert_eq!(s.applied, 0, "burst applied above pl1 at {}:{}", s.day, s.step);
        } else {
            assert_eq!(s.postponed, 0);
        }
        if s.scheduled_demand >= day.pl2 {
            assert_eq!(s.recovered, 0, "recovery above pl2 at {}:{}", s.day, s.step);
        }
        postponed += s.postponed;
        recovered += s.recovered;
    }
    assert!(postponed > 0 && recovered > 0);
    assert!(out.bursts.balances(out.pending_at_end));
}

#[test]
fn control_moves_burst_power_off_peak() {
    let base = SimConfig { b: 0.3, p3: 0.01, p4: 0.01, ..small(8) };
    let off = run_simulation(&base).unwrap();
    let on = run_simulation(&SimConfig { control_enabled: true, ..base.clone() }).unwrap();
    let profile = IntradayProfile::two_peak();
    let peak_steps: Vec<usize> = (0..STEPS_PER_DAY).filter(|&s| profile.samples()[s] > 0.85 * profile.peak()).collect();
    let share = |v: &[f64]| peak_steps.iter().map(|&s| v[s]).sum::<f64>() / v.iter().sum::<f64>();
    assert!(share(&on.burst_power_by_step) < 0.01);
    assert!(share(&off.burst_power_by_step) > 0.05);
}

#[test]
fn daily_cadence_runs() {
    let cfg = SimConfig { p0: 0.3, p1: 0.0, initiating_outage_cadence: OutageCadence::PerDay, ..small(10) };
    let out = run_simulation(&cfg).unwrap();
    let mut per_day = std::collections::BTreeMap::new();
    for r in out.records.iter().filter(|r| r.n_failed_lines > 0) {
        per_day.entry(r.day).or_insert_with(Vec::new).push(r.step);
    }
    assert!(!per_day.is_empty());
    assert!(per_day.values().all(|steps| steps.len() == 1));
}

#[test]
fn flat_profile_without_triggers_is_quiet() {
    let cfg = SimConfig { p0: 0.0, p3: 0.0, lambda_bar: 1.0, gamma: 0.0, ..small(4) };
    let grid = opa_core::harness::build_grid(&cfg).unwrap();
    let out = simulate(&cfg, grid.clone(), &IntradayProfile::flat()).unwrap();
    assert!(out.records.is_empty());
    assert_eq!(out.final_grid.to_text(), grid.to_text());
}

fn arb_config() -> impl Strategy<Value = SimConfig> {
    (
        (1u32..5000, 0.0f64..1e-3, 0.0f64..0.5, 0.0f64..0.01, 0.0f64..1.0),
        (any::<bool>(), 0.5f64..0.95, any::<bool>(), any::<bool>(), any::<u64>()),
        (1.0f64..1.01, 1.0f64..1.2, 0usize..5),
    )
        .prop_map(|((days, p0, p1, p3, b), (ctrl, f1, cad, abs, seed), (lambda_bar, mu, bin))| SimConfig {
            days,
            warmup_days: days / 3,
            p0,
            p1,
            p3,
            b,
            control_enabled: ctrl,
            control_f1: f1,
            control_f2: f1 * 0.9,
            initiating_outage_cadence: if cad { OutageCadence::PerDay } else { OutageCadence::PerStep },
            postponed_burst_storage: if abs { BurstStorage::Absolute } else { BurstStorage::Relative },
            seed_bursts: seed & opa_core::harness::MAX_SEED,
            lambda_bar,
            mu,
            intraday_bin_minutes: [5, 15, 30, 60, 120][bin],
            ..SimConfig::default()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_toml_roundtrip(cfg in arb_config()) {
        let text = cfg.to_toml();
        prop_assert_eq!(SimConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn grid_text_roundtrip(n in 4usize..30, extra in 0usize..15, seed in any::<u64>()) {
        let gens = 1 + n / 5;
        let lines = (n - 1 + extra).min(n * (n - 1) / 2);
        let grid = generate_synthetic(n, gens, lines, seed).unwrap();
        let text = grid.to_text();
        let back = Grid::load(text.as_bytes()).unwrap();
        prop_assert_eq!(back, grid);
    }

    #[test]
    fn demand_is_a_product(load in 0.0f64..100.0, m in 0.1f64..3.0, growth in 0.5f64..3.0, day in 0.9f64..1.1) {
        let node = opa_core::grid::Node::load(0, load);
        let d = nodal_demand(&node, m, growth, day);
        prop_assert!((d - load * m * growth * day).abs() <= 1e-12 * d.abs().max(1.0));
        let doubled = nodal_demand(&opa_core::grid::Node::load(0, 2.0 * load), m, growth, day);
        prop_assert!((doubled - 2.0 * d).abs() <= 1e-12 * d.abs().max(1.0));
    }
}

#[test]
fn shipped_configs_parse() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            SimConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 2);
}
