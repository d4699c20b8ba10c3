use adhoc_cloud::check::check_run;
use adhoc_cloud::config::{ConfigError, NodeOverride, PowerMode, ScenarioConfig, Scheme, PRESETS};
use adhoc_cloud::metrics::write_csv;
use adhoc_cloud::trace::TraceEvent;
use adhoc_cloud::world::{run_scenario, RunError, RunOutput};

fn short(preset: &str, scheme: Scheme, seed: u64, tasks: usize) -> ScenarioConfig {
    let mut c = ScenarioConfig::preset(preset)
        .unwrap()
        .with_run(scheme, PowerMode::Multi, seed, tasks);
    c.sim_time_s = 1200.0;
    c.workload.arrival_window_s = 600.0;
    c
}

fn run(cfg: &ScenarioConfig) -> RunOutput {
    run_scenario(cfg).expect("scenario runs")
}

fn csv_bytes(out: &RunOutput) -> Vec<u8> {
    let mut b = Vec::new();
    write_csv(std::slice::from_ref(&out.metrics), &mut b).unwrap();
    b
}

#[test]
fn empty_workload_still_runs_protocol() {
    for scheme in Scheme::ALL {
        let out = run(&short("s1", scheme, 3, 0));
        let m = &out.metrics;
        assert_eq!(m.atct_s, 0.0);
        assert_eq!(m.data_packets, 0);
        assert_eq!(m.tasks_submitted, 0);
        assert!(m.control_packets > 0, "{}", scheme.label());
        assert!(check_run(&out).is_empty());
    }
}

#[test]
fn same_seed_gives_identical_output() {
    let cfg = short("s2", Scheme::Proposed, 11, 15);
    let (a, b) = (run(&cfg), run(&cfg));
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(csv_bytes(&a), csv_bytes(&b));
    let (mut ta, mut tb) = (Vec::new(), Vec::new());
    a.trace.write_to(&mut ta).unwrap();
    b.trace.write_to(&mut tb).unwrap();
    assert!(ta == tb, "traces differ");
}

#[test]
fn different_seeds_differ() {
    let a = run(&short("s1", Scheme::Proposed, 1, 10));
    let b = run(&short("s1", Scheme::Proposed, 2, 10));
    assert_ne!(a.trace.positions(), b.trace.positions());
}

#[test]
fn paired_runs_share_mobility() {
    for preset in PRESETS {
        let outs: Vec<RunOutput> = Scheme::ALL.iter().map(|&s| run(&short(preset, s, 5, 10))).collect();
        let base = outs[0].trace.positions();
        assert!(!base.is_empty());
        for o in &outs[1..] {
            assert_eq!(o.trace.positions(), base, "{preset} {}", o.metrics.scheme);
        }
        let mut max_only = short(preset, Scheme::Proposed, 5, 10);
        max_only.power_mode = PowerMode::MaxOnly;
        assert_eq!(run(&max_only).trace.positions(), base, "{preset} max-only");
    }
}

#[test]
fn paired_runs_share_workload() {
    let a = run(&short("s3", Scheme::Hta, 8, 12));
    let b = run(&short("s3", Scheme::Minhop, 8, 12));
    assert_eq!(a.tasks, b.tasks);
}

#[test]
fn metric_sums_match_trace() {
    for preset in PRESETS {
        for scheme in Scheme::ALL {
            let out = run(&short(preset, scheme, 2, 12));
            let m = &out.metrics;
            let completions: Vec<f64> = out.completion_s.iter().flatten().copied().collect();
            assert_eq!(completions.len(), m.tasks_completed);
            let atct: f64 = completions.iter().sum();
            assert!((atct - m.atct_s).abs() <= 1e-9 * atct.max(1.0), "{preset} {}", m.scheme);
            let energy: f64 = out.trace.iter().map(TraceEvent::energy_j).sum();
            assert!((energy - m.tx_energy_j).abs() <= 1e-9 * energy.max(1.0));
            let violations = check_run(&out);
            assert!(violations.is_empty(), "{preset} {}: {}", m.scheme, violations[0]);
        }
    }
}

#[test]
fn every_task_is_accounted_for() {
    let out = run(&short("s2", Scheme::Proposed, 4, 25));
    let m = &out.metrics;
    assert_eq!(m.tasks_submitted, 25);
    assert_eq!(m.tasks_completed + m.tasks_failed + m.tasks_in_system, m.tasks_submitted);
}

#[test]
fn max_only_transmits_at_full_power() {
    let mut cfg = short("s4", Scheme::Proposed, 6, 10);
    let multi = run(&cfg);
    cfg.power_mode = PowerMode::MaxOnly;
    let max = run(&cfg);
    let top = cfg.radio.max_level();
    for e in max.trace.iter() {
        if let TraceEvent::Packet { level, .. } | TraceEvent::PacketBatch { level, .. } = e {
            assert_eq!(*level, top);
        }
    }
    let mut multi_levels = std::collections::BTreeSet::new();
    for e in multi.trace.iter() {
        if let TraceEvent::Packet { level, .. } = e {
            multi_levels.insert(*level);
        }
    }
    assert!(multi_levels.len() > 1);
    assert!(max.metrics.tx_energy_j > multi.metrics.tx_energy_j);
}

#[test]
fn low_battery_providers_hand_over_work() {
    let mut cfg = short("s1", Scheme::Proposed, 1, 20);
    let providers: Vec<usize> = (0..cfg.node_count)
        .filter(|n| *n != cfg.roles.smn && !cfg.roles.scns.contains(n))
        .collect();
    for &node in providers.iter().step_by(2) {
        cfg.node_overrides.push(NodeOverride {
            node,
            battery_j: Some(30.0),
            ..NodeOverride::default()
        });
    }
    let out = run(&cfg);
    let migrated = out
        .trace
        .iter()
        .filter(|e| matches!(e, TraceEvent::Migration { ok: true, .. }))
        .count();
    assert!(migrated > 0, "no migration happened");
    assert_eq!(out.metrics.migrations as usize, migrated);
    let violations = check_run(&out);
    assert!(violations.is_empty(), "{}", violations[0]);
}

#[test]
fn invalid_config_is_rejected_before_running() {
    let mut cfg = short("s1", Scheme::Proposed, 1, 5);
    cfg.roles.scns.push(cfg.node_count + 3);
    match run_scenario(&cfg) {
        Err(RunError::Config(ConfigError::UnknownNode(n))) => assert_eq!(n, cfg.node_count + 3),
        other => panic!("expected unknown node, got {:?}", other.map(|o| o.metrics)),
    }
    let mut cfg = short("s1", Scheme::Proposed, 1, 5);
    cfg.channel.header_bytes = cfg.channel.packet_bytes;
    assert!(matches!(run_scenario(&cfg), Err(RunError::Config(_))));
}

#[test]
fn json_config_round_trips() {
    let cfg = short("s4", Scheme::Minhop, 9, 7);
    let text = serde_json::to_string_pretty(&cfg).unwrap();
    assert_eq!(ScenarioConfig::from_json(&text).unwrap(), cfg);
    assert!(ScenarioConfig::from_json(r#"{"sed": 1}"#).is_err());
}
