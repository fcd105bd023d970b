use std::sync::{Arc, Mutex};

use partids::acquire::PacketSource;
use partids::harness::{
    gen_synth, pcap_read, pcap_write, run_experiment, AlertOutput, EngineConfig, WorkloadSpec, HEARTBLEED_SID,
};
use partids::rules::{load_ruleset, CompiledRuleSet, Variables, HEARTBLEED_RULE};

fn heartbleed_rules() -> Arc<CompiledRuleSet> {
    Arc::new(CompiledRuleSet::compile(&load_ruleset(HEARTBLEED_RULE).rules, &Variables::new()))
}

#[test]
fn pcap_round_trip_preserves_frames_and_timestamps() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.pcap");
    let spec = WorkloadSpec::synth(200, 16, 500).with_seed(3);
    let mut gen = gen_synth(&spec).unwrap();
    let mut frames = Vec::new();
    while let Some(f) = gen.next_frame() {
        frames.push(f.to_vec());
    }
    let written = pcap_write(&path, frames.iter().enumerate().map(|(i, f)| (i as u64 * 7, f.as_slice()))).unwrap();
    assert_eq!(written, 500);
    let back = pcap_read(&path).unwrap();
    assert_eq!(back.len(), frames.len());
    for (i, (p, f)) in back.iter().zip(&frames).enumerate() {
        assert_eq!(p.ts_us, i as u64 * 7);
        assert_eq!(&p.data, f);
        assert_eq!(p.orig_len as usize, f.len());
    }
}

#[test]
fn simulated_runs_are_repeatable() {
    let cfg = EngineConfig { rules: heartbleed_rules(), ..EngineConfig::default() };
    let spec = WorkloadSpec::synth(128, 64, 20_000).with_seed(5).with_attack(HEARTBLEED_SID, 0.01);
    let a = run_experiment(&spec, &cfg).unwrap();
    let b = run_experiment(&spec, &cfg).unwrap();
    assert_eq!(a, b);
    assert!(a.totals.alerts > 0);
}

#[test]
fn duration_sets_interval_count() {
    let cfg = EngineConfig { line_rate_bps: 1e8, ..EngineConfig::default() };
    let spec = WorkloadSpec::synth(256, 32, u64::MAX).with_duration(7.5);
    let r = run_experiment(&spec, &cfg).unwrap();
    assert_eq!(r.intervals.len(), 3);
    assert!(r.intervals.iter().enumerate().all(|(i, s)| s.index == i && s.start_s == i as f64 * 3.0));
    let per_interval: u64 = r.intervals.iter().map(|i| i.received).sum();
    assert_eq!(per_interval, r.totals.received);
}

#[test]
fn inline_mode_blocks_attack_packets() {
    let alerts = Arc::new(Mutex::new(Vec::new()));
    let cfg = EngineConfig {
        rules: heartbleed_rules(),
        inline: true,
        alerts: AlertOutput::Memory(alerts.clone()),
        ..EngineConfig::default()
    };
    let spec = WorkloadSpec::synth(128, 64, 10_000).with_attack(HEARTBLEED_SID, 0.02);
    let r = run_experiment(&spec, &cfg).unwrap();
    assert!(r.totals.blocked > 0);
    assert_eq!(r.totals.blocked, r.totals.alerts);
    assert_eq!(alerts.lock().unwrap().len() as u64, r.totals.alerts);
    assert_eq!(r.totals.tx_sent, r.totals.allowed);
}

#[test]
fn useless_mode_analyzes_nothing_but_accounts_everything() {
    let cfg = EngineConfig { rules: heartbleed_rules(), useless: true, ..EngineConfig::default() };
    let spec = WorkloadSpec::synth(64, 64, 10_000).with_attack(HEARTBLEED_SID, 0.05);
    let r = run_experiment(&spec, &cfg).unwrap();
    assert_eq!(r.totals.alerts, 0);
    assert!(r.check_conservation().is_ok());
}

#[test]
fn invalid_configs_are_rejected() {
    let spec = WorkloadSpec::synth(64, 4, 10);
    let zero = EngineConfig { threads: 0, ..EngineConfig::default() };
    assert!(run_experiment(&spec, &zero).is_err());
    assert!(run_experiment(&WorkloadSpec::synth(10, 4, 10), &EngineConfig::default()).is_err());
    assert!(run_experiment(&WorkloadSpec::pcap("/nonexistent/x.pcap"), &EngineConfig::default()).is_err());
}
