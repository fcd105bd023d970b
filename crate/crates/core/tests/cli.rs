use std::process::{Command, Output};

use partids::harness::report::CSV_HEADER;

fn partids(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_partids")).args(args).output().expect("spawn partids")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const RULES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/community_sample.rules");

#[test]
fn run_synth_prints_csv_report() {
    let o = partids(&["run", "--synth", "128,32", "--count", "5000", "--rules", RULES, "--report", "csv"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    let total = out.lines().last().unwrap();
    assert!(total.starts_with("total,,,5000,"), "{total}");
}

#[test]
fn gen_then_replay_with_fast_alerts() {
    let dir = tempfile::tempdir().unwrap();
    let pcap = dir.path().join("attack.pcap");
    let alerts = dir.path().join("alerts.txt");
    let pcap_s = pcap.to_str().unwrap();
    let o = partids(&["gen", "--synth", "256,16", "--count", "2000", "--attack-rate", "0.01", "--out", pcap_s]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("wrote 2000 frames"));

    let info = stdout(&partids(&["pcap-info", pcap_s]));
    assert!(info.contains("packets:     2000"), "{info}");

    let o = partids(&[
        "run",
        "--pcap",
        pcap_s,
        "--rules",
        RULES,
        "--alert",
        "fast",
        "--alert-file",
        alerts.to_str().unwrap(),
        "--inline",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&alerts).unwrap();
    assert!(!text.is_empty());
    assert!(text.lines().all(|l| l.contains("[1:30514:9]")), "{text}");
    assert!(stdout(&o).contains("Packets blocked:"));
}

#[test]
fn rules_check_reports_skipped_lines() {
    let o = partids(&["rules", "check", RULES]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("rules loaded, 3 skipped"), "{out}");
}

#[test]
fn config_file_is_applied_and_validated() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.toml");
    std::fs::write(&good, "[engine]\nthreads = 2\ninline = true\n").unwrap();
    let o = partids(&["run", "--synth", "64,8", "--count", "1000", "--config", good.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[engine]\nthreadz = 2\n").unwrap();
    let o = partids(&["run", "--synth", "64,8", "--config", bad.to_str().unwrap()]);
    assert!(!o.status.success());
}

#[test]
fn bad_input_fails_with_nonzero_exit() {
    assert!(!partids(&["run"]).status.success());
    assert!(!partids(&["run", "--synth", "64"]).status.success());
    assert!(!partids(&["pcap-info", "/nonexistent.pcap"]).status.success());
    assert!(!partids(&["run", "--synth", "64,8", "--clock", "sundial"]).status.success());
}
