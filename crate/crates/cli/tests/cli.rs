use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use slack_clearing_cli::{exit, Manifest};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_slackclear"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(sub: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin()
        .arg(sub)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn value(cell: &str) -> f64 {
    cell.parse().unwrap()
}

#[test]
fn clear_worked_example() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"entitlements": [10, 10, 10], "clear": {"profiles": [[12, 15, 4]]}}"#,
    );
    let out = tmp.path().join("out");
    let o = run("clear", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(exit::OK), "{}", String::from_utf8_lossy(&o.stderr));

    let rows = read_csv(&out.join("clear.csv"));
    let payoff = rows[0].iter().position(|h| h == "payoff").unwrap();
    let expected = [82.0 / 7.0, 100.0 / 7.0, 4.0];
    for (row, want) in rows[1..].iter().zip(expected) {
        assert!((value(&row[payoff]) - want).abs() < 1e-9);
    }
    let summary = read_csv(&out.join("clear_summary.csv"));
    let lambda = summary[0].iter().position(|h| h == "lambda").unwrap();
    assert!((value(&summary[1][lambda]) - 1.0 / 7.0).abs() < 1e-11);
    assert_eq!(summary[1][4], "scarcity");
    for f in ["manifest.json", "results.json"] {
        assert!(out.join(f).exists());
    }
}

#[test]
fn compare_reports_cea_shortfall() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"compare": {"problems": [{"claims": [1, 100, 100], "entitlements": [10, 10, 10], "estate": 2}]}}"#,
    );
    let out = tmp.path().join("out");
    assert_eq!(run("compare", &cfg, &out, &[]).status.code(), Some(exit::OK));
    let rows = read_csv(&out.join("awards.csv"));
    let cea_first = rows.iter().find(|r| r[1] == "cea" && r[2] == "0").unwrap();
    assert!((value(&cea_first[6]) - 2.0 / 3.0).abs() < 1e-11);
    let violations = read_csv(&out.join("nls_violations.csv"));
    assert!(violations.iter().any(|r| r[1] == "cea" && r[2] == "0"));
    assert!(violations.iter().all(|r| r[1] != "slack_clearing"));
}

#[test]
fn empty_claims_fail_validation() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"entitlements": [10, 10], "clear": {"profiles": [[]]}}"#);
    let o = run("clear", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(exit::INVALID_INPUT));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("$.clear.profiles[0]"), "{err}");
}

#[test]
fn missing_seed_fails_validation() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"entitlements": [1, 2], "bound": 5, "dominance": {"trials": 3}}"#,
    );
    let o = run("dominance", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(exit::INVALID_INPUT));
    let o = run("dominance", &cfg, &tmp.path().join("out"), &["--seed", "4"]);
    assert_eq!(o.status.code(), Some(exit::OK));
}

#[test]
fn malformed_json_reports_field_path() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"entitlements": [1, "two"]}"#);
    let o = run("clear", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(exit::INVALID_INPUT));
    assert!(String::from_utf8_lossy(&o.stderr).contains("$.entitlements[1]"));
}

#[test]
fn search_cap_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"entitlements": [1, 1, 1], "bound": 2, "coalition": {"grid_size": 50, "cap": 1000}}"#,
    );
    let o = run("coalition", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(exit::INVALID_INPUT));
}

#[test]
fn missing_config_file_is_a_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run("clear", &tmp.path().join("nope.json"), &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(exit::FAILURE));
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv" || x == "log"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn every_example_config_is_deterministic() {
    for sub in ["clear", "dominance", "coalition", "boundary", "policy", "compare"] {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = configs().join(format!("{sub}.json"));
        let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
        assert_eq!(run(sub, &cfg, &a, &[]).status.code(), Some(exit::OK), "{sub}");
        assert_eq!(run(sub, &cfg, &b, &[]).status.code(), Some(exit::OK), "{sub}");
        let (fa, fb) = (csv_files(&a), csv_files(&b));
        assert!(!fa.is_empty(), "{sub}");
        assert_eq!(fa, fb, "{sub}");
        assert_eq!(fs::read(a.join("results.json")).unwrap(), fs::read(b.join("results.json")).unwrap());
    }
}

#[test]
fn manifest_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let first = tmp.path().join("first");
    assert_eq!(
        run("policy", &configs().join("policy.json"), &first, &["--seed", "99"]).status.code(),
        Some(exit::OK)
    );
    let manifest: Manifest = serde_json::from_slice(&fs::read(first.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.seed, Some(99));
    assert_eq!(manifest.command, "policy");
    assert_eq!(manifest.config_sha256, slack_clearing_cli::report::config_hash(&manifest.config));
    assert!(manifest.files.contains(&"alerts.log".to_string()));

    let replay = write_config(tmp.path(), &serde_json::to_string(&manifest.config).unwrap());
    let second = tmp.path().join("second");
    assert_eq!(run("policy", &replay, &second, &[]).status.code(), Some(exit::OK));
    assert_eq!(csv_files(&first), csv_files(&second));
    let again: Manifest = serde_json::from_slice(&fs::read(second.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(again.config_sha256, manifest.config_sha256);
}

#[test]
fn seed_override_changes_random_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("dominance.json");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run("dominance", &cfg, &a, &["--seed", "1"]);
    run("dominance", &cfg, &b, &["--seed", "2"]);
    let ra = fs::read(a.join("results.json")).unwrap();
    let rb = fs::read(b.join("results.json")).unwrap();
    assert_ne!(ra, rb);
}

#[test]
fn policy_writes_alert_log() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    run("policy", &configs().join("policy.json"), &out, &[]);
    let log = fs::read_to_string(out.join("alerts.log")).unwrap();
    assert!(log.contains("period 2: scarcity factor"), "{log}");
    let arb = read_csv(&out.join("arbitrage.csv"));
    assert_eq!(arb[1][6], "ForwardStrictlyCheaper");
    assert_eq!(arb[4][6], "Inconclusive");
}
