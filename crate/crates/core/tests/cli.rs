use std::fs;
use std::process::{Command, Output};

fn beamspace(args: &[&str], out: &std::path::Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_beamspace")).args(args).arg("--out").arg(out).output().expect("binary runs")
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"bogus": 1}"#).unwrap();
    let o = beamspace(&["--config", cfg.to_str().unwrap(), "rate-map"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
}

#[test]
fn invalid_values_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("neg.json");
    fs::write(&cfg, r#"{"bandwidth_hz": -1.0}"#).unwrap();
    let o = beamspace(&["--config", cfg.to_str().unwrap(), "rate-vs-eta"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_names_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(beamspace(&["rate-vs-eta", "--preset", "fig11"], dir.path()).status.code(), Some(2));
    assert_eq!(beamspace(&["track", "--script", "nope"], dir.path()).status.code(), Some(2));
}

#[test]
fn unreachable_thresholds_exit_3_but_still_write_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("hi.json");
    fs::write(&cfg, r#"{"eta_db": [60, 70]}"#).unwrap();
    let o = beamspace(&["--config", cfg.to_str().unwrap(), "rate-vs-eta"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    let csv = fs::read_to_string(dir.path().join("fig9.csv")).unwrap();
    assert!(csv.starts_with("experiment,x_name,x_value,metric,value,units"));
}

#[test]
fn validate_reports_clean_run() {
    let dir = tempfile::tempdir().unwrap();
    let o = beamspace(&["validate", "--instances", "20"], dir.path());
    assert!(o.status.success());
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "validate: 20 instances, 0 failures");
}

#[test]
fn seed_changes_random_outputs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for (d, seed) in [(&a, "1"), (&b, "2")] {
        let o = beamspace(&["--seed", seed, "track", "--script", "random"], d.path());
        assert!(o.status.success());
    }
    let read = |d: &tempfile::TempDir| fs::read(d.path().join("track_random.trace")).unwrap();
    assert_ne!(read(&a), read(&b));
}
