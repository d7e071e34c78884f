use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn telapart(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_telapart"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn telapart")
}

#[test]
fn help_lists_every_command() {
    let dir = tempfile::tempdir().unwrap();
    let out = telapart(dir.path(), &["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in ["synth", "calibrate", "train", "batch", "reactive", "eval"] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn unknown_config_field_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.json"), r#"{"seed": 1, "no_such_field": true}"#).unwrap();
    let out = telapart(dir.path(), &["batch", "--config", "c.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn missing_config_file_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = telapart(dir.path(), &["batch", "--config", "absent.json"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.json"));
}

#[test]
fn calibrate_alone_leaves_batch_uncalibrated() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("c.json"), r#"{"seed": 2, "synth": {"n_fnodes": 2, "duration_days": 3}}"#).unwrap();
    assert!(telapart(d, &["synth", "--config", "c.json"]).status.success());
    let cal = telapart(d, &["calibrate", "--config", "c.json"]);
    assert!(cal.status.success(), "{}", String::from_utf8_lossy(&cal.stderr));
    let saved = fs::read_to_string(d.join("c.json")).unwrap();
    assert!(saved.contains("missing_threshold_hours"));
    let batch = telapart(d, &["batch", "--config", "c.json"]);
    assert_eq!(batch.status.code(), Some(4));
}
