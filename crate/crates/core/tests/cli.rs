use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn moxfront(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_moxfront"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .env_remove("MOXFRONT_SEED")
        .output()
        .expect("binary runs")
}

fn csv_names(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    v.sort();
    v
}

#[test]
fn synth_pulse_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = [
        "synth", "pulse", "--gas", "EB", "--trials", "4", "--noise", "0.01", "--seed", "5",
    ];
    assert!(moxfront(&args, a.path()).status.success());
    assert!(moxfront(&args, b.path()).status.success());
    let names = csv_names(a.path());
    assert_eq!(names.len(), 20);
    assert_eq!(names, csv_names(b.path()));
    for n in &names {
        assert_eq!(
            fs::read(a.path().join(n)).unwrap(),
            fs::read(b.path().join(n)).unwrap(),
            "{n}"
        );
    }
}

#[test]
fn simulate_writes_one_event_per_pulse() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "synth", "pulse", "--gas", "IA", "--level", "C3", "--trials", "2",
    ];
    assert!(moxfront(&args, dir.path()).status.success());
    let inputs: Vec<String> = csv_names(dir.path())
        .iter()
        .map(|n| dir.path().join(n).to_string_lossy().into_owned())
        .collect();
    let mut args = vec!["simulate"];
    args.extend(inputs.iter().map(String::as_str));
    let out = moxfront(&args, dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let events = fs::read_to_string(dir.path().join("events.jsonl")).unwrap();
    assert_eq!(events.lines().count(), 2);
    for line in events.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["trigger_onset_s"].is_f64());
    }
}

#[test]
fn empty_input_directory_fails_cleanly() {
    let empty = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let r = moxfront(
        &["pipeline", "--input", empty.path().to_str().unwrap()],
        out.path(),
    );
    assert_eq!(r.status.code(), Some(1));
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(err.starts_with("error:"), "{err}");
    assert!(err.contains("no trace files"), "{err}");
    assert!(!err.contains("panicked"));
}

#[test]
fn bad_flags_are_usage_errors() {
    let out = tempfile::tempdir().unwrap();
    assert_eq!(
        moxfront(&["synth", "pulse", "--trials", "many"], out.path())
            .status
            .code(),
        Some(2)
    );
}
