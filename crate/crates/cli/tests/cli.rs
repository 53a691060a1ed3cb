//! End-to-end tests driving the `padc` binary.

use std::path::Path;
use std::process::{Command, Output};

fn padc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_padc"))
        .args(args)
        .output()
        .expect("failed to spawn padc")
}

/// Small-net overrides so every run finishes in well under a second.
const TINY: &[&str] = &[
    "--set",
    "pairs=6",
    "--set",
    "len=256",
    "--set",
    "base_channels=4",
    "--set",
    "pyramid=4;6",
    "--set",
    "validation_every=5",
    "--set",
    "steps=10",
];

/// Runs `padc` with the TINY overrides appended after the subcommand args.
fn padc_tiny(args: &[&str]) -> Output {
    padc(&[args, TINY].concat())
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .collect();
    entries.sort();
    entries
        .into_iter()
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect()
}

#[test]
fn generate_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        let out = padc_tiny(&["generate", "--seed", "1", "--out", dir.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(dir_bytes(&a), dir_bytes(&b));
}

#[test]
fn generate_zero_pairs_is_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = padc(&[
        "generate",
        "--pairs",
        "0",
        "--out",
        tmp.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_config_key_is_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = padc(&[
        "generate",
        "--set",
        "no_such_knob=1",
        "--out",
        tmp.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_knob"));
}

#[test]
fn refuses_nonempty_out_dir_without_force() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("out");
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(dir.join("keep.txt"), "x").unwrap();
    let out = padc_tiny(&["generate", "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let out = padc_tiny(&["generate", "--force", "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn train_writes_history_and_resume_matches_single_run() {
    let tmp = tempfile::tempdir().unwrap();
    let full = tmp.path().join("full");
    let out = padc_tiny(&[
        "train-linearize",
        "--seed",
        "3",
        "--steps",
        "20",
        "--out",
        full.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let hist = std::fs::read_to_string(full.join("history.csv")).unwrap();
    assert_eq!(hist.lines().count(), 21); // header + one row per step
    assert!(hist.starts_with("step,train_loss,valid_loss,valid_sinad_db"));

    // Same run as 10 + 10 with a resume in between.
    let split = tmp.path().join("split");
    let out = padc_tiny(&[
        "train-linearize",
        "--seed",
        "3",
        "--steps",
        "10",
        "--out",
        split.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = padc_tiny(&[
        "train-linearize",
        "--seed",
        "3",
        "--steps",
        "20",
        "--resume",
        "--out",
        split.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        std::fs::read(full.join("history.csv")).unwrap(),
        std::fs::read(split.join("history.csv")).unwrap()
    );
    assert_eq!(
        std::fs::read(full.join("latest.padn")).unwrap(),
        std::fs::read(split.join("latest.padn")).unwrap()
    );
}

#[test]
fn train_zero_steps_is_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = padc_tiny(&[
        "train-linearize",
        "--steps",
        "0",
        "--out",
        tmp.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn eval_reports_before_after_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    let run = tmp.path().join("run");
    let out = padc_tiny(&["generate", "--seed", "2", "--out", corpus.to_str().unwrap()]);
    assert!(out.status.success());
    let out = padc_tiny(&[
        "train-linearize",
        "--seed",
        "2",
        "--corpus",
        corpus.to_str().unwrap(),
        "--out",
        run.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report_dir = tmp.path().join("report");
    let out = padc(&[
        "eval",
        "--checkpoint",
        run.join("latest.padn").to_str().unwrap(),
        "--input",
        corpus.join("pair_0000_original.padc").to_str().unwrap(),
        "--stft",
        "--out",
        report_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("before: SINAD"));
    assert!(stdout.contains("after:  SINAD"));
    assert!(report_dir.join("spectrum_before.csv").exists());
    assert!(report_dir.join("stft_after.csv").exists());
}

#[test]
fn eval_missing_checkpoint_is_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = padc(&[
        "eval",
        "--checkpoint",
        tmp.path().join("nope.padn").to_str().unwrap(),
        "--input",
        tmp.path().join("nope.padc").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn sweep_writes_restricted_channel_range() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("sweep");
    let out = padc(&[
        &[
            "sweep",
            "--channels",
            "2..3",
            "--draws",
            "1",
            "--steps",
            "5",
            "--out",
            dir.to_str().unwrap(),
        ][..],
        TINY,
        &["--set", "len=240"],
    ]
    .concat());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.join("sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("2,0,"));
    assert!(rows[1].starts_with("3,0,"));
    assert!(dir.join("config_resolved.txt").exists());
}

#[test]
fn manifest_contains_resolved_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("g");
    let out = padc_tiny(&["generate", "--out", dir.to_str().unwrap()]);
    assert!(out.status.success());
    let manifest = std::fs::read_to_string(dir.join("config_resolved.txt")).unwrap();
    for key in ["sample_rate", "v_pi", "steps", "learning_rate", "pyramid"] {
        assert!(manifest.contains(key), "manifest missing {key}");
    }
}

#[test]
fn config_file_overrides_preset_and_flags_override_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("run.cfg");
    std::fs::write(&cfg_path, "pairs = 5\nlen = 256\n").unwrap();
    let dir = tmp.path().join("g");
    let out = padc(&[
        "generate",
        "--config",
        cfg_path.to_str().unwrap(),
        "--set",
        "pairs=4",
        "--set",
        "base_channels=4",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = std::fs::read_to_string(dir.join("config_resolved.txt")).unwrap();
    assert!(manifest.contains("pairs = 4"));
    assert!(manifest.contains("len = 256"));
    assert!(std::fs::read_to_string(dir.join("manifest.txt"))
        .unwrap()
        .contains("pairs = 4"));
}
