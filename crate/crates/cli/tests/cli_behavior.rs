//! Subcommand behavior: exit codes, error surfaces, flag handling.

use std::path::Path;
use std::process::Command;

fn dasel(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_dasel"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &std::process::Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

#[test]
fn missing_subcommand_is_usage_error() {
    let out = dasel(&[]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn simulate_requires_config_or_preset() {
    let tmp = tempfile::tempdir().unwrap();
    let out = dasel(&["simulate", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&out), 1);
}

#[test]
fn unknown_preset_is_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = dasel(&["simulate", "--preset", "nope", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown preset"));
}

#[test]
fn prepare_on_missing_dir_fails_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let out = dasel(&[
        "prepare",
        "--raw",
        tmp.path().join("nothere").to_str().unwrap(),
        "--out",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn train_rejects_malformed_frames() {
    let tmp = tempfile::tempdir().unwrap();
    let frames = tmp.path().join("frames.csv");
    std::fs::write(&frames, "not,a,frame,header\n").unwrap();
    let out = dasel(&[
        "train",
        "--frames",
        frames.to_str().unwrap(),
        "--out",
        tmp.path().join("m").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn predict_rejects_bad_direction_name() {
    let tmp = tempfile::tempdir().unwrap();
    let out = dasel(&[
        "predict",
        "--frames",
        "x.csv",
        "--models",
        "m",
        "--out",
        tmp.path().to_str().unwrap(),
        "--directions",
        "sideways_10",
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown direction"));
}

#[test]
fn numerical_blowup_exits_with_code_3() {
    let tmp = tempfile::tempdir().unwrap();
    full_small_pipeline(tmp.path());
    let d = |s: &str| tmp.path().join(s).to_string_lossy().into_owned();
    // An absurd learning rate drives the logits non-finite; the failure
    // must surface as the dedicated numerical exit code.
    let out = dasel(&[
        "train", "--frames", &d("prep/freq_frames.csv"), "--out", &d("boom"),
        "--seeds", "42", "--epochs", "2", "--lr", "1e300",
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("numerical error"));
}

#[test]
fn gradcheck_epsilon_outside_contract_is_rejected() {
    let out = dasel(&["gradcheck", "--models", "1", "--samples", "22", "--epsilon", "0.1"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("epsilon"));
}

#[test]
fn gradcheck_smoke_run_passes_and_writes_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = dasel(&[
        "gradcheck",
        "--models",
        "1",
        "--samples",
        "44",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("max relative error"));
    assert!(tmp.path().join("run_manifest.txt").exists());
}

fn full_small_pipeline(dir: &Path) {
    let d = |s: &str| dir.join(s).to_string_lossy().into_owned();
    for step in [
        vec!["simulate", "--preset", "small", "--out", &d("data")],
        vec!["prepare", "--raw", &d("data"), "--out", &d("prep")],
        vec![
            "train", "--frames", &d("prep/freq_frames.csv"), "--out", &d("models"),
            "--seeds", "7", "--epochs", "2",
        ],
    ] {
        let out = dasel(&step.iter().map(|s| s as &str).collect::<Vec<_>>());
        assert_eq!(code(&out), 0, "step {step:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn single_seed_flag_produces_one_archive() {
    let tmp = tempfile::tempdir().unwrap();
    full_small_pipeline(tmp.path());
    let archives: Vec<_> = std::fs::read_dir(tmp.path().join("models"))
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().map(|x| x == "dsl1").unwrap_or(false))
        .collect();
    assert_eq!(archives.len(), 1);
    assert!(tmp.path().join("models/model_seed7.dsl1").exists());
}

#[test]
fn single_direction_predict_matches_direct_model_path() {
    // With one direction the confidence ratio collapses, so the final
    // probabilities equal that window's seed-averaged output; smoothing
    // off means final == smoothed.
    let tmp = tempfile::tempdir().unwrap();
    full_small_pipeline(tmp.path());
    let d = |s: &str| tmp.path().join(s).to_string_lossy().into_owned();
    let out = dasel(&[
        "predict", "--frames", &d("prep/freq_frames.csv"), "--models", &d("models"),
        "--out", &d("preds"), "--directions", "backward_10", "--no-smooth",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let text = std::fs::read_to_string(tmp.path().join("preds/predictions.csv")).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("timestamp,final_label,smoothed_label,confidence,directions"));
    for line in lines.take(50) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[1], cols[2], "final and smoothed labels must agree");
        assert_eq!(cols[4], "1", "exactly one contributing direction");
        // Confidence equals the maximum probability column.
        let conf: f64 = cols[3].parse().unwrap();
        let max: f64 = cols[5..].iter().map(|v| v.parse::<f64>().unwrap()).fold(0.0, f64::max);
        assert!((conf - max).abs() < 1e-9);
    }
}

#[test]
fn config_file_sets_epochs_and_flags_override() {
    let tmp = tempfile::tempdir().unwrap();
    full_small_pipeline(tmp.path());
    let d = |s: &str| tmp.path().join(s).to_string_lossy().into_owned();
    let cfg = tmp.path().join("settings.cfg");
    std::fs::write(&cfg, "train.epochs = 1\ntrain.seeds = 5\n").unwrap();

    // Config alone.
    let out = dasel(&[
        "train", "--frames", &d("prep/freq_frames.csv"), "--out", &d("m2"),
        "--config", cfg.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(tmp.path().join("m2/model_seed5.dsl1").exists());
    let manifest = std::fs::read_to_string(tmp.path().join("m2/run_manifest.txt")).unwrap();
    assert!(manifest.contains("train.epochs = 1"));

    // Flag wins over config.
    let out = dasel(&[
        "train", "--frames", &d("prep/freq_frames.csv"), "--out", &d("m3"),
        "--config", cfg.to_str().unwrap(), "--seeds", "9", "--epochs", "2",
    ]);
    assert_eq!(code(&out), 0);
    assert!(tmp.path().join("m3/model_seed9.dsl1").exists());
    let manifest = std::fs::read_to_string(tmp.path().join("m3/run_manifest.txt")).unwrap();
    assert!(manifest.contains("train.epochs = 2"));
}

#[test]
fn every_subcommand_writes_a_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    full_small_pipeline(tmp.path());
    for sub in ["data", "prep", "models"] {
        assert!(
            tmp.path().join(sub).join("run_manifest.txt").exists(),
            "{sub} missing manifest"
        );
    }
}

#[test]
fn oracle_cv_yields_perfect_score() {
    let tmp = tempfile::tempdir().unwrap();
    let d = |s: &str| tmp.path().join(s).to_string_lossy().into_owned();
    for step in [
        vec!["simulate", "--preset", "small", "--out", &d("data")],
        vec!["prepare", "--raw", &d("data"), "--out", &d("prep")],
        vec![
            "evaluate", "--cv", "--frames", &d("prep/freq_frames.csv"),
            "--pipeline", "oracle", "--out", &d("cv"),
        ],
    ] {
        let out = dasel(&step.iter().map(|s| s as &str).collect::<Vec<_>>());
        assert_eq!(code(&out), 0, "step {step:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let results = std::fs::read_to_string(tmp.path().join("cv/results.csv")).unwrap();
    let mut lines = results.lines();
    assert_eq!(lines.next().unwrap(), "approach,fold1,fold2,mean,std");
    let row = lines.next().unwrap();
    assert!(row.starts_with("oracle,1.0000,1.0000,1.0000,0.0000"), "{row}");
    let folds = std::fs::read_to_string(tmp.path().join("cv/fold_report.csv")).unwrap();
    assert!(folds.starts_with("fold,test_day,train_frames,test_frames,ratio,train_classes,test_classes"));
}

#[test]
fn baseline_cv_requires_stats_file() {
    let tmp = tempfile::tempdir().unwrap();
    let d = |s: &str| tmp.path().join(s).to_string_lossy().into_owned();
    for step in [
        vec!["simulate", "--preset", "small", "--out", &d("data")],
        vec!["prepare", "--raw", &d("data"), "--out", &d("prep")],
    ] {
        let out = dasel(&step.iter().map(|s| s as &str).collect::<Vec<_>>());
        assert_eq!(code(&out), 0);
    }
    let out = dasel(&[
        "evaluate", "--cv", "--frames", &d("prep/freq_frames.csv"),
        "--pipeline", "baseline", "--out", &d("cv"),
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--stats"));
}
