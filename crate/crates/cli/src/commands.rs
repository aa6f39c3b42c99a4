use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;

use dasel_core::ensemble::{predict_day, train_multi_seed, write_predictions_csv, read_predictions_csv};
use dasel_core::evaluation::{
    macro_f1, run_cv, split_by_day, temporal_folds, write_fold_report_csv, write_per_class_csv,
    write_results_csv, CvConfig, CvReport, PipelineKind,
};
use dasel_core::features::{
    frequency_frame, group_by_second, read_frames_csv, read_stats_csv, stat_frame, write_frames_csv,
    write_stats_csv,
};
use dasel_core::ingest::{
    align_labels, parse_ble_csv, parse_labels_csv, write_drop_report, write_labeled_csv, IngestReport,
    MacMap,
};
use dasel_core::neuralnet::{
    grad_check, corrupted_grad_check, load_model, save_model, ModelParams, TrainConfig,
};
use dasel_core::sequencing::{segment_by_room, Direction, Sequence};
use dasel_core::simulator::{self, FacilityConfig};

use crate::config::{parse_directions, Settings};
use crate::manifest::RunManifest;

pub fn cmd_simulate(
    config: Option<&Path>,
    preset: Option<&str>,
    out: &Path,
    seed: Option<u64>,
    days: Option<u32>,
    seconds: Option<u32>,
) -> Result<()> {
    let mut manifest = RunManifest::begin();
    let mut facility = match (config, preset) {
        (Some(path), _) => {
            manifest.input(path);
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read config {}", path.display()))?;
            simulator::parse_config(&text)?
        }
        (None, Some(name)) => FacilityConfig::preset(name)?,
        (None, None) => unreachable!("clap enforces config xor preset"),
    };
    if let Some(s) = seed {
        facility.seed = s;
    }
    if let Some(d) = days {
        facility.days = d;
    }
    if let Some(s) = seconds {
        facility.seconds_per_day = s;
    }

    let files = simulator::write_dataset(&facility, out)?;
    manifest.set("seed", facility.seed);
    manifest.set("days", facility.days);
    manifest.set("seconds_per_day", facility.seconds_per_day);
    for f in &files {
        manifest.output(f);
    }
    println!(
        "simulated {} days x {} s over {} rooms -> {}",
        facility.days,
        facility.seconds_per_day,
        facility.rooms.len(),
        out.display()
    );
    manifest.write(&out.join("run_manifest.txt"))
}

pub fn cmd_prepare(raw: &Path, out: &Path, observer: u32) -> Result<()> {
    let mut manifest = RunManifest::begin();
    manifest.set("observer", observer);
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;

    let mac_path = raw.join("macmap.csv");
    let labels_path = raw.join("labels.csv");
    let mut ble_paths: Vec<PathBuf> = std::fs::read_dir(raw)
        .with_context(|| format!("cannot read {}", raw.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .map(|n| n.starts_with("ble_") && n.ends_with(".csv"))
                .unwrap_or(false)
        })
        .collect();
    ble_paths.sort();
    if ble_paths.is_empty() {
        bail!("no ble_*.csv files in {}", raw.display());
    }
    manifest.input(&mac_path);
    manifest.input(&labels_path);
    for p in &ble_paths {
        manifest.input(p);
    }

    let mac_map = MacMap::load(&mac_path)?;
    let (intervals, label_report) = parse_labels_csv(&labels_path, observer)?;

    // Files parse in parallel; concatenation in filename order plus a
    // stable sort keeps the merge deterministic.
    let parsed: Vec<_> = ble_paths
        .par_iter()
        .map(|p| parse_ble_csv(p, &mac_map))
        .collect::<dasel_core::Result<Vec<_>>>()?;
    let mut report = IngestReport::default();
    report.merge(label_report);
    let mut readings = Vec::new();
    for (r, rep) in parsed {
        readings.extend(r);
        report.merge(rep);
    }
    readings.sort_by_key(|r| r.timestamp);

    let (labeled, stats) = align_labels(&readings, &intervals);
    let (groups, conflicting) = group_by_second(&labeled);
    let freq: Vec<_> = groups.iter().map(frequency_frame).collect();
    let stat: Vec<_> = groups.iter().map(stat_frame).collect();

    let labeled_path = out.join("labeled.csv");
    let frames_path = out.join("freq_frames.csv");
    let stats_path = out.join("stat_frames.csv");
    let drop_path = out.join("drop_report.csv");
    write_labeled_csv(&labeled_path, &labeled)?;
    write_frames_csv(&frames_path, &freq)?;
    write_stats_csv(&stats_path, &stat)?;
    write_drop_report(&drop_path, &report)?;

    manifest.set("coverage", format!("{:.6}", stats.coverage));
    manifest.set("readings_total", stats.total_readings);
    manifest.set("readings_labeled", stats.labeled_readings);
    manifest.set("overlap_hits", stats.overlap_hits);
    manifest.set("dropped_unknown_mac", report.dropped_unknown_mac);
    manifest.set("dropped_other_observer", report.dropped_other_observer);
    manifest.set("dropped_incomplete", report.dropped_incomplete);
    manifest.set("row_errors", report.row_errors.len());
    manifest.set("conflicting_seconds", conflicting);
    manifest.set("frames", freq.len());
    for p in [&labeled_path, &frames_path, &stats_path, &drop_path] {
        manifest.output(p);
    }

    println!(
        "prepared {} frames from {} readings (coverage {:.4}, {} row errors)",
        freq.len(),
        stats.total_readings,
        stats.coverage,
        report.row_errors.len()
    );
    manifest.write(&out.join("run_manifest.txt"))
}

fn load_labeled_frames(path: &Path) -> Result<Vec<dasel_core::features::FrequencyFrame>> {
    let frames = read_frames_csv(path)?;
    if frames.is_empty() {
        bail!("{}: no frames", path.display());
    }
    Ok(frames)
}

fn training_sequences(frames: &[dasel_core::features::FrequencyFrame]) -> Result<(Vec<Sequence>, Vec<String>)> {
    let days = split_by_day(frames);
    let mut sequences = Vec::new();
    for (_, range) in &days {
        let (mut seqs, _) = segment_by_room(&frames[range.clone()])?;
        sequences.append(&mut seqs);
    }
    let classes: Vec<String> = sequences
        .iter()
        .filter_map(|s| s.room.clone())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    Ok((sequences, classes))
}

pub fn cmd_train(
    frames_path: &Path,
    out: &Path,
    seeds: &[u64],
    train_cfg: &TrainConfig,
    settings: &Settings,
) -> Result<()> {
    let mut manifest = RunManifest::begin();
    manifest.input(frames_path);
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;

    let frames = load_labeled_frames(frames_path)?;
    let (sequences, classes) = training_sequences(&frames)?;
    println!(
        "training {} models on {} sequences over {} classes",
        seeds.len(),
        sequences.len(),
        classes.len()
    );

    let models = train_multi_seed(&sequences, &classes, train_cfg, seeds)?;
    for (seed, model) in seeds.iter().zip(&models) {
        let path = out.join(format!("model_seed{seed}.dsl1"));
        save_model(&model.params, &path)?;
        manifest.output(&path);
        let last = model.epoch_losses.last().copied().unwrap_or(f64::NAN);
        println!("  seed {seed}: final epoch loss {last:.4} -> {}", path.display());
    }

    manifest.set("seeds", seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","));
    manifest.set("train.epochs", train_cfg.epochs);
    manifest.set("train.batch_size", train_cfg.batch_size);
    manifest.set("train.learning_rate", train_cfg.learning_rate);
    manifest.set("train.adam", format!("{},{},{}", train_cfg.adam_beta1, train_cfg.adam_beta2, train_cfg.adam_epsilon));
    manifest.set("classes", classes.join(","));
    for (k, v) in settings.entries() {
        manifest.set(&format!("config.{k}"), v);
    }
    manifest.write(&out.join("run_manifest.txt"))
}

fn load_models(dir: &Path) -> Result<Vec<ModelParams>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("cannot read {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("dsl1"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no .dsl1 model archives in {}", dir.display());
    }
    let mut models = Vec::new();
    for p in &paths {
        models.push(load_model(p)?);
    }
    Ok(models)
}

pub fn cmd_predict(
    frames_path: &Path,
    models_dir: &Path,
    out: &Path,
    directions: Option<&str>,
    no_smooth: bool,
    settings: &Settings,
) -> Result<()> {
    let mut manifest = RunManifest::begin();
    manifest.input(frames_path);
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;

    let directions: Vec<Direction> = match directions.or(settings.get("predict.directions")) {
        Some(s) => parse_directions(s)?,
        None => Direction::ALL.to_vec(),
    };
    let smoothing = if no_smooth {
        false
    } else {
        settings.parse::<bool>("predict.smoothing")?.unwrap_or(true)
    };

    let frames = load_labeled_frames(frames_path)?;
    let models = load_models(models_dir)?;
    let refs: Vec<&ModelParams> = models.iter().collect();
    let classes = refs[0].classes.clone();

    let days = split_by_day(&frames);
    let mut records = Vec::new();
    for (_, range) in &days {
        records.extend(predict_day(&frames[range.clone()], &refs, &directions, smoothing)?);
    }

    let pred_path = out.join("predictions.csv");
    write_predictions_csv(&pred_path, &records, &classes)?;
    manifest.output(&pred_path);
    manifest.set("models", refs.len());
    manifest.set("directions", directions.iter().map(|d| d.name()).collect::<Vec<_>>().join(","));
    manifest.set("smoothing", smoothing);
    manifest.set("predictions", records.len());
    println!("predicted {} timestamps -> {}", records.len(), pred_path.display());
    manifest.write(&out.join("run_manifest.txt"))
}

fn parse_pipeline(name: &str, directions: Option<&str>, no_smooth: bool, seed: u64) -> Result<PipelineKind> {
    let kind = match name {
        "baseline" => PipelineKind::Baseline { variation1: false },
        "baseline-var1" => PipelineKind::Baseline { variation1: true },
        "dasel" => {
            let dirs = match directions {
                Some(s) => parse_directions(s)?,
                None => Direction::ALL.to_vec(),
            };
            PipelineKind::Dasel {
                directions: dirs,
                smoothing: !no_smooth,
            }
        }
        "oracle" => PipelineKind::Oracle,
        "random" => PipelineKind::Random { seed },
        other => bail!("unknown pipeline {other:?} (expected baseline, baseline-var1, dasel, oracle, random)"),
    };
    Ok(kind)
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_evaluate_cv(
    frames_path: &Path,
    stats_path: Option<&Path>,
    pipelines: &str,
    out: &Path,
    seeds: Vec<u64>,
    train_cfg: TrainConfig,
    directions: Option<&str>,
    no_smooth: bool,
) -> Result<()> {
    let mut manifest = RunManifest::begin();
    manifest.input(frames_path);
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;

    let freq = load_labeled_frames(frames_path)?;
    let stats = match stats_path {
        Some(p) => {
            manifest.input(p);
            read_stats_csv(p)?
        }
        None => Vec::new(),
    };
    let cfg = CvConfig {
        train: train_cfg,
        seeds,
    };

    let folds = temporal_folds(&freq)?;
    let fold_path = out.join("fold_report.csv");
    write_fold_report_csv(&fold_path, &folds)?;
    manifest.output(&fold_path);

    let mut reports: Vec<CvReport> = Vec::new();
    for name in pipelines.split(',') {
        let pipeline = parse_pipeline(name.trim(), directions, no_smooth, cfg.seeds.first().copied().unwrap_or(42))?;
        if matches!(pipeline, PipelineKind::Baseline { .. }) && stats.is_empty() {
            bail!("pipeline {name} needs --stats <stat_frames.csv>");
        }
        println!("running {} cross-validation...", pipeline.label());
        let report = run_cv(&freq, &stats, &pipeline, &cfg)?;
        for o in &report.per_fold {
            println!("  fold {}: macro F1 {:.4}", o.fold_id, o.score.macro_f1);
            if !o.unknown_classes.is_empty() {
                println!("    unseen-in-train classes: {}", o.unknown_classes.join(", "));
            }
        }
        println!("  mean {:.4} +- {:.4}", report.mean, report.std);
        reports.push(report);
    }

    let report_refs: Vec<&CvReport> = reports.iter().collect();
    let results_path = out.join("results.csv");
    let per_class_path = out.join("per_class_f1.csv");
    write_results_csv(&results_path, &report_refs)?;
    write_per_class_csv(&per_class_path, &report_refs)?;
    manifest.output(&results_path);
    manifest.output(&per_class_path);
    manifest.set("pipelines", pipelines);
    manifest.write(&out.join("run_manifest.txt"))
}

pub fn cmd_evaluate_predictions(truth_path: &Path, pred_path: &Path, out: &Path) -> Result<()> {
    let mut manifest = RunManifest::begin();
    manifest.input(truth_path);
    manifest.input(pred_path);
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;

    let truth_frames = load_labeled_frames(truth_path)?;
    let preds = read_predictions_csv(pred_path)?;
    let by_epoch: BTreeMap<i64, (&str, &str)> = preds
        .iter()
        .map(|(t, f, s)| (t.epoch_secs(), (f.as_str(), s.as_str())))
        .collect();

    let mut truth = Vec::new();
    let mut final_pred = Vec::new();
    let mut smoothed_pred = Vec::new();
    for f in &truth_frames {
        let Some(room) = f.room.as_deref() else { continue };
        let Some(&(fin, smo)) = by_epoch.get(&f.timestamp.epoch_secs()) else {
            continue;
        };
        truth.push(room);
        final_pred.push(fin);
        smoothed_pred.push(smo);
    }
    if truth.is_empty() {
        bail!("no overlapping labeled timestamps between truth and predictions");
    }
    let class_set: Vec<String> = truth
        .iter()
        .map(|s| s.to_string())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();

    let final_score = macro_f1(&truth, &final_pred, &class_set)?;
    let smoothed_score = macro_f1(&truth, &smoothed_pred, &class_set)?;

    let eval_path = out.join("evaluation.csv");
    let mut text = String::from("labels,macro_f1,scored_timestamps\n");
    text.push_str(&format!("final,{:.6},{}\n", final_score.macro_f1, truth.len()));
    text.push_str(&format!("smoothed,{:.6},{}\n", smoothed_score.macro_f1, truth.len()));
    std::fs::write(&eval_path, text).with_context(|| format!("cannot write {}", eval_path.display()))?;

    let per_class_path = out.join("per_class_f1.csv");
    let mut text = String::from("labels,class,f1\n");
    for (c, f1) in &final_score.per_class_f1 {
        text.push_str(&format!("final,{c},{f1:.6}\n"));
    }
    for (c, f1) in &smoothed_score.per_class_f1 {
        text.push_str(&format!("smoothed,{c},{f1:.6}\n"));
    }
    std::fs::write(&per_class_path, text)
        .with_context(|| format!("cannot write {}", per_class_path.display()))?;

    println!(
        "macro F1: final {:.4}, smoothed {:.4} over {} timestamps",
        final_score.macro_f1,
        smoothed_score.macro_f1,
        truth.len()
    );
    manifest.output(&eval_path);
    manifest.output(&per_class_path);
    manifest.write(&out.join("run_manifest.txt"))
}

pub fn cmd_gradcheck(models: usize, samples: usize, epsilon: f64, seed: u64, out: Option<&Path>) -> Result<()> {
    use dasel_core::neuralnet::gradcheck::random_toy_batch;

    let mut manifest = RunManifest::begin();
    manifest.set("models", models);
    manifest.set("samples", samples);
    manifest.set("epsilon", epsilon);
    manifest.set("seed", seed);

    let classes: Vec<String> = (0..3).map(|i| format!("class_{i}")).collect();
    let weights = [1.0, 1.0, 1.0];
    let mut worst = 0.0f64;
    for i in 0..models {
        let model_seed = seed.wrapping_add(i as u64 * 1000);
        let mut params = ModelParams::init(classes.clone(), model_seed)
            .map_err(anyhow::Error::from)?;
        let (seqs, labels) = random_toy_batch(4, 10, 3, model_seed ^ 0xBA7C4);
        let batch: Vec<(&Sequence, usize)> = seqs.iter().zip(labels.iter().copied()).collect();
        let err = grad_check(&mut params, &batch, &weights, epsilon, samples, model_seed ^ 0x5A17)?;
        let control = corrupted_grad_check(&mut params, &batch, &weights, epsilon)?;
        worst = worst.max(err);
        println!("model seed {model_seed}: max relative error {err:.3e} (corrupted control {control:.3})");
        manifest.set(&format!("model.{model_seed}.max_error"), format!("{err:.6e}"));
        if control <= 0.1 {
            bail!(dasel_core::DaselError::Numerical {
                layer: "grad_check",
                msg: format!("negative control not detected (rel err {control:.3e})"),
            });
        }
    }
    println!("worst max relative error over {models} models: {worst:.3e}");
    if worst > 1e-4 {
        return Err(anyhow!(dasel_core::DaselError::Numerical {
            layer: "grad_check",
            msg: format!("max relative error {worst:.3e} exceeds 1e-4"),
        }));
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).ok();
        manifest.write(&dir.join("run_manifest.txt"))?;
    }
    Ok(())
}
