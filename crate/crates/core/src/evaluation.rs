//! Macro-F1 scoring and day-based temporal cross-validation.
//!
//! Each fold holds out one complete calendar day; folds are numbered by
//! descending test date (fold 1 tests the last day). Scoring is per frame
//! (per second) over the classes present in the test day's ground truth.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::ops::Range;
use std::path::Path;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::baseline::baseline_train_predict;
use crate::ensemble::{predict_day, train_multi_seed, DEFAULT_SEEDS};
use crate::error::{DaselError, Result};
use crate::features::{FrequencyFrame, StatFrame};
use crate::neuralnet::TrainConfig;
use crate::sequencing::{segment_by_room, Direction, Sequence};

/// Per-class F1 scores and their unweighted mean over a class set.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub per_class_f1: Vec<(String, f64)>,
    pub macro_f1: f64,
}

/// Macro F1 with the usual zero conventions: precision/recall are 0 when
/// their denominator is 0, F1 is 0 when P + R = 0. Classes in `class_set`
/// that never occur still contribute a 0 to the mean.
pub fn macro_f1(truth: &[&str], pred: &[&str], class_set: &[String]) -> Result<ScoreReport> {
    if truth.len() != pred.len() {
        return Err(DaselError::Data(format!(
            "macro_f1: {} truth labels vs {} predictions",
            truth.len(),
            pred.len()
        )));
    }
    if truth.is_empty() {
        return Err(DaselError::Data("macro_f1: empty inputs".into()));
    }
    if class_set.is_empty() {
        return Err(DaselError::Data("macro_f1: empty class set".into()));
    }
    let mut per_class = Vec::with_capacity(class_set.len());
    let mut sum = 0.0;
    for class in class_set {
        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut fn_ = 0usize;
        for (&t, &p) in truth.iter().zip(pred) {
            let t_is = t == class;
            let p_is = p == class;
            match (t_is, p_is) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                (false, false) => {}
            }
        }
        let precision = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
        let recall = if tp + fn_ > 0 { tp as f64 / (tp + fn_) as f64 } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_class.push((class.clone(), f1));
        sum += f1;
    }
    Ok(ScoreReport {
        macro_f1: sum / class_set.len() as f64,
        per_class_f1: per_class,
    })
}

/// One day-based cross-validation fold.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldSpec {
    pub fold_id: u32,
    pub test_day: NaiveDate,
    pub train_days: Vec<NaiveDate>,
    pub train_frames: usize,
    pub test_frames: usize,
    pub ratio: f64,
    pub train_classes: usize,
    pub test_classes: usize,
}

/// Contiguous per-day ranges of a time-sorted frame slice.
pub fn split_by_day(frames: &[FrequencyFrame]) -> Vec<(NaiveDate, Range<usize>)> {
    let mut out: Vec<(NaiveDate, Range<usize>)> = Vec::new();
    for (i, f) in frames.iter().enumerate() {
        let day = f.timestamp.local_date();
        match out.last_mut() {
            Some((d, r)) if *d == day => r.end = i + 1,
            _ => out.push((day, i..i + 1)),
        }
    }
    out
}

fn distinct_rooms<'a>(frames: impl Iterator<Item = &'a FrequencyFrame>) -> BTreeSet<String> {
    frames.filter_map(|f| f.room.clone()).collect()
}

/// One fold per distinct day, numbered by descending test date.
pub fn temporal_folds(frames: &[FrequencyFrame]) -> Result<Vec<FoldSpec>> {
    let days = split_by_day(frames);
    if days.len() < 2 {
        return Err(DaselError::Data(format!(
            "temporal folds need at least 2 distinct days, got {}",
            days.len()
        )));
    }
    let mut order: Vec<usize> = (0..days.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(days[i].0));

    let mut folds = Vec::with_capacity(days.len());
    for (fold_idx, &di) in order.iter().enumerate() {
        let (test_day, ref test_range) = days[di];
        let test_frames = test_range.len();
        let train_frames = frames.len() - test_frames;
        let train_days: Vec<NaiveDate> = days
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != di)
            .map(|(_, (d, _))| *d)
            .collect();
        let test_classes = distinct_rooms(frames[test_range.clone()].iter()).len();
        let train_classes = distinct_rooms(
            days.iter()
                .enumerate()
                .filter(|&(i, _)| i != di)
                .flat_map(|(_, (_, r))| frames[r.clone()].iter()),
        )
        .len();
        folds.push(FoldSpec {
            fold_id: (fold_idx + 1) as u32,
            test_day,
            train_days,
            train_frames,
            test_frames,
            ratio: train_frames as f64 / test_frames as f64,
            train_classes,
            test_classes,
        });
    }
    Ok(folds)
}

/// Which classifier the cross-validation run drives.
#[derive(Debug, Clone, PartialEq)]
pub enum PipelineKind {
    /// Independent-window softmax regression (substituted baseline).
    Baseline { variation1: bool },
    /// The full sequential pipeline, or an ablation of it.
    Dasel {
        directions: Vec<Direction>,
        smoothing: bool,
    },
    /// Echoes the ground truth; a scoring-path diagnostic.
    Oracle,
    /// Uniform-random choice over the training classes; a diagnostic.
    Random { seed: u64 },
}

impl PipelineKind {
    pub fn dasel_default() -> Self {
        PipelineKind::Dasel {
            directions: Direction::ALL.to_vec(),
            smoothing: true,
        }
    }

    pub fn label(&self) -> String {
        match self {
            PipelineKind::Baseline { variation1: false } => "baseline (substituted)".into(),
            PipelineKind::Baseline { variation1: true } => "baseline-var1 (substituted)".into(),
            PipelineKind::Dasel { directions, smoothing } => {
                if *smoothing && directions.len() == Direction::ALL.len() {
                    "dasel".into()
                } else {
                    let dirs: Vec<&str> = directions.iter().map(|d| d.name()).collect();
                    format!(
                        "dasel ({}; smoothing {})",
                        dirs.join("+"),
                        if *smoothing { "on" } else { "off" }
                    )
                }
            }
            PipelineKind::Oracle => "oracle".into(),
            PipelineKind::Random { .. } => "random".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CvConfig {
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            train: TrainConfig::default(),
            seeds: DEFAULT_SEEDS.to_vec(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub fold_id: u32,
    pub score: ScoreReport,
    /// Test-day classes that never appear in the training days; their F1
    /// is necessarily 0 and they are flagged in the per-class report.
    pub unknown_classes: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct CvReport {
    pub approach: String,
    pub folds: Vec<FoldSpec>,
    pub per_fold: Vec<FoldOutcome>,
    pub mean: f64,
    /// Sample standard deviation over folds (n - 1).
    pub std: f64,
}

fn sample_std(values: &[f64], mean: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Trains on the fold's training days and predicts its test day, for every
/// fold; scores per frame against the test day's ground truth.
pub fn run_cv(
    freq: &[FrequencyFrame],
    stats: &[StatFrame],
    pipeline: &PipelineKind,
    cfg: &CvConfig,
) -> Result<CvReport> {
    let folds = temporal_folds(freq)?;
    if matches!(pipeline, PipelineKind::Baseline { .. }) && stats.len() != freq.len() {
        return Err(DaselError::Data(format!(
            "stat frames ({}) and frequency frames ({}) disagree",
            stats.len(),
            freq.len()
        )));
    }
    let days = split_by_day(freq);

    let outcomes: Vec<FoldOutcome> = folds
        .par_iter()
        .map(|fold| run_fold(freq, stats, &days, fold, pipeline, cfg))
        .collect::<Result<Vec<_>>>()?;

    let scores: Vec<f64> = outcomes.iter().map(|o| o.score.macro_f1).collect();
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    let std = sample_std(&scores, mean);
    Ok(CvReport {
        approach: pipeline.label(),
        folds,
        per_fold: outcomes,
        mean,
        std,
    })
}

fn run_fold(
    freq: &[FrequencyFrame],
    stats: &[StatFrame],
    days: &[(NaiveDate, Range<usize>)],
    fold: &FoldSpec,
    pipeline: &PipelineKind,
    cfg: &CvConfig,
) -> Result<FoldOutcome> {
    let test_range = days
        .iter()
        .find(|(d, _)| *d == fold.test_day)
        .map(|(_, r)| r.clone())
        .expect("fold day exists");
    let test_freq = &freq[test_range.clone()];

    let truth: Vec<&str> = test_freq
        .iter()
        .map(|f| f.room.as_deref().expect("labeled test frame"))
        .collect();
    let class_set: Vec<String> = distinct_rooms(test_freq.iter()).into_iter().collect();

    // Class table from the training days.
    let train_rooms: BTreeSet<String> = days
        .iter()
        .filter(|(d, _)| *d != fold.test_day)
        .flat_map(|(_, r)| distinct_rooms(freq[r.clone()].iter()))
        .collect();
    let classes: Vec<String> = train_rooms.iter().cloned().collect();

    let predicted: Vec<String> = match pipeline {
        PipelineKind::Oracle => truth.iter().map(|s| s.to_string()).collect(),
        PipelineKind::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0xF01D << 4) ^ fold.fold_id as u64);
            (0..truth.len())
                .map(|_| classes[rng.gen_range(0..classes.len())].clone())
                .collect()
        }
        PipelineKind::Baseline { variation1 } => {
            let train_stats: Vec<StatFrame> = days
                .iter()
                .filter(|(d, _)| *d != fold.test_day)
                .flat_map(|(_, r)| stats[r.clone()].iter().cloned())
                .collect();
            let test_stats = &stats[test_range.clone()];
            let preds = baseline_train_predict(
                &train_stats,
                test_stats,
                &classes,
                *variation1,
                &cfg.train,
                cfg.seeds.first().copied().unwrap_or(DEFAULT_SEEDS[0]),
            )?;
            preds.into_iter().map(|i| classes[i].clone()).collect()
        }
        PipelineKind::Dasel { directions, smoothing } => {
            // Segment each training day independently; sequences never
            // span day boundaries.
            let mut sequences: Vec<Sequence> = Vec::new();
            for (d, r) in days {
                if *d == fold.test_day {
                    continue;
                }
                let (mut seqs, _) = segment_by_room(&freq[r.clone()])?;
                sequences.append(&mut seqs);
            }
            let models = train_multi_seed(&sequences, &classes, &cfg.train, &cfg.seeds)?;
            let model_refs: Vec<&crate::neuralnet::ModelParams> =
                models.iter().map(|m| &m.params).collect();
            let records = predict_day(test_freq, &model_refs, directions, *smoothing)?;
            records
                .iter()
                .map(|rec| {
                    let idx = if *smoothing { rec.smoothed_label } else { rec.final_label };
                    classes[idx].clone()
                })
                .collect()
        }
    };

    let pred_refs: Vec<&str> = predicted.iter().map(|s| s.as_str()).collect();
    let score = macro_f1(&truth, &pred_refs, &class_set)?;
    let unknown_classes: Vec<String> = class_set
        .iter()
        .filter(|c| !train_rooms.contains(*c))
        .cloned()
        .collect();
    Ok(FoldOutcome {
        fold_id: fold.fold_id,
        score,
        unknown_classes,
    })
}

/// Writes the fold-characteristics CSV
/// (`fold,test_day,train_frames,test_frames,ratio,train_classes,test_classes`).
pub fn write_fold_report_csv(path: &Path, folds: &[FoldSpec]) -> Result<()> {
    let mut out = String::from("fold,test_day,train_frames,test_frames,ratio,train_classes,test_classes\n");
    for f in folds {
        writeln!(
            out,
            "{},{},{},{},{:.2},{},{}",
            f.fold_id, f.test_day, f.train_frames, f.test_frames, f.ratio, f.train_classes, f.test_classes
        )
        .unwrap();
    }
    fs::write(path, out).map_err(|e| DaselError::io(path, e))
}

/// Writes one results row per report (`approach,fold1..foldN,mean,std`).
pub fn write_results_csv(path: &Path, reports: &[&CvReport]) -> Result<()> {
    let n_folds = reports.first().map(|r| r.per_fold.len()).unwrap_or(0);
    let mut out = String::from("approach");
    for i in 1..=n_folds {
        write!(out, ",fold{i}").unwrap();
    }
    out.push_str(",mean,std\n");
    for r in reports {
        write!(out, "{}", r.approach).unwrap();
        for o in &r.per_fold {
            write!(out, ",{:.4}", o.score.macro_f1).unwrap();
        }
        writeln!(out, ",{:.4},{:.4}", r.mean, r.std).unwrap();
    }
    fs::write(path, out).map_err(|e| DaselError::io(path, e))
}

/// Writes per-fold per-class F1 (`approach,fold,class,f1,in_train`).
pub fn write_per_class_csv(path: &Path, reports: &[&CvReport]) -> Result<()> {
    let mut out = String::from("approach,fold,class,f1,in_train\n");
    for r in reports {
        for o in &r.per_fold {
            for (class, f1) in &o.score.per_class_f1 {
                let in_train = !o.unknown_classes.contains(class);
                writeln!(out, "{},{},{},{:.4},{}", r.approach, o.fold_id, class, f1, in_train).unwrap();
            }
        }
    }
    fs::write(path, out).map_err(|e| DaselError::io(path, e))
}
