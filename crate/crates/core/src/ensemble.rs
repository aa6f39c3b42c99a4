//! Two-level ensemble inference and temporal smoothing.
//!
//! Level 1 averages class probabilities over the five seed models for each
//! directional window. Level 2 combines the directional distributions for
//! one anchor by confidence weighting: final = sum(p_d * c_d) / sum(c_d)
//! with c_d = max(p_d). A final pass re-votes each timestamp over its
//! 5-second neighborhood. Summation order is canonical everywhere (seeds
//! ascending, directions in listing order) so results are reproducible
//! bit-for-bit regardless of input order or thread count.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{DaselError, Result};
use crate::features::FrequencyFrame;
use crate::neuralnet::{forward_probs, train, ModelParams, TrainConfig, TrainedModel};
use crate::sequencing::{directional_windows, Direction, FrameStore, Sequence};
use crate::timestamp::Timestamp;

/// The multi-seed ensemble's default initialization seeds.
pub const DEFAULT_SEEDS: [u64; 5] = [42, 1042, 2042, 3042, 4042];

/// Anchors processed per inference batch.
const CHUNK: usize = 128;

/// One directional window's seed-averaged prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalPrediction {
    pub anchor: Timestamp,
    pub direction: Direction,
    pub probs: Vec<f64>,
    /// max(probs), recomputed from the averaged distribution.
    pub confidence: f64,
}

/// Final per-timestamp prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub timestamp: Timestamp,
    pub final_probs: Vec<f64>,
    pub final_label: usize,
    pub smoothed_label: usize,
    pub contributing_directions: u32,
}

impl PredictionRecord {
    pub fn confidence(&self) -> f64 {
        self.final_probs[self.final_label]
    }
}

/// Lowest index wins ties.
pub fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate().skip(1) {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

/// Trains one model per seed, in the given seed list order. Training runs
/// are independent and parallel; any failure aborts the whole ensemble.
pub fn train_multi_seed(
    sequences: &[Sequence],
    classes: &[String],
    cfg: &TrainConfig,
    seeds: &[u64],
) -> Result<Vec<TrainedModel>> {
    if seeds.is_empty() {
        return Err(DaselError::Contract("train_multi_seed: no seeds".into()));
    }
    seeds
        .par_iter()
        .map(|&seed| train(sequences, classes, cfg, seed))
        .collect()
}

fn check_class_tables(models: &[&ModelParams]) -> Result<()> {
    if models.is_empty() {
        return Err(DaselError::Contract("no models".into()));
    }
    for m in &models[1..] {
        if m.classes != models[0].classes {
            return Err(DaselError::Data(format!(
                "ensemble class tables disagree: {:?} vs {:?}",
                models[0].classes, m.classes
            )));
        }
    }
    Ok(())
}

/// Seed-ascending view of the models; fixes the averaging order.
fn canonical_model_order<'a>(models: &[&'a ModelParams]) -> Vec<&'a ModelParams> {
    let mut ordered: Vec<&ModelParams> = models.to_vec();
    ordered.sort_by_key(|m| m.seed);
    ordered
}

/// Elementwise mean of the models' probability outputs for one window.
pub fn direction_probs(window: &Sequence, models: &[&ModelParams]) -> Result<DirectionalPrediction> {
    let mut preds = direction_probs_batch(std::slice::from_ref(window), models)?;
    Ok(preds.pop().expect("one window in, one prediction out"))
}

/// Batched Level-1 ensemble: mean over models (seed order) per window.
pub fn direction_probs_batch(
    windows: &[Sequence],
    models: &[&ModelParams],
) -> Result<Vec<DirectionalPrediction>> {
    check_class_tables(models)?;
    let ordered = canonical_model_order(models);
    let c = ordered[0].num_classes();
    let refs: Vec<&Sequence> = windows.iter().collect();

    let mut mean = vec![0.0; windows.len() * c];
    for m in &ordered {
        let probs = forward_probs(m, &refs)?;
        for (acc, p) in mean.iter_mut().zip(&probs) {
            *acc += p;
        }
    }
    let inv = 1.0 / ordered.len() as f64;
    for v in mean.iter_mut() {
        *v *= inv;
    }

    Ok(windows
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let probs = mean[i * c..(i + 1) * c].to_vec();
            let confidence = probs[argmax(&probs)];
            DirectionalPrediction {
                anchor: w.anchor.expect("inference window carries anchor"),
                direction: w.direction.expect("inference window carries direction"),
                probs,
                confidence,
            }
        })
        .collect())
}

/// Confidence-weighted combination of one anchor's directional
/// predictions: final = sum(p_d * c_d) / sum(c_d), summed in canonical
/// direction order. Directions absent from the input simply do not
/// contribute.
pub fn aggregate_directions(preds: &[DirectionalPrediction]) -> Result<PredictionRecord> {
    if preds.is_empty() {
        return Err(DaselError::Contract(
            "aggregate_directions: no directional predictions".into(),
        ));
    }
    let anchor = preds[0].anchor;
    let c = preds[0].probs.len();
    for p in preds {
        if p.anchor != anchor {
            return Err(DaselError::Contract("aggregate_directions: mixed anchors".into()));
        }
        if p.probs.len() != c {
            return Err(DaselError::Data("aggregate_directions: class count mismatch".into()));
        }
    }
    let mut ordered: Vec<&DirectionalPrediction> = preds.iter().collect();
    ordered.sort_by_key(|p| p.direction.rank());

    let mut weighted = vec![0.0; c];
    let mut conf_sum = 0.0;
    for p in &ordered {
        for (acc, &v) in weighted.iter_mut().zip(&p.probs) {
            *acc += v * p.confidence;
        }
        conf_sum += p.confidence;
    }
    for v in weighted.iter_mut() {
        *v /= conf_sum;
    }
    let final_label = argmax(&weighted);
    Ok(PredictionRecord {
        timestamp: anchor,
        final_probs: weighted,
        final_label,
        smoothed_label: final_label,
        contributing_directions: ordered.len() as u32,
    })
}

/// Confidence-weighted re-vote of each timestamp over the records that
/// exist within [t-2, t+2]. Reads the original final distributions only,
/// writes only the smoothed labels; argmax is scale-invariant, so the
/// vote sum is left unnormalized.
pub fn temporal_smooth(records: &mut [PredictionRecord]) {
    debug_assert!(records.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
    if records.is_empty() {
        return;
    }
    let c = records[0].final_probs.len();
    let mut smoothed = Vec::with_capacity(records.len());
    let mut lo = 0usize;
    let mut hi = 0usize;
    for rec in records.iter() {
        let t = rec.timestamp.epoch_secs();
        while records[lo].timestamp.epoch_secs() < t - 2 {
            lo += 1;
        }
        while hi < records.len() && records[hi].timestamp.epoch_secs() <= t + 2 {
            hi += 1;
        }
        let mut vote = vec![0.0; c];
        for member in &records[lo..hi] {
            let conf = member.confidence();
            for (acc, &p) in vote.iter_mut().zip(&member.final_probs) {
                *acc += p * conf;
            }
        }
        smoothed.push(argmax(&vote));
    }
    for (rec, s) in records.iter_mut().zip(smoothed) {
        rec.smoothed_label = s;
    }
}

/// Full inference over one day of frames: builds the directional windows
/// for every frame second, runs the seed ensemble per direction, combines
/// directions, and smooths. Frames must be sorted and belong to one day
/// (windows never span days).
pub fn predict_day(
    frames: &[FrequencyFrame],
    models: &[&ModelParams],
    directions: &[Direction],
    smoothing: bool,
) -> Result<Vec<PredictionRecord>> {
    let (records, _) = predict_day_detailed(frames, models, directions, smoothing)?;
    Ok(records)
}

/// Like [`predict_day`], but also returns the per-direction seed-averaged
/// predictions (indexed [direction][anchor]) so callers can inspect or
/// re-aggregate subsets without re-running the models.
pub fn predict_day_detailed(
    frames: &[FrequencyFrame],
    models: &[&ModelParams],
    directions: &[Direction],
    smoothing: bool,
) -> Result<(Vec<PredictionRecord>, Vec<Vec<DirectionalPrediction>>)> {
    check_class_tables(models)?;
    if directions.is_empty() {
        return Err(DaselError::Contract("predict_day: no directions".into()));
    }
    let store = FrameStore::new(frames);
    let anchors: Vec<Timestamp> = frames.iter().map(|f| f.timestamp).collect();

    // per_dir[d][i] is direction d's seed-averaged distribution at anchor i.
    let chunk_results: Vec<Vec<Vec<DirectionalPrediction>>> = directions
        .par_iter()
        .map(|&dir| {
            anchors
                .par_chunks(CHUNK)
                .map(|chunk| {
                    let mut windows = Vec::with_capacity(chunk.len());
                    for &anchor in chunk {
                        let mut w = directional_windows(anchor, &store, &[dir])?;
                        debug_assert_eq!(w.len(), 1, "anchor has a frame, window cannot be empty");
                        windows.append(&mut w);
                    }
                    direction_probs_batch(&windows, models)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let per_dir: Vec<Vec<DirectionalPrediction>> = chunk_results
        .into_iter()
        .map(|chunks| chunks.into_iter().flatten().collect())
        .collect();

    let mut records = Vec::with_capacity(anchors.len());
    for (i, _) in anchors.iter().enumerate() {
        let preds: Vec<DirectionalPrediction> = per_dir.iter().map(|d| d[i].clone()).collect();
        records.push(aggregate_directions(&preds)?);
    }
    if smoothing {
        temporal_smooth(&mut records);
    }
    Ok((records, per_dir))
}

pub const PREDICTION_HEADER_PREFIX: &str = "timestamp,final_label,smoothed_label,confidence,directions";

/// Writes the prediction CSV
/// (`timestamp,final_label,smoothed_label,confidence,directions,p_<class>...`).
pub fn write_predictions_csv(path: &Path, records: &[PredictionRecord], classes: &[String]) -> Result<()> {
    let mut out = String::from(PREDICTION_HEADER_PREFIX);
    for c in classes {
        write!(out, ",p_{c}").unwrap();
    }
    out.push('\n');
    for r in records {
        write!(
            out,
            "{},{},{},{:.6},{}",
            r.timestamp,
            classes[r.final_label],
            classes[r.smoothed_label],
            r.confidence(),
            r.contributing_directions
        )
        .unwrap();
        for p in &r.final_probs {
            write!(out, ",{p:.6}").unwrap();
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| DaselError::io(path, e))
}

/// Reads back a prediction CSV as (timestamp, final label, smoothed label).
pub fn read_predictions_csv(path: &Path) -> Result<Vec<(Timestamp, String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| DaselError::io(path, e))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| DaselError::format(path, "empty prediction CSV"))?;
    if !header.starts_with(PREDICTION_HEADER_PREFIX) {
        return Err(DaselError::format(path, "unexpected prediction CSV header"));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() < 5 {
            return Err(DaselError::format(path, format!("line {}: too few columns", i + 2)));
        }
        rows.push((Timestamp::parse(cols[0])?, cols[1].to_string(), cols[2].to_string()));
    }
    Ok(rows)
}
