//! Sequence construction.
//!
//! Training sequences are contiguous same-room runs of frames; inference
//! sequences are the seven directional windows built around a prediction
//! anchor. Both are left-padded with zero vectors to 50 timesteps so the
//! most recent frame always sits at the final position.

use crate::error::{DaselError, Result};
use crate::features::{FrequencyFrame, FREQ_DIM};
use crate::timestamp::Timestamp;

pub const SEQ_LEN: usize = 50;
pub const MIN_TRAIN_RUN: usize = 3;

/// The seven temporal windows around an anchor timestamp, in their
/// canonical order. Offsets are inclusive seconds relative to the anchor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    Backward10,
    Centered10,
    Forward10,
    Backward15,
    Forward15,
    AsymmPast,
    AsymmFuture,
}

impl Direction {
    pub const ALL: [Direction; 7] = [
        Direction::Backward10,
        Direction::Centered10,
        Direction::Forward10,
        Direction::Backward15,
        Direction::Forward15,
        Direction::AsymmPast,
        Direction::AsymmFuture,
    ];

    /// Inclusive (lo, hi) offsets of the window in seconds.
    pub fn offsets(self) -> (i64, i64) {
        match self {
            Direction::Backward10 => (-9, 0),
            Direction::Centered10 => (-4, 5),
            Direction::Forward10 => (0, 9),
            Direction::Backward15 => (-14, 0),
            Direction::Forward15 => (0, 14),
            Direction::AsymmPast => (-11, 3),
            Direction::AsymmFuture => (-3, 11),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Direction::Backward10 => "backward_10",
            Direction::Centered10 => "centered_10",
            Direction::Forward10 => "forward_10",
            Direction::Backward15 => "backward_15",
            Direction::Forward15 => "forward_15",
            Direction::AsymmPast => "asymm_past",
            Direction::AsymmFuture => "asymm_future",
        }
    }

    pub fn parse(s: &str) -> Option<Direction> {
        Direction::ALL.iter().copied().find(|d| d.name() == s)
    }

    /// Position in the canonical listing; fixes summation order downstream.
    pub fn rank(self) -> usize {
        Direction::ALL.iter().position(|&d| d == self).unwrap()
    }
}

/// A fixed-length (50-step) frame sequence with right-aligned real frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    /// SEQ_LEN x FREQ_DIM, row-major; padded rows are all zero.
    pub frames: Vec<f64>,
    /// true marks a real frame; true positions are contiguous and
    /// right-aligned.
    pub mask: [bool; SEQ_LEN],
    pub room: Option<String>,
    /// 1-based contiguous-run id (training sequences).
    pub group_id: u32,
    /// Prediction target timestamp (inference sequences).
    pub anchor: Option<Timestamp>,
    pub direction: Option<Direction>,
}

impl Sequence {
    pub fn real_len(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Index of the first real frame (SEQ_LEN when fully padded).
    pub fn first_real(&self) -> usize {
        self.mask.iter().position(|&m| m).unwrap_or(SEQ_LEN)
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.frames[t * FREQ_DIM..(t + 1) * FREQ_DIM]
    }

    /// The real frames, in order, without padding.
    pub fn strip_padding(&self) -> Vec<[f64; FREQ_DIM]> {
        (self.first_real()..SEQ_LEN)
            .map(|t| {
                let mut row = [0.0; FREQ_DIM];
                row.copy_from_slice(self.frame(t));
                row
            })
            .collect()
    }
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct SegmentStats {
    /// Runs shorter than MIN_TRAIN_RUN, discarded.
    pub discarded_short: usize,
    /// Runs longer than SEQ_LEN, truncated to their last SEQ_LEN frames.
    pub truncated: usize,
    /// Label changes observed (= number of runs).
    pub runs: usize,
}

/// Left-pads 1..=50 frames to a 50-step sequence with a right-aligned mask.
pub fn pad_and_mask(frames: &[[f64; FREQ_DIM]]) -> Result<Sequence> {
    if frames.is_empty() || frames.len() > SEQ_LEN {
        return Err(DaselError::Contract(format!(
            "pad_and_mask requires 1..={SEQ_LEN} frames, got {}",
            frames.len()
        )));
    }
    let start = SEQ_LEN - frames.len();
    let mut data = vec![0.0; SEQ_LEN * FREQ_DIM];
    let mut mask = [false; SEQ_LEN];
    for (k, frame) in frames.iter().enumerate() {
        let t = start + k;
        data[t * FREQ_DIM..(t + 1) * FREQ_DIM].copy_from_slice(frame);
        mask[t] = true;
    }
    Ok(Sequence {
        frames: data,
        mask,
        room: None,
        group_id: 0,
        anchor: None,
        direction: None,
    })
}

/// Splits a labeled frame stream into contiguous same-room training
/// sequences. Group ids increment exactly at label changes (the first
/// frame counts as a change, so ids start at 1). Runs shorter than 3
/// frames are discarded; runs longer than 50 keep their last 50 frames.
pub fn segment_by_room(frames: &[FrequencyFrame]) -> Result<(Vec<Sequence>, SegmentStats)> {
    let mut stats = SegmentStats::default();
    let mut sequences = Vec::new();
    let mut run: Vec<&FrequencyFrame> = Vec::new();
    let mut group_id = 0u32;

    let flush = |run: &mut Vec<&FrequencyFrame>, group_id: u32, stats: &mut SegmentStats, out: &mut Vec<Sequence>| -> Result<()> {
        if run.is_empty() {
            return Ok(());
        }
        stats.runs += 1;
        if run.len() < MIN_TRAIN_RUN {
            stats.discarded_short += 1;
            run.clear();
            return Ok(());
        }
        if run.len() > SEQ_LEN {
            stats.truncated += 1;
            run.drain(..run.len() - SEQ_LEN);
        }
        let rows: Vec<[f64; FREQ_DIM]> = run.iter().map(|f| f.freq).collect();
        let mut seq = pad_and_mask(&rows)?;
        seq.room = run[0].room.clone();
        seq.group_id = group_id;
        out.push(seq);
        run.clear();
        Ok(())
    };

    for frame in frames {
        let room = frame
            .room
            .as_deref()
            .ok_or_else(|| DaselError::Contract("segment_by_room requires labeled frames".into()))?;
        let changed = match run.last() {
            Some(prev) => prev.room.as_deref() != Some(room),
            None => true,
        };
        if changed {
            flush(&mut run, group_id, &mut stats, &mut sequences)?;
            group_id += 1;
        }
        run.push(frame);
    }
    flush(&mut run, group_id, &mut stats, &mut sequences)?;
    Ok((sequences, stats))
}

/// Assigns Eq.-style group ids to a label stream without building
/// sequences; group ids increment at every label change, starting at 1.
pub fn group_ids(labels: &[&str]) -> Vec<u32> {
    let mut ids = Vec::with_capacity(labels.len());
    let mut id = 0u32;
    for (i, label) in labels.iter().enumerate() {
        if i == 0 || labels[i - 1] != *label {
            id += 1;
        }
        ids.push(id);
    }
    ids
}

/// Read-only time-indexed view over one day's frames, sorted by timestamp.
pub struct FrameStore<'a> {
    frames: &'a [FrequencyFrame],
}

impl<'a> FrameStore<'a> {
    pub fn new(frames: &'a [FrequencyFrame]) -> Self {
        debug_assert!(frames.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
        FrameStore { frames }
    }

    pub fn frames(&self) -> &'a [FrequencyFrame] {
        self.frames
    }

    /// Frames with timestamps in [lo, hi] (inclusive), in time order.
    pub fn range(&self, lo: i64, hi: i64) -> &'a [FrequencyFrame] {
        let start = self.frames.partition_point(|f| f.timestamp.epoch_secs() < lo);
        let end = self.frames.partition_point(|f| f.timestamp.epoch_secs() <= hi);
        &self.frames[start..end]
    }
}

/// Builds the directional windows around `anchor` from existing frames.
/// Window membership is by timestamp value, so gaps in the second grid
/// shrink a window rather than extending its reach. Empty windows are
/// omitted; windows shorter than 3 frames are kept.
pub fn directional_windows(
    anchor: Timestamp,
    store: &FrameStore<'_>,
    directions: &[Direction],
) -> Result<Vec<Sequence>> {
    let t = anchor.epoch_secs();
    let mut windows = Vec::with_capacity(directions.len());
    for &dir in directions {
        let (lo, hi) = dir.offsets();
        let frames = store.range(t + lo, t + hi);
        if frames.is_empty() {
            continue;
        }
        let rows: Vec<[f64; FREQ_DIM]> = frames.iter().map(|f| f.freq).collect();
        let mut seq = pad_and_mask(&rows)?;
        seq.anchor = Some(anchor);
        seq.direction = Some(dir);
        windows.push(seq);
    }
    Ok(windows)
}
