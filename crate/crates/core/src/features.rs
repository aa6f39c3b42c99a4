//! Per-second featurization.
//!
//! Labeled readings are grouped into 1-second windows. Each window yields a
//! 23-dimensional beacon appearance-frequency vector (the sequential
//! pipeline's input) and a 75-dimensional statistical vector plus dominant
//! beacons (the independent-window baseline's input). Seconds with no
//! detections produce no frame.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{DaselError, Result};
use crate::ingest::{LabeledReading, PRIMARY_BEACON_COUNT};
use crate::timestamp::Timestamp;

/// Beacons 24 and 25 were never part of the feature vector; their
/// detections still count toward the window's detection total.
pub const FREQ_DIM: usize = 23;
pub const STAT_DIM: usize = 3 * PRIMARY_BEACON_COUNT;
pub const DOMINANT_COUNT: usize = 3;

pub const FRAME_HEADER_PREFIX: &str = "timestamp,room,total";

/// All detections of one second, sharing one room label.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondGroup {
    pub timestamp: Timestamp,
    pub room: String,
    /// (beacon_id, rssi) in input order.
    pub detections: Vec<(u8, i32)>,
}

/// One second's beacon appearance-frequency vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyFrame {
    pub timestamp: Timestamp,
    /// freq[i] is the appearance frequency of beacon i+1.
    pub freq: [f64; FREQ_DIM],
    pub total_detections: u32,
    pub room: Option<String>,
}

/// One second's per-beacon statistics: mean_1..25, std_1..25, count_1..25,
/// plus the three most frequently detected beacon ids (0 = none).
#[derive(Debug, Clone, PartialEq)]
pub struct StatFrame {
    pub timestamp: Timestamp,
    pub stats: [f64; STAT_DIM],
    pub dominant: [u8; DOMINANT_COUNT],
    pub room: Option<String>,
}

/// Groups time-sorted labeled readings by second. Groups whose members
/// disagree on the room label cannot occur after alignment but are
/// rejected and counted anyway.
pub fn group_by_second(readings: &[LabeledReading]) -> (Vec<SecondGroup>, usize) {
    let mut groups: Vec<SecondGroup> = Vec::new();
    let mut rejected = 0usize;
    let mut i = 0;
    while i < readings.len() {
        let second = readings[i].reading.timestamp.epoch_secs();
        let mut j = i;
        while j < readings.len() && readings[j].reading.timestamp.epoch_secs() == second {
            j += 1;
        }
        let members = &readings[i..j];
        if members.iter().any(|m| m.room != members[0].room) {
            rejected += 1;
        } else {
            groups.push(SecondGroup {
                timestamp: Timestamp::new(second, members[0].reading.timestamp.offset_secs()),
                room: members[0].room.clone(),
                detections: members.iter().map(|m| (m.reading.beacon_id, m.reading.rssi)).collect(),
            });
        }
        i = j;
    }
    (groups, rejected)
}

/// Appearance frequency per beacon: count_i / total detections. Beacons 24
/// and 25 have no vector slot but their detections stay in the denominator.
pub fn frequency_frame(group: &SecondGroup) -> FrequencyFrame {
    let mut counts = [0u32; PRIMARY_BEACON_COUNT + 1];
    for &(id, _) in &group.detections {
        counts[id as usize] += 1;
    }
    let total: u32 = counts.iter().sum();
    let mut freq = [0.0; FREQ_DIM];
    if total > 0 {
        for i in 0..FREQ_DIM {
            freq[i] = counts[i + 1] as f64 / total as f64;
        }
    }
    FrequencyFrame {
        timestamp: group.timestamp,
        freq,
        total_detections: total,
        room: Some(group.room.clone()),
    }
}

/// Per-beacon mean, population standard deviation, and count, plus the top
/// three beacons by detection count (ties to the lower id, 0-padded).
pub fn stat_frame(group: &SecondGroup) -> StatFrame {
    let mut sum = [0.0f64; PRIMARY_BEACON_COUNT + 1];
    let mut sumsq = [0.0f64; PRIMARY_BEACON_COUNT + 1];
    let mut count = [0u32; PRIMARY_BEACON_COUNT + 1];
    for &(id, rssi) in &group.detections {
        let v = rssi as f64;
        sum[id as usize] += v;
        sumsq[id as usize] += v * v;
        count[id as usize] += 1;
    }

    let mut stats = [0.0; STAT_DIM];
    for id in 1..=PRIMARY_BEACON_COUNT {
        let n = count[id];
        if n > 0 {
            let mean = sum[id] / n as f64;
            let var = (sumsq[id] / n as f64 - mean * mean).max(0.0);
            stats[id - 1] = mean;
            stats[PRIMARY_BEACON_COUNT + id - 1] = var.sqrt();
        }
        stats[2 * PRIMARY_BEACON_COUNT + id - 1] = n as f64;
    }

    let mut order: Vec<u8> = (1..=PRIMARY_BEACON_COUNT as u8).filter(|&id| count[id as usize] > 0).collect();
    order.sort_by_key(|&id| (std::cmp::Reverse(count[id as usize]), id));
    let mut dominant = [0u8; DOMINANT_COUNT];
    for (slot, id) in dominant.iter_mut().zip(order) {
        *slot = id;
    }

    StatFrame {
        timestamp: group.timestamp,
        stats,
        dominant,
        room: Some(group.room.clone()),
    }
}

fn frame_header() -> String {
    let mut h = String::from(FRAME_HEADER_PREFIX);
    for i in 1..=FREQ_DIM {
        write!(h, ",f{i}").unwrap();
    }
    h
}

fn stat_header() -> String {
    let mut h = String::from("timestamp,room");
    for name in ["mean", "std", "count"] {
        for i in 1..=PRIMARY_BEACON_COUNT {
            write!(h, ",{name}{i}").unwrap();
        }
    }
    for i in 1..=DOMINANT_COUNT {
        write!(h, ",dom{i}").unwrap();
    }
    h
}

/// Writes frequency frames (`timestamp,room,total,f1..f23`, 9 decimals).
pub fn write_frames_csv(path: &Path, frames: &[FrequencyFrame]) -> Result<()> {
    let mut out = frame_header();
    out.push('\n');
    for f in frames {
        write!(out, "{},{},{}", f.timestamp, f.room.as_deref().unwrap_or(""), f.total_detections).unwrap();
        for v in &f.freq {
            write!(out, ",{v:.9}").unwrap();
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| DaselError::io(path, e))
}

pub fn read_frames_csv(path: &Path) -> Result<Vec<FrequencyFrame>> {
    let text = fs::read_to_string(path).map_err(|e| DaselError::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == frame_header() => {}
        _ => return Err(DaselError::format(path, "unexpected frame CSV header")),
    }
    let mut frames = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 + FREQ_DIM {
            return Err(DaselError::format(path, format!("line {}: expected {} columns", i + 1, 3 + FREQ_DIM)));
        }
        let timestamp = Timestamp::parse(cols[0])?;
        let room = (!cols[1].is_empty()).then(|| cols[1].to_string());
        let total: u32 = cols[2]
            .parse()
            .map_err(|_| DaselError::format(path, format!("line {}: bad total", i + 1)))?;
        let mut freq = [0.0; FREQ_DIM];
        for (k, v) in cols[3..].iter().enumerate() {
            freq[k] = v
                .parse()
                .map_err(|_| DaselError::format(path, format!("line {}: bad frequency", i + 1)))?;
        }
        frames.push(FrequencyFrame {
            timestamp,
            freq,
            total_detections: total,
            room,
        });
    }
    Ok(frames)
}

/// Writes stat frames (`timestamp,room,mean1..,std1..,count1..,dom1..dom3`).
pub fn write_stats_csv(path: &Path, frames: &[StatFrame]) -> Result<()> {
    let mut out = stat_header();
    out.push('\n');
    for f in frames {
        write!(out, "{},{}", f.timestamp, f.room.as_deref().unwrap_or("")).unwrap();
        for v in &f.stats {
            write!(out, ",{v:.9}").unwrap();
        }
        for d in &f.dominant {
            write!(out, ",{d}").unwrap();
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| DaselError::io(path, e))
}

pub fn read_stats_csv(path: &Path) -> Result<Vec<StatFrame>> {
    let text = fs::read_to_string(path).map_err(|e| DaselError::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == stat_header() => {}
        _ => return Err(DaselError::format(path, "unexpected stat CSV header")),
    }
    let mut frames = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 2 + STAT_DIM + DOMINANT_COUNT {
            return Err(DaselError::format(
                path,
                format!("line {}: expected {} columns", i + 1, 2 + STAT_DIM + DOMINANT_COUNT),
            ));
        }
        let timestamp = Timestamp::parse(cols[0])?;
        let room = (!cols[1].is_empty()).then(|| cols[1].to_string());
        let mut stats = [0.0; STAT_DIM];
        for (k, v) in cols[2..2 + STAT_DIM].iter().enumerate() {
            stats[k] = v
                .parse()
                .map_err(|_| DaselError::format(path, format!("line {}: bad stat", i + 1)))?;
        }
        let mut dominant = [0u8; DOMINANT_COUNT];
        for (k, v) in cols[2 + STAT_DIM..].iter().enumerate() {
            dominant[k] = v
                .parse()
                .map_err(|_| DaselError::format(path, format!("line {}: bad dominant id", i + 1)))?;
        }
        frames.push(StatFrame {
            timestamp,
            stats,
            dominant,
            room,
        });
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::BleReading;
    use proptest::prelude::*;

    fn labeled(epoch: i64, id: u8, rssi: i32, room: &str) -> LabeledReading {
        LabeledReading {
            reading: BleReading {
                timestamp: Timestamp::new(epoch, 9 * 3600),
                beacon_id: id,
                rssi,
            },
            room: room.into(),
        }
    }

    #[test]
    fn groups_by_distinct_second() {
        let readings: Vec<LabeledReading> = (0..5)
            .map(|k| labeled(10, (k + 1) as u8, -80, "a"))
            .chain((0..2).map(|k| labeled(11, (k + 1) as u8, -85, "a")))
            .collect();
        let (groups, rejected) = group_by_second(&readings);
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0].detections.len(), 5);
        assert_eq!(groups[1].detections.len(), 2);
        assert_eq!(rejected, 0);
    }

    #[test]
    fn empty_and_singleton_inputs() {
        let (groups, _) = group_by_second(&[]);
        assert!(groups.is_empty());
        let (groups, _) = group_by_second(&[labeled(5, 1, -70, "a")]);
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].detections.len(), 1);
    }

    #[test]
    fn conflicting_labels_rejected() {
        let readings = vec![labeled(10, 1, -80, "a"), labeled(10, 2, -80, "b")];
        let (groups, rejected) = group_by_second(&readings);
        assert!(groups.is_empty());
        assert_eq!(rejected, 1);
    }

    fn group(detections: Vec<(u8, i32)>) -> SecondGroup {
        SecondGroup {
            timestamp: Timestamp::new(100, 9 * 3600),
            room: "kitchen".into(),
            detections,
        }
    }

    #[test]
    fn frequency_forced_by_counts() {
        let f = frequency_frame(&group(vec![(1, -80), (4, -70), (1, -81), (4, -71), (4, -72)]));
        assert_eq!(f.total_detections, 5);
        assert!((f.freq[0] - 0.4).abs() < 1e-12);
        assert!((f.freq[3] - 0.6).abs() < 1e-12);
        assert_eq!(f.freq.iter().filter(|&&v| v != 0.0).count(), 2);
    }

    #[test]
    fn single_detection_gives_unit_frequency() {
        let f = frequency_frame(&group(vec![(7, -90)]));
        assert_eq!(f.freq[6], 1.0);
        assert_eq!(f.total_detections, 1);
    }

    #[test]
    fn beacon_24_counts_only_in_denominator() {
        let f = frequency_frame(&group(vec![(3, -80), (24, -85)]));
        assert_eq!(f.total_detections, 2);
        assert!((f.freq[2] - 0.5).abs() < 1e-12);
        let sum: f64 = f.freq.iter().sum();
        assert!((sum - 0.5).abs() < 1e-12);
    }

    #[test]
    fn stat_frame_hand_arithmetic() {
        let f = stat_frame(&group(vec![(2, -90), (2, -92)]));
        assert!((f.stats[1] - -91.0).abs() < 1e-12); // mean_2
        assert!((f.stats[26] - 1.0).abs() < 1e-12); // std_2 (population)
        assert!((f.stats[51] - 2.0).abs() < 1e-12); // count_2
    }

    #[test]
    fn single_sample_stats_and_dominant_padding() {
        let f = stat_frame(&group(vec![(5, -80)]));
        assert_eq!(f.stats[4], -80.0);
        assert_eq!(f.stats[29], 0.0);
        assert_eq!(f.stats[54], 1.0);
        assert_eq!(f.dominant, [5, 0, 0]);
    }

    #[test]
    fn dominant_ties_break_to_lower_id() {
        let mut d = vec![(2u8, -80); 3];
        d.extend(vec![(1u8, -80); 3]);
        d.push((9, -80));
        let f = stat_frame(&group(d));
        assert_eq!(f.dominant, [1, 2, 9]);
    }

    #[test]
    fn frames_csv_round_trip() {
        let frames = vec![
            frequency_frame(&group(vec![(1, -80), (4, -70)])),
            FrequencyFrame {
                timestamp: Timestamp::new(101, 9 * 3600),
                freq: [0.0; FREQ_DIM],
                total_detections: 0,
                room: None,
            },
        ];
        let f = tempfile::NamedTempFile::new().unwrap();
        write_frames_csv(f.path(), &frames).unwrap();
        let back = read_frames_csv(f.path()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].room.as_deref(), Some("kitchen"));
        assert_eq!(back[1].room, None);
        for (a, b) in frames[0].freq.iter().zip(back[0].freq.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn stats_csv_round_trip() {
        let frames = vec![stat_frame(&group(vec![(2, -90), (2, -92), (7, -60)]))];
        let f = tempfile::NamedTempFile::new().unwrap();
        write_stats_csv(f.path(), &frames).unwrap();
        let back = read_stats_csv(f.path()).unwrap();
        assert_eq!(back[0].dominant, frames[0].dominant);
        for (a, b) in frames[0].stats.iter().zip(back[0].stats.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    fn arb_detections() -> impl Strategy<Value = Vec<(u8, i32)>> {
        prop::collection::vec(((1u8..=25), (-110i32..=-30)), 1..40)
    }

    proptest! {
        #[test]
        fn order_invariance(mut detections in arb_detections(), seed in 0u64..1000) {
            let base = frequency_frame(&group(detections.clone()));
            let base_stats = stat_frame(&group(detections.clone()));
            // Deterministic shuffle.
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            detections.shuffle(&mut rng);
            let shuffled = frequency_frame(&group(detections.clone()));
            let shuffled_stats = stat_frame(&group(detections));
            prop_assert_eq!(base.freq, shuffled.freq);
            prop_assert_eq!(base.total_detections, shuffled.total_detections);
            prop_assert_eq!(base_stats.dominant, shuffled_stats.dominant);
            for (a, b) in base_stats.stats.iter().zip(shuffled_stats.stats.iter()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn duplication_preserves_freq_and_doubles_counts(detections in arb_detections()) {
            let single = frequency_frame(&group(detections.clone()));
            let single_stats = stat_frame(&group(detections.clone()));
            let mut doubled = detections.clone();
            doubled.extend(detections);
            let twice = frequency_frame(&group(doubled.clone()));
            let twice_stats = stat_frame(&group(doubled));
            for (a, b) in single.freq.iter().zip(twice.freq.iter()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            prop_assert_eq!(twice.total_detections, 2 * single.total_detections);
            for i in 0..PRIMARY_BEACON_COUNT {
                let k = 2 * PRIMARY_BEACON_COUNT + i;
                prop_assert_eq!(twice_stats.stats[k], 2.0 * single_stats.stats[k]);
            }
        }

        #[test]
        fn freq_sums_to_detected_fraction(detections in arb_detections()) {
            let f = frequency_frame(&group(detections.clone()));
            let in_slots = detections.iter().filter(|&&(id, _)| id <= FREQ_DIM as u8).count();
            let expected = in_slots as f64 / detections.len() as f64;
            let sum: f64 = f.freq.iter().sum();
            prop_assert!((sum - expected).abs() < 1e-9);
            prop_assert!(sum <= 1.0 + 1e-9);
        }
    }
}
