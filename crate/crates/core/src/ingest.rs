//! Raw BLE scan and annotation ingestion.
//!
//! Readers are tolerant: a malformed row is recorded with its line number
//! and skipped, and processing continues. Only an unreadable file or a bad
//! header is fatal. Row diagnostics end up in a machine-readable drop
//! report, never interleaved with data output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{DaselError, Result};
use crate::timestamp::Timestamp;

pub const PRIMARY_BEACON_COUNT: usize = 25;

pub const BLE_HEADER: &str = "timestamp,mac_address,rssi";
pub const LABELS_HEADER: &str = "start,end,room,observer_id";
pub const MACMAP_HEADER: &str = "mac_address,beacon_id";
pub const LABELED_HEADER: &str = "timestamp,beacon_id,rssi,room";

/// One timestamped beacon detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BleReading {
    pub timestamp: Timestamp,
    /// Beacon identifier, 1..=25.
    pub beacon_id: u8,
    /// Signal strength in dBm; nearer zero is stronger.
    pub rssi: i32,
}

/// One manually annotated stay: the caregiver was in `room` during
/// `[start, end]` according to `observer_id`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelInterval {
    pub start: Timestamp,
    pub end: Timestamp,
    pub room: String,
    pub observer_id: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledReading {
    pub reading: BleReading,
    pub room: String,
}

/// Injective MAC address -> beacon id map covering all 25 primary beacons.
#[derive(Debug, Clone)]
pub struct MacMap {
    entries: BTreeMap<String, u8>,
}

impl MacMap {
    pub fn new(entries: BTreeMap<String, u8>) -> Result<Self> {
        if entries.len() != PRIMARY_BEACON_COUNT {
            return Err(DaselError::Data(format!(
                "mac map must have exactly {PRIMARY_BEACON_COUNT} entries, got {}",
                entries.len()
            )));
        }
        let mut seen = [false; PRIMARY_BEACON_COUNT + 1];
        for (mac, &id) in &entries {
            if id == 0 || id as usize > PRIMARY_BEACON_COUNT {
                return Err(DaselError::Data(format!(
                    "mac map: beacon id {id} for {mac} outside 1..={PRIMARY_BEACON_COUNT}"
                )));
            }
            if seen[id as usize] {
                return Err(DaselError::Data(format!(
                    "mac map: beacon id {id} mapped from more than one MAC"
                )));
            }
            seen[id as usize] = true;
        }
        Ok(MacMap { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| DaselError::io(path, e))?;
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == MACMAP_HEADER => {}
            _ => return Err(DaselError::format(path, format!("expected header `{MACMAP_HEADER}`"))),
        }
        let mut entries = BTreeMap::new();
        for (i, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let (mac, id) = match (parts.next(), parts.next(), parts.next()) {
                (Some(mac), Some(id), None) => (mac.trim(), id.trim()),
                _ => {
                    return Err(DaselError::format(path, format!("line {}: expected 2 columns", i + 1)))
                }
            };
            let id: u8 = id
                .parse()
                .map_err(|_| DaselError::format(path, format!("line {}: bad beacon id {id:?}", i + 1)))?;
            if entries.insert(mac.to_string(), id).is_some() {
                return Err(DaselError::format(path, format!("line {}: duplicate MAC {mac}", i + 1)));
            }
        }
        MacMap::new(entries)
    }

    pub fn get(&self, mac: &str) -> Option<u8> {
        self.entries.get(mac).copied()
    }

    /// Entries sorted by beacon id, for serialization.
    pub fn by_id(&self) -> Vec<(u8, &str)> {
        let mut v: Vec<(u8, &str)> = self.entries.iter().map(|(m, &id)| (id, m.as_str())).collect();
        v.sort();
        v
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = String::from(MACMAP_HEADER);
        out.push('\n');
        for (id, mac) in self.by_id() {
            writeln!(out, "{mac},{id}").unwrap();
        }
        fs::write(path, out).map_err(|e| DaselError::io(path, e))
    }
}

/// One skipped input row, with the reason it was skipped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowDrop {
    pub path: PathBuf,
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Default, Clone)]
pub struct IngestReport {
    pub rows_parsed: usize,
    /// BLE rows whose MAC is not one of the 25 primary beacons.
    pub dropped_unknown_mac: usize,
    /// Label rows from other observers.
    pub dropped_other_observer: usize,
    /// Label rows with a missing end or an empty room (deleted records).
    pub dropped_incomplete: usize,
    pub row_errors: Vec<RowDrop>,
}

impl IngestReport {
    pub fn merge(&mut self, other: IngestReport) {
        self.rows_parsed += other.rows_parsed;
        self.dropped_unknown_mac += other.dropped_unknown_mac;
        self.dropped_other_observer += other.dropped_other_observer;
        self.dropped_incomplete += other.dropped_incomplete;
        self.row_errors.extend(other.row_errors);
    }
}

fn split_columns(line: &str, n: usize) -> Option<Vec<&str>> {
    let parts: Vec<&str> = line.split(',').map(str::trim).collect();
    (parts.len() == n).then_some(parts)
}

/// Parses a raw BLE scan CSV (`timestamp,mac_address,rssi`), filtering to
/// the primary beacons via `mac_map`. Output is sorted by timestamp; rows
/// with equal timestamps keep their input order.
pub fn parse_ble_csv(path: &Path, mac_map: &MacMap) -> Result<(Vec<BleReading>, IngestReport)> {
    let text = fs::read_to_string(path).map_err(|e| DaselError::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == BLE_HEADER => {}
        _ => return Err(DaselError::format(path, format!("expected header `{BLE_HEADER}`"))),
    }

    let mut report = IngestReport::default();
    let mut readings = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let Some(cols) = split_columns(line, 3) else {
            report.row_errors.push(RowDrop {
                path: path.to_path_buf(),
                line: lineno,
                reason: "expected 3 columns".into(),
            });
            continue;
        };
        let timestamp = match Timestamp::parse(cols[0]) {
            Ok(t) => t,
            Err(e) => {
                report.row_errors.push(RowDrop {
                    path: path.to_path_buf(),
                    line: lineno,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let rssi: i32 = match cols[2].parse() {
            Ok(v) => v,
            Err(_) => {
                report.row_errors.push(RowDrop {
                    path: path.to_path_buf(),
                    line: lineno,
                    reason: format!("bad RSSI {:?}", cols[2]),
                });
                continue;
            }
        };
        if !(-120..=0).contains(&rssi) {
            report.row_errors.push(RowDrop {
                path: path.to_path_buf(),
                line: lineno,
                reason: format!("RSSI {rssi} outside [-120, 0]"),
            });
            continue;
        }
        let Some(beacon_id) = mac_map.get(cols[1]) else {
            report.dropped_unknown_mac += 1;
            continue;
        };
        report.rows_parsed += 1;
        readings.push(BleReading {
            timestamp,
            beacon_id,
            rssi,
        });
    }
    // Stable: equal timestamps preserve input order.
    readings.sort_by_key(|r| r.timestamp);
    Ok((readings, report))
}

/// Parses an annotation CSV (`start,end,room,observer_id`), keeping only
/// complete intervals from `observer_id`. Output sorted by start.
pub fn parse_labels_csv(path: &Path, observer_id: u32) -> Result<(Vec<LabelInterval>, IngestReport)> {
    let text = fs::read_to_string(path).map_err(|e| DaselError::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == LABELS_HEADER => {}
        _ => return Err(DaselError::format(path, format!("expected header `{LABELS_HEADER}`"))),
    }

    let mut report = IngestReport::default();
    let mut intervals = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let Some(cols) = split_columns(line, 4) else {
            report.row_errors.push(RowDrop {
                path: path.to_path_buf(),
                line: lineno,
                reason: "expected 4 columns".into(),
            });
            continue;
        };
        let observer: u32 = match cols[3].parse() {
            Ok(v) => v,
            Err(_) => {
                report.row_errors.push(RowDrop {
                    path: path.to_path_buf(),
                    line: lineno,
                    reason: format!("bad observer id {:?}", cols[3]),
                });
                continue;
            }
        };
        if observer != observer_id {
            report.dropped_other_observer += 1;
            continue;
        }
        // An empty end marks an interval that was never closed; an empty
        // room marks a deleted record. Both are dropped, not errors.
        if cols[1].is_empty() || cols[2].is_empty() {
            report.dropped_incomplete += 1;
            continue;
        }
        let start = match Timestamp::parse(cols[0]) {
            Ok(t) => t,
            Err(e) => {
                report.row_errors.push(RowDrop {
                    path: path.to_path_buf(),
                    line: lineno,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let end = match Timestamp::parse(cols[1]) {
            Ok(t) => t,
            Err(e) => {
                report.row_errors.push(RowDrop {
                    path: path.to_path_buf(),
                    line: lineno,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        if start >= end {
            report.row_errors.push(RowDrop {
                path: path.to_path_buf(),
                line: lineno,
                reason: format!("start {start} not before end {end}"),
            });
            continue;
        }
        report.rows_parsed += 1;
        intervals.push(LabelInterval {
            start,
            end,
            room: cols[2].to_string(),
            observer_id: observer,
        });
    }
    intervals.sort_by_key(|iv| (iv.start, iv.end));
    Ok((intervals, report))
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AlignStats {
    pub total_readings: usize,
    pub labeled_readings: usize,
    /// labeled / total; 0 when there were no readings.
    pub coverage: f64,
    /// Readings that fell inside more than one interval.
    pub overlap_hits: usize,
}

/// Labels each reading with the room of the interval containing its
/// timestamp (closed on both ends). Readings outside every interval are
/// excluded. When intervals overlap, the later-starting interval wins and
/// the occurrence is counted.
pub fn align_labels(
    readings: &[BleReading],
    intervals: &[LabelInterval],
) -> (Vec<LabeledReading>, AlignStats) {
    let mut stats = AlignStats {
        total_readings: readings.len(),
        ..Default::default()
    };
    let mut labeled = Vec::new();

    // Intervals sorted by (start, end); readings sorted by time. Keep a
    // small active set instead of assuming disjointness.
    let mut next = 0usize;
    let mut active: Vec<usize> = Vec::new();
    for reading in readings {
        let t = reading.timestamp;
        while next < intervals.len() && intervals[next].start <= t {
            active.push(next);
            next += 1;
        }
        active.retain(|&i| intervals[i].end >= t);

        let mut hits = active.iter().filter(|&&i| intervals[i].start <= t);
        if let Some(&first) = hits.next() {
            // `active` is in (start, end) order, so the last hit is the
            // later-starting interval.
            let winner = hits.next_back().copied().unwrap_or(first);
            if winner != first {
                stats.overlap_hits += 1;
            }
            stats.labeled_readings += 1;
            labeled.push(LabeledReading {
                reading: *reading,
                room: intervals[winner].room.clone(),
            });
        }
    }

    stats.coverage = if stats.total_readings == 0 {
        0.0
    } else {
        stats.labeled_readings as f64 / stats.total_readings as f64
    };
    (labeled, stats)
}

/// Writes readings back out in the raw BLE CSV format.
pub fn write_ble_csv(path: &Path, readings: &[BleReading], mac_map: &MacMap) -> Result<()> {
    let mut mac_of = [""; PRIMARY_BEACON_COUNT + 1];
    for (id, mac) in mac_map.by_id() {
        mac_of[id as usize] = mac;
    }
    let mut out = String::from(BLE_HEADER);
    out.push('\n');
    for r in readings {
        writeln!(out, "{},{},{}", r.timestamp, mac_of[r.beacon_id as usize], r.rssi).unwrap();
    }
    fs::write(path, out).map_err(|e| DaselError::io(path, e))
}

/// Writes the labeled dataset (`timestamp,beacon_id,rssi,room`).
pub fn write_labeled_csv(path: &Path, labeled: &[LabeledReading]) -> Result<()> {
    let mut out = String::from(LABELED_HEADER);
    out.push('\n');
    for l in labeled {
        writeln!(
            out,
            "{},{},{},{}",
            l.reading.timestamp, l.reading.beacon_id, l.reading.rssi, l.room
        )
        .unwrap();
    }
    fs::write(path, out).map_err(|e| DaselError::io(path, e))
}

/// Reads the labeled dataset back (inverse of [`write_labeled_csv`]).
pub fn read_labeled_csv(path: &Path) -> Result<Vec<LabeledReading>> {
    let text = fs::read_to_string(path).map_err(|e| DaselError::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == LABELED_HEADER => {}
        _ => return Err(DaselError::format(path, format!("expected header `{LABELED_HEADER}`"))),
    }
    let mut labeled = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cols = split_columns(line, 4)
            .ok_or_else(|| DaselError::format(path, format!("line {}: expected 4 columns", i + 1)))?;
        let timestamp = Timestamp::parse(cols[0])?;
        let beacon_id: u8 = cols[1]
            .parse()
            .map_err(|_| DaselError::format(path, format!("line {}: bad beacon id", i + 1)))?;
        let rssi: i32 = cols[2]
            .parse()
            .map_err(|_| DaselError::format(path, format!("line {}: bad RSSI", i + 1)))?;
        labeled.push(LabeledReading {
            reading: BleReading {
                timestamp,
                beacon_id,
                rssi,
            },
            room: cols[3].to_string(),
        });
    }
    Ok(labeled)
}

/// Writes per-row drop diagnostics as CSV (`file,line,reason`).
pub fn write_drop_report(path: &Path, report: &IngestReport) -> Result<()> {
    let mut out = String::from("file,line,reason\n");
    for d in &report.row_errors {
        writeln!(out, "{},{},{}", d.path.display(), d.line, d.reason.replace(',', ";")).unwrap();
    }
    fs::write(path, out).map_err(|e| DaselError::io(path, e))
}
