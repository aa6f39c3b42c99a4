//! Second-precision timestamps with a fixed UTC offset.
//!
//! All comparisons and arithmetic use the epoch value; the offset is kept
//! only so values render back exactly as they appeared in the source data
//! (`YYYY-MM-DD HH:MM:SS+HH:MM`).

use chrono::{DateTime, FixedOffset, NaiveDate, TimeZone};

use crate::error::{DaselError, Result};

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M:%S%:z";

#[derive(Debug, Clone, Copy)]
pub struct Timestamp {
    epoch_secs: i64,
    offset_secs: i32,
}

impl Timestamp {
    pub fn new(epoch_secs: i64, offset_secs: i32) -> Self {
        Timestamp {
            epoch_secs,
            offset_secs,
        }
    }

    /// Parses `YYYY-MM-DD HH:MM:SS±HH:MM`.
    pub fn parse(s: &str) -> Result<Self> {
        let dt = DateTime::parse_from_str(s.trim(), TIMESTAMP_FORMAT)
            .map_err(|e| DaselError::Data(format!("bad timestamp {s:?}: {e}")))?;
        Ok(Timestamp {
            epoch_secs: dt.timestamp(),
            offset_secs: dt.offset().local_minus_utc(),
        })
    }

    pub fn epoch_secs(&self) -> i64 {
        self.epoch_secs
    }

    pub fn offset_secs(&self) -> i32 {
        self.offset_secs
    }

    pub fn add_secs(&self, delta: i64) -> Self {
        Timestamp {
            epoch_secs: self.epoch_secs + delta,
            offset_secs: self.offset_secs,
        }
    }

    /// Calendar date in the timestamp's own offset; used for day-based folds.
    pub fn local_date(&self) -> NaiveDate {
        let offset = FixedOffset::east_opt(self.offset_secs).expect("offset in range");
        offset
            .timestamp_opt(self.epoch_secs, 0)
            .single()
            .expect("valid epoch")
            .date_naive()
    }
}

impl std::fmt::Display for Timestamp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let offset = FixedOffset::east_opt(self.offset_secs).expect("offset in range");
        let dt = offset
            .timestamp_opt(self.epoch_secs, 0)
            .single()
            .expect("valid epoch");
        write!(f, "{}", dt.format(TIMESTAMP_FORMAT))
    }
}

// Ordering and equality deliberately ignore the offset: two renderings of
// the same instant are the same timestamp.
impl PartialEq for Timestamp {
    fn eq(&self, other: &Self) -> bool {
        self.epoch_secs == other.epoch_secs
    }
}

impl Eq for Timestamp {}

impl PartialOrd for Timestamp {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Timestamp {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.epoch_secs.cmp(&other.epoch_secs)
    }
}

impl std::hash::Hash for Timestamp {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.epoch_secs.hash(state);
    }
}
