//! BLE indoor-localization pipeline: ingestion, frequency featurization,
//! sequence segmentation, a bidirectional GRU classifier with attention
//! pooling trained from scratch, two-level ensemble inference, temporal
//! smoothing, and day-based cross-validation — plus a synthetic facility
//! simulator so the whole pipeline runs without real deployment data.

pub mod baseline;
pub mod ensemble;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod ingest;
pub mod neuralnet;
pub mod sequencing;
pub mod simulator;
pub mod timestamp;

pub use error::{DaselError, Result};
pub use timestamp::Timestamp;
