//! Flat `key = value` settings file shared by all subcommands. Every
//! tunable is available both here and as a flag; flags win.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use dasel_core::neuralnet::TrainConfig;
use dasel_core::sequencing::Direction;

#[derive(Debug, Clone, Default)]
pub struct Settings {
    map: BTreeMap<String, String>,
}

impl Settings {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                bail!("{}:{}: expected key = value", path.display(), i + 1);
            };
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(Settings { map })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|s| s.as_str())
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.map.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|_| anyhow::anyhow!("config key {key}: cannot parse {v:?}")),
        }
    }

    /// Snapshot of every effective key, for the run manifest.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.map.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<u64>()
                .map_err(|_| anyhow::anyhow!("bad seed {p:?} (expected integers separated by commas)"))
        })
        .collect()
}

pub fn parse_directions(s: &str) -> Result<Vec<Direction>> {
    s.split(',')
        .map(|p| {
            Direction::parse(p.trim()).ok_or_else(|| {
                anyhow::anyhow!(
                    "unknown direction {p:?} (expected one of {})",
                    Direction::ALL.map(|d| d.name()).join(", ")
                )
            })
        })
        .collect()
}

/// Builds the effective training configuration: defaults, then config
/// file, then flags.
pub struct TrainOverrides {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
}

pub fn effective_train_config(settings: &Settings, flags: &TrainOverrides) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    if let Some(v) = settings.parse::<usize>("train.epochs")? {
        cfg.epochs = v;
    }
    if let Some(v) = settings.parse::<usize>("train.batch_size")? {
        cfg.batch_size = v;
    }
    if let Some(v) = settings.parse::<f64>("train.learning_rate")? {
        cfg.learning_rate = v;
    }
    if let Some(v) = settings.parse::<u64>("train.shuffle_seed")? {
        cfg.shuffle_seed = Some(v);
    }
    if let Some(v) = flags.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = flags.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = flags.learning_rate {
        cfg.learning_rate = v;
    }
    Ok(cfg)
}

pub fn effective_seeds(settings: &Settings, flag: Option<&str>) -> Result<Vec<u64>> {
    if let Some(s) = flag {
        return parse_seeds(s);
    }
    if let Some(s) = settings.get("train.seeds") {
        return parse_seeds(s);
    }
    Ok(dasel_core::ensemble::DEFAULT_SEEDS.to_vec())
}
