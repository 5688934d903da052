//! Run configuration: built-in defaults, then the TOML file, then flags.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use toml::Value;

use semtrack::data::DatasetSpec;
use semtrack::track::TrackConfig;
use semtrack::train::TrainConfig;

pub const DEFAULT_SEED: u64 = 1;

/// ```toml
/// seed = 1
/// [gen]    # synthetic dataset
/// [train]  # offline training
/// [track]  # online tracking
/// ```
///
/// Sections may be partial; missing keys keep their defaults. The `seed`
/// keys inside sections are replaced by per-stage seeds derived from the
/// master seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub gen: DatasetSpec,
    pub train: TrainConfig,
    pub track: TrackConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: DEFAULT_SEED,
            gen: DatasetSpec::default(),
            train: TrainConfig::default(),
            track: TrackConfig::desk(),
        }
    }
}

/// Recursively overlays `top` on `base`; tables merge key by key, anything
/// else is replaced.
fn overlay(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Table(b), Value::Table(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => overlay(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let file: Value = toml::from_str(text)?;
        let mut merged = Value::try_from(RunConfig::default())?;
        if let Value::Table(t) = &file {
            if let Some(k) = t.keys().find(|k| !["seed", "gen", "train", "track"].contains(&k.as_str())) {
                bail!("unknown config key {k:?}");
            }
        }
        overlay(&mut merged, file);
        Ok(merged.try_into()?)
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                RunConfig::from_toml(&text).with_context(|| format!("in config {}", p.display()))
            }
        }
    }
}
