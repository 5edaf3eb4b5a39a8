//! Run configuration: documented defaults, a `key = value` file, then
//! command-line overrides.

use std::path::Path;

use anyhow::{bail, Context, Result};
use mtlsa::dataio::{GeneratorConfig, ShiftSpec};
use mtlsa::textio::parse_key_values;
use mtlsa::trainer::{TrainConfig, TRAIN_KEYS};

/// Keys describing the synthetic data, besides the shared `seed`.
pub const DATA_KEYS: [&str; 13] = [
    "n_a",
    "n_b",
    "classes_a",
    "classes_b",
    "dim",
    "separation",
    "cluster_std",
    "task_angle",
    "shift_offset",
    "shift_scale",
    "shift_rotation",
    "label_noise_rate",
    "shifted_fraction",
];

/// Keys for the ablation matrix.
pub const MATRIX_KEYS: [&str; 3] = ["train_fraction", "seeds", "strategies"];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub data: GeneratorConfig,
    pub train_fraction: f64,
    pub seeds: Vec<u64>,
    /// Roster ids; empty means the full roster.
    pub strategies: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train: TrainConfig::default(),
            data: GeneratorConfig::default(),
            train_fraction: 0.8,
            seeds: vec![0, 1, 2],
            strategies: Vec::new(),
        }
    }
}

fn list<T: std::str::FromStr>(value: &str, key: &str) -> Result<Vec<T>> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|s| s.trim().parse().ok().with_context(|| format!("bad entry '{s}' in {key}")))
        .collect()
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Every key this configuration understands.
    pub fn keys() -> impl Iterator<Item = &'static str> {
        TRAIN_KEYS.into_iter().chain(DATA_KEYS).chain(MATRIX_KEYS)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let num = |v: &str| -> Result<f64> { v.parse().ok().with_context(|| format!("bad value '{v}' for {key}")) };
        let count = |v: &str| -> Result<usize> { v.parse().ok().with_context(|| format!("bad value '{v}' for {key}")) };
        let d = &mut self.data;
        match key {
            "seed" => {
                self.train.set(key, value)?;
                d.seed = self.train.seed;
            }
            "n_a" => d.n_a = count(value)?,
            "n_b" => d.n_b = count(value)?,
            "classes_a" => d.classes_a = count(value)?,
            "classes_b" => d.classes_b = count(value)?,
            "dim" => d.dim = count(value)?,
            "separation" => d.separation = num(value)?,
            "cluster_std" => d.cluster_std = num(value)?,
            "task_angle" => d.task_angle = num(value)?,
            "shift_offset" => d.shift.mean_offset = list(value, key)?,
            "shift_scale" => d.shift.scale = num(value)?,
            "shift_rotation" => d.shift.rotation = num(value)?,
            "label_noise_rate" => d.shift.label_noise_rate = num(value)?,
            "shifted_fraction" => d.shift.shifted_fraction = num(value)?,
            "train_fraction" => self.train_fraction = num(value)?,
            "seeds" => self.seeds = list(value, key)?,
            "strategies" => self.strategies = list(value, key)?,
            k if TRAIN_KEYS.contains(&k) => self.train.set(k, value)?,
            other => bail!(
                "unknown config key '{other}' (valid: {})",
                Self::keys().collect::<Vec<_>>().join(", ")
            ),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let d = &self.data;
        let s: &ShiftSpec = &d.shift;
        Some(match key {
            "n_a" => d.n_a.to_string(),
            "n_b" => d.n_b.to_string(),
            "classes_a" => d.classes_a.to_string(),
            "classes_b" => d.classes_b.to_string(),
            "dim" => d.dim.to_string(),
            "separation" => d.separation.to_string(),
            "cluster_std" => d.cluster_std.to_string(),
            "task_angle" => d.task_angle.to_string(),
            "shift_offset" => join(&s.mean_offset),
            "shift_scale" => s.scale.to_string(),
            "shift_rotation" => s.rotation.to_string(),
            "label_noise_rate" => s.label_noise_rate.to_string(),
            "shifted_fraction" => s.shifted_fraction.to_string(),
            "train_fraction" => self.train_fraction.to_string(),
            "seeds" => join(&self.seeds),
            "strategies" => self.strategies.join(","),
            k => return self.train.get(k),
        })
    }

    /// Applies a `key = value` file.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        for (line, key, value) in parse_key_values(&text, path)? {
            self.set(&key, &value)
                .with_context(|| format!("{}:{line}", path.display()))?;
        }
        Ok(())
    }

    /// Applies `key=value` overrides from the command line.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for o in overrides {
            let Some((k, v)) = o.split_once('=') else {
                bail!("override '{o}' is not of the form key=value");
            };
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    /// Full configuration as a `key = value` file.
    pub fn to_text(&self) -> String {
        Self::keys()
            .map(|k| format!("{k} = {}\n", self.get(k).unwrap_or_default()))
            .collect()
    }
}
