//! Flat `key = value` run configuration with command-line overrides.
//!
//! Unknown keys are rejected. The canonical rendering (every key, fixed
//! order) is what stage hashes are computed from, so two configs that mean
//! the same thing hash the same regardless of comments or key order.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::attacks::{AttackConfig, AttackKind};
use crate::detector::DetectorParams;
use crate::error::{Error, Result};
use crate::mlp::TrainConfig;

/// Environment variable that overrides the configured root seed.
pub const SEED_ENV: &str = "ASEED";

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Blobs {
        classes: usize,
        dim: usize,
        per_class: usize,
        spread: f64,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
        /// Use only the first `limit` samples (0 = all).
        limit: usize,
    },
}

/// Fractions of the dataset assigned to each role; must sum to at most 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub normal: f64,
    pub calibration: f64,
    pub holdout: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataSource,
    pub split: SplitFractions,
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
    pub attack: AttackConfig,
    pub detector: DetectorParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 20190101,
            data: DataSource::Blobs {
                classes: 3,
                dim: 20,
                per_class: 800,
                spread: 0.2,
            },
            split: SplitFractions {
                train: 0.5,
                normal: 0.25,
                calibration: 0.125,
                holdout: 0.125,
            },
            hidden: vec![64, 48, 32, 24, 16],
            train: TrainConfig {
                epochs: 200,
                ..TrainConfig::default()
            },
            attack: AttackConfig::cw_cifar(),
            detector: DetectorParams::default(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key} = {value:?}: {e}")))
}

impl RunConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::from_text(&text)
    }

    /// Applies `key=value` overrides, then the `ASEED` environment variable.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            self.set(k.trim(), v.trim())?;
        }
        if let Ok(seed) = std::env::var(SEED_ENV) {
            self.set("seed", seed.trim())?;
        }
        self.validate()
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse(key, value)?,
            "data.source" => {
                self.data = match value {
                    "blobs" => RunConfig::default().data,
                    "idx" => DataSource::Idx {
                        images: PathBuf::new(),
                        labels: PathBuf::new(),
                        limit: 0,
                    },
                    _ => return Err(Error::Config(format!("unknown data.source {value:?}"))),
                }
            }
            "data.classes" | "data.dim" | "data.per_class" | "data.spread" => {
                let DataSource::Blobs {
                    classes,
                    dim,
                    per_class,
                    spread,
                } = &mut self.data
                else {
                    return Err(Error::Config(format!("{key} requires data.source = blobs")));
                };
                match key {
                    "data.classes" => *classes = parse(key, value)?,
                    "data.dim" => *dim = parse(key, value)?,
                    "data.per_class" => *per_class = parse(key, value)?,
                    _ => *spread = parse(key, value)?,
                }
            }
            "data.idx_images" | "data.idx_labels" | "data.limit" => {
                let DataSource::Idx { images, labels, limit } = &mut self.data else {
                    return Err(Error::Config(format!("{key} requires data.source = idx")));
                };
                match key {
                    "data.idx_images" => *images = PathBuf::from(value),
                    "data.idx_labels" => *labels = PathBuf::from(value),
                    _ => *limit = parse(key, value)?,
                }
            }
            "split.train" => self.split.train = parse(key, value)?,
            "split.normal" => self.split.normal = parse(key, value)?,
            "split.calibration" => self.split.calibration = parse(key, value)?,
            "split.holdout" => self.split.holdout = parse(key, value)?,
            "net.hidden" => {
                self.hidden = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| parse(key, s))
                    .collect::<Result<_>>()?
            }
            "train.epochs" => self.train.epochs = parse(key, value)?,
            "train.batch_size" => self.train.batch_size = parse(key, value)?,
            "train.learning_rate" => self.train.learning_rate = parse(key, value)?,
            "train.momentum" => self.train.momentum = parse(key, value)?,
            "attack.preset" => {
                let target = self.attack.target;
                self.attack = match value {
                    "cw_mnist" => AttackConfig::cw_mnist(),
                    "cw_cifar" => AttackConfig::cw_cifar(),
                    _ => return Err(Error::Config(format!("unknown attack.preset {value:?}"))),
                };
                self.attack.target = target;
            }
            "attack.kind" => self.attack.kind = parse::<AttackKind>(key, value)?,
            "attack.epsilon" => self.attack.epsilon = parse(key, value)?,
            "attack.step_size" => self.attack.step_size = parse(key, value)?,
            "attack.steps" => self.attack.steps = parse(key, value)?,
            "attack.learning_rate" => self.attack.learning_rate = parse(key, value)?,
            "attack.initial_constant" => self.attack.initial_constant = parse(key, value)?,
            "attack.confidence" => self.attack.confidence = parse(key, value)?,
            "attack.binary_search_steps" => self.attack.binary_search_steps = parse(key, value)?,
            "detector.alpha" => self.detector.alpha = parse(key, value)?,
            "detector.smoothing" => self.detector.smoothing = parse(key, value)?,
            "detector.k" => self.detector.k = parse(key, value)?,
            "detector.max_components" => self.detector.max_components = parse(key, value)?,
            "detector.min_attack_success" => self.detector.min_attack_success = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.split;
        let fr = [s.train, s.normal, s.calibration, s.holdout];
        if fr.iter().any(|f| !(*f > 0.0)) || fr.iter().sum::<f64>() > 1.0 + 1e-9 {
            return Err(Error::Config("split fractions must be positive and sum to <= 1".into()));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        let mut train = self.train;
        train.seed = self.seed;
        train.validate()?;
        self.attack.validate()?;
        if !(self.detector.alpha > 0.0 && self.detector.alpha < 1.0) || self.detector.k == 0 {
            return Err(Error::Config("detector.alpha must be in (0, 1) and detector.k >= 1".into()));
        }
        Ok(())
    }

    /// Every key in fixed order, one `key = value` per line.
    pub fn canonical(&self) -> String {
        let mut lines: Vec<(String, String)> = vec![("seed".into(), self.seed.to_string())];
        match &self.data {
            DataSource::Blobs {
                classes,
                dim,
                per_class,
                spread,
            } => {
                lines.push(("data.source".into(), "blobs".into()));
                lines.push(("data.classes".into(), classes.to_string()));
                lines.push(("data.dim".into(), dim.to_string()));
                lines.push(("data.per_class".into(), per_class.to_string()));
                lines.push(("data.spread".into(), spread.to_string()));
            }
            DataSource::Idx { images, labels, limit } => {
                lines.push(("data.source".into(), "idx".into()));
                lines.push(("data.idx_images".into(), images.display().to_string()));
                lines.push(("data.idx_labels".into(), labels.display().to_string()));
                lines.push(("data.limit".into(), limit.to_string()));
            }
        }
        let s = &self.split;
        lines.push(("split.train".into(), s.train.to_string()));
        lines.push(("split.normal".into(), s.normal.to_string()));
        lines.push(("split.calibration".into(), s.calibration.to_string()));
        lines.push(("split.holdout".into(), s.holdout.to_string()));
        let hidden: Vec<String> = self.hidden.iter().map(ToString::to_string).collect();
        lines.push(("net.hidden".into(), hidden.join(",")));
        let t = &self.train;
        lines.push(("train.epochs".into(), t.epochs.to_string()));
        lines.push(("train.batch_size".into(), t.batch_size.to_string()));
        lines.push(("train.learning_rate".into(), t.learning_rate.to_string()));
        lines.push(("train.momentum".into(), t.momentum.to_string()));
        let a = &self.attack;
        lines.push(("attack.kind".into(), a.kind.to_string()));
        lines.push(("attack.epsilon".into(), a.epsilon.to_string()));
        lines.push(("attack.step_size".into(), a.step_size.to_string()));
        lines.push(("attack.steps".into(), a.steps.to_string()));
        lines.push(("attack.learning_rate".into(), a.learning_rate.to_string()));
        lines.push(("attack.initial_constant".into(), a.initial_constant.to_string()));
        lines.push(("attack.confidence".into(), a.confidence.to_string()));
        lines.push(("attack.binary_search_steps".into(), a.binary_search_steps.to_string()));
        let d = &self.detector;
        lines.push(("detector.alpha".into(), d.alpha.to_string()));
        lines.push(("detector.smoothing".into(), d.smoothing.to_string()));
        lines.push(("detector.k".into(), d.k.to_string()));
        lines.push(("detector.max_components".into(), d.max_components.to_string()));
        lines.push(("detector.min_attack_success".into(), d.min_attack_success.to_string()));
        lines.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// SHA-256 (hex) over the canonical lines whose keys start with any of
    /// `prefixes`, plus the stage name.
    pub fn stage_hash(&self, stage: &str, prefixes: &[&str]) -> String {
        let mut h = Sha256::new();
        h.update(stage.as_bytes());
        h.update(b"\n");
        for line in self.canonical().lines() {
            if prefixes.iter().any(|p| line.starts_with(p)) {
                h.update(line.as_bytes());
                h.update(b"\n");
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train
        }
    }

    pub fn detector_params(&self) -> DetectorParams {
        DetectorParams {
            seed: self.seed,
            ..self.detector
        }
    }
}
