//! Flat `key = value` run configuration.
//!
//! ```text
//! # comments run to end of line
//! epochs = 130
//! learning_rate = 0.001
//! use_vsct = true
//! vsct_gamma = 0.2
//! aug.rotate_max_deg = 13
//! vsct_aug.rotate_max_deg = 20
//! ```
//!
//! [`RunConfig::to_text`] emits every key, and parsing that output yields
//! the same config.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::PathBuf;

use thiserror::Error;

use crate::model::{InitMode, SpoterConfig};
use crate::pose_data::FRAME_DIM;
use crate::preprocess::AugmentationDistribution;
use crate::training::{TauBase, TrainConfig, VsctConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("config line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("config key {key:?}: {message}")]
    Value { key: String, message: String },
    #[error("config key {0:?} given twice")]
    Duplicate(String),
    #[error("{0}")]
    Invalid(String),
}

/// Architecture knobs; input width and class count come from the data.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelOptions {
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub max_frames: usize,
    pub dropout_rate: f64,
    pub init: InitMode,
}

impl Default for ModelOptions {
    fn default() -> Self {
        let d = SpoterConfig::new(2);
        Self {
            encoder_layers: d.encoder_layers,
            decoder_layers: d.decoder_layers,
            heads: d.heads,
            ff_dim: d.ff_dim,
            max_frames: d.max_frames,
            dropout_rate: d.dropout_rate,
            init: InitMode::Faithful,
        }
    }
}

impl ModelOptions {
    pub fn spoter_config(&self, num_classes: usize) -> SpoterConfig {
        SpoterConfig {
            encoder_layers: self.encoder_layers,
            decoder_layers: self.decoder_layers,
            heads: self.heads,
            ff_dim: self.ff_dim,
            max_frames: self.max_frames,
            dropout_rate: self.dropout_rate,
            ..SpoterConfig::new(num_classes)
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub vsct: VsctConfig,
    pub model: ModelOptions,
    /// Opt-in uniform frame subsampling for sequences longer than this.
    pub subsample_frames: Option<usize>,
    pub train_data: Option<PathBuf>,
    pub val_data: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| ConfigError::Value {
        key: key.to_owned(),
        message: format!("{value:?}: {e}"),
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(ConfigError::Value {
            key: key.to_owned(),
            message: format!("{value:?} is not a boolean"),
        }),
    }
}

fn set_aug(dist: &mut AugmentationDistribution, field: &str, key: &str, value: &str) -> Result<(), ConfigError> {
    let v: f64 = parse_value(key, value)?;
    match field {
        "rotate_max_deg" => dist.rotate_max_deg = v,
        "squeeze_max_frac" => dist.squeeze_max_frac = v,
        "perspective_max_frac" => dist.perspective_max_frac = v,
        "arm_joint_max_deg" => dist.arm_joint_max_deg = v,
        "apply_prob" => dist.apply_prob = v,
        _ => return Err(ConfigError::UnknownKey(key.to_owned())),
    }
    Ok(())
}

/// Splits config text into `(line, key, value)` entries.
pub fn parse_entries(text: &str) -> Result<Vec<(usize, String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or_default().trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError::Syntax {
                line: i + 1,
                message: "expected `key = value`".into(),
            });
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(ConfigError::Syntax {
                line: i + 1,
                message: "empty key".into(),
            });
        }
        out.push((i + 1, k.to_owned(), v.to_owned()));
    }
    Ok(out)
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    /// Applies the entries of `text` on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        let mut seen = HashSet::new();
        for (_, k, v) in parse_entries(text)? {
            if !seen.insert(k.clone()) {
                return Err(ConfigError::Duplicate(k));
            }
            self.set(&k, &v)?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let t = &mut self.train;
        let m = &mut self.model;
        match key {
            "epochs" => t.epochs = parse_value(key, value)?,
            "learning_rate" | "lr" => t.learning_rate = parse_value(key, value)?,
            "momentum" => t.momentum = parse_value(key, value)?,
            "weight_decay" => t.weight_decay = parse_value(key, value)?,
            "seed" => t.seed = parse_value(key, value)?,
            "batch_size" => t.batch_size = parse_value(key, value)?,
            "use_normalization" => t.use_normalization = parse_bool(key, value)?,
            "use_augmentation" => t.use_augmentation = parse_bool(key, value)?,
            "use_balanced_sampling" => t.use_balanced_sampling = parse_bool(key, value)?,
            "use_vsct" => t.use_vsct = parse_bool(key, value)?,
            "vsct_gamma" => self.vsct.gamma = parse_value(key, value)?,
            "vsct_tau" => self.vsct.tau = parse_value(key, value)?,
            "vsct_tau_base" => self.vsct.tau_base = parse_value::<TauBase>(key, value)?,
            "encoder_layers" => m.encoder_layers = parse_value(key, value)?,
            "decoder_layers" => m.decoder_layers = parse_value(key, value)?,
            "heads" => m.heads = parse_value(key, value)?,
            "ff_dim" => m.ff_dim = parse_value(key, value)?,
            "max_frames" => m.max_frames = parse_value(key, value)?,
            "dropout_rate" => m.dropout_rate = parse_value(key, value)?,
            "init" => m.init = parse_value::<InitMode>(key, value)?,
            "subsample_frames" => {
                self.subsample_frames = match value {
                    "" | "none" => None,
                    v => Some(parse_value(key, v)?),
                }
            }
            "train_data" => self.train_data = Some(PathBuf::from(value)),
            "val_data" => self.val_data = Some(PathBuf::from(value)),
            "out" => self.out = Some(PathBuf::from(value)),
            _ => {
                if let Some(field) = key.strip_prefix("vsct_aug.") {
                    set_aug(&mut self.vsct.vsct_augmentation, field, key, value)?;
                } else if let Some(field) = key.strip_prefix("aug.") {
                    set_aug(&mut self.train.base_augmentation, field, key, value)?;
                } else {
                    return Err(ConfigError::UnknownKey(key.to_owned()));
                }
            }
        }
        Ok(())
    }

    /// Range and consistency checks; run before any computation.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.train.validate().map_err(|e| invalid(&e))?;
        if self.train.use_vsct {
            self.vsct.validate().map_err(|e| invalid(&e))?;
        }
        self.model.spoter_config(2).validate().map_err(|e| invalid(&e))?;
        if self.subsample_frames == Some(0) {
            return Err(ConfigError::Invalid("subsample_frames must be >= 1".into()));
        }
        if let Some(n) = self.subsample_frames {
            if n > self.model.max_frames {
                return Err(ConfigError::Invalid(format!(
                    "subsample_frames ({n}) exceeds max_frames ({})",
                    self.model.max_frames
                )));
            }
        }
        debug_assert_eq!(self.model.spoter_config(2).input_dim, FRAME_DIM);
        Ok(())
    }

    /// Every effective value, one `key = value` per line.
    pub fn to_text(&self) -> String {
        let t = &self.train;
        let m = &self.model;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("epochs", t.epochs.to_string());
        kv("learning_rate", format!("{:?}", t.learning_rate));
        kv("momentum", format!("{:?}", t.momentum));
        kv("weight_decay", format!("{:?}", t.weight_decay));
        kv("seed", t.seed.to_string());
        kv("batch_size", t.batch_size.to_string());
        kv("use_normalization", t.use_normalization.to_string());
        kv("use_augmentation", t.use_augmentation.to_string());
        kv("use_balanced_sampling", t.use_balanced_sampling.to_string());
        kv("use_vsct", t.use_vsct.to_string());
        kv("vsct_gamma", format!("{:?}", self.vsct.gamma));
        kv("vsct_tau", format!("{:?}", self.vsct.tau));
        kv(
            "vsct_tau_base",
            match self.vsct.tau_base {
                TauBase::Restricted => "restricted",
                TauBase::Full => "full",
            }
            .into(),
        );
        for (prefix, d) in [("aug", &t.base_augmentation), ("vsct_aug", &self.vsct.vsct_augmentation)] {
            kv(&format!("{prefix}.rotate_max_deg"), format!("{:?}", d.rotate_max_deg));
            kv(&format!("{prefix}.squeeze_max_frac"), format!("{:?}", d.squeeze_max_frac));
            kv(&format!("{prefix}.perspective_max_frac"), format!("{:?}", d.perspective_max_frac));
            kv(&format!("{prefix}.arm_joint_max_deg"), format!("{:?}", d.arm_joint_max_deg));
            kv(&format!("{prefix}.apply_prob"), format!("{:?}", d.apply_prob));
        }
        kv("encoder_layers", m.encoder_layers.to_string());
        kv("decoder_layers", m.decoder_layers.to_string());
        kv("heads", m.heads.to_string());
        kv("ff_dim", m.ff_dim.to_string());
        kv("max_frames", m.max_frames.to_string());
        kv("dropout_rate", format!("{:?}", m.dropout_rate));
        kv(
            "init",
            match m.init {
                InitMode::Faithful => "faithful",
                InitMode::Standard => "standard",
            }
            .into(),
        );
        kv(
            "subsample_frames",
            self.subsample_frames.map_or("none".into(), |n| n.to_string()),
        );
        for (k, p) in [("train_data", &self.train_data), ("val_data", &self.val_data), ("out", &self.out)] {
            if let Some(p) = p {
                kv(k, p.display().to_string());
            }
        }
        s
    }
}
