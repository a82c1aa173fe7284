use serde::{Deserialize, Serialize};

use crate::preprocess::AugmentationDistribution;

use super::TrainError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Samples per optimizer step in the main pass.
    pub batch_size: usize,
    pub base_augmentation: AugmentationDistribution,
    pub use_augmentation: bool,
    pub use_normalization: bool,
    pub use_balanced_sampling: bool,
    pub use_vsct: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 130,
            learning_rate: 0.001,
            momentum: 0.0,
            weight_decay: 0.0,
            seed: 0,
            batch_size: 1,
            base_augmentation: AugmentationDistribution::default(),
            use_augmentation: true,
            use_normalization: true,
            use_balanced_sampling: false,
            use_vsct: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if self.epochs < 1 {
            return bad("epochs must be >= 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay must be >= 0, got {}", self.weight_decay));
        }
        if self.batch_size < 1 {
            return bad("batch_size must be >= 1".into());
        }
        self.base_augmentation
            .validate()
            .map_err(|e| TrainError::Config(format!("base augmentation: {e}")))
    }
}

/// What the τ share of the VSCT mini-batch is taken of.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TauBase {
    /// `max(1, ⌊τ·|S|⌋)` where S is the set of training samples of the selected classes.
    #[default]
    Restricted,
    /// `max(1, ⌊τ·|train|⌋)`, capped at `|S|`.
    Full,
}

impl std::str::FromStr for TauBase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "restricted" => Ok(Self::Restricted),
            "full" => Ok(Self::Full),
            other => Err(format!("unknown tau base {other:?} (expected restricted|full)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VsctConfig {
    /// Share of all classes selected as worst-performing, in (0, 1].
    pub gamma: f64,
    /// Share of the selected classes' samples forming the extra mini-batch, in (0, 1].
    pub tau: f64,
    pub tau_base: TauBase,
    pub vsct_augmentation: AugmentationDistribution,
}

impl Default for VsctConfig {
    fn default() -> Self {
        Self {
            gamma: 0.2,
            tau: 0.5,
            tau_base: TauBase::Restricted,
            vsct_augmentation: AugmentationDistribution {
                rotate_max_deg: 20.0,
                squeeze_max_frac: 0.2,
                perspective_max_frac: 0.15,
                arm_joint_max_deg: 8.0,
                apply_prob: 0.5,
            },
        }
    }
}

impl VsctConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(TrainError::Config(format!("vsct gamma must be in (0, 1], got {}", self.gamma)));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(TrainError::Config(format!("vsct tau must be in (0, 1], got {}", self.tau)));
        }
        self.vsct_augmentation
            .validate()
            .map_err(|e| TrainError::Config(format!("vsct augmentation: {e}")))
    }
}
