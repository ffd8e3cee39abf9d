use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// Cosine annealing restarted every `cycle_epochs`.
    Cosine,
    /// Multiply by `step_gamma` every `step_size` epochs.
    Step,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    L1,
    L2,
}

/// Training hyperparameters. Serialized as TOML; every key is optional.
///
/// ```toml
/// batch_size = 16
/// patch_size = 48        # LR side
/// lr_init = 2e-4
/// schedule = "cosine"    # or "step"
/// cycle_epochs = 250
/// step_size = 200
/// step_gamma = 0.5
/// iters_per_epoch = 200
/// max_epochs = 5
/// seed = 0
/// scale = 4
/// loss = "l1"            # or "l2"
/// beta1 = 0.9
/// beta2 = 0.999
/// eps = 1e-8
/// log_interval = 50
/// augment = true
/// val_interval = 1       # epochs between validation passes, 0 = never
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub patch_size: usize,
    pub lr_init: f64,
    pub schedule: Schedule,
    pub cycle_epochs: usize,
    pub step_size: usize,
    pub step_gamma: f64,
    pub iters_per_epoch: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub scale: usize,
    pub loss: Loss,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub log_interval: usize,
    pub augment: bool,
    pub val_interval: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            patch_size: 48,
            lr_init: 2e-4,
            schedule: Schedule::Cosine,
            cycle_epochs: 250,
            step_size: 200,
            step_gamma: 0.5,
            iters_per_epoch: 200,
            max_epochs: 5,
            seed: 0,
            scale: 4,
            loss: Loss::L1,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            log_interval: 50,
            augment: true,
            val_interval: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lr_init > 0.0 && self.lr_init.is_finite()) {
            return bad(format!("lr_init must be positive, got {}", self.lr_init));
        }
        if !(2..=4).contains(&self.scale) {
            return bad(format!("scale must be 2, 3 or 4, got {}", self.scale));
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("patch_size", self.patch_size),
            ("cycle_epochs", self.cycle_epochs),
            ("step_size", self.step_size),
            ("iters_per_epoch", self.iters_per_epoch),
            ("log_interval", self.log_interval),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if !self.patch_size.is_multiple_of(2) {
            return bad(format!("patch_size must be even, got {}", self.patch_size));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.eps <= 0.0 {
            return bad("adam betas must lie in [0, 1) and eps must be positive".into());
        }
        if !(self.step_gamma > 0.0) {
            return bad(format!("step_gamma must be positive, got {}", self.step_gamma));
        }
        Ok(())
    }

    /// Second-phase fine-tuning preset: doubled batch and epoch budget, halved learning rate.
    pub fn finetune(&self) -> Self {
        TrainConfig {
            batch_size: self.batch_size * 2,
            max_epochs: self.max_epochs * 2,
            lr_init: self.lr_init / 2.0,
            ..self.clone()
        }
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("train config serializes")
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(format!("train config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}
