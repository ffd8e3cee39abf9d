//! Patch-based training: sampling, L1/L2 loss, Adam, learning-rate schedules,
//! logging and resumable checkpoints.
//!
//! Output directory layout:
//!
//! ```text
//! log.jsonl          one record per line, appended as training runs
//! epoch_0001.ckpt    model after each epoch
//! last.ckpt          newest model
//! last.adam          optimizer state matching last.ckpt
//! state.txt          "epoch <completed epochs>"
//! ```

mod config;
mod dataset;
mod optim;

pub use config::{Loss, Schedule, TrainConfig};
pub use dataset::{list_pngs, prepare_dataset, sample_batch, Dataset, DatasetEntry, DatasetIndex, INDEX_FILE};
pub use optim::{Adam, ADAM_MAGIC};

use std::f64::consts::PI;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::imaging::{evaluate, EvalOptions, ModelUpscaler};
use crate::model::{Model, ModelSpec};
use crate::real::Real;
use crate::tensor::Tensor;

pub fn cosine_lr(epoch: usize, cfg: &TrainConfig) -> f64 {
    let phase = (epoch % cfg.cycle_epochs) as f64 / cfg.cycle_epochs as f64;
    cfg.lr_init * 0.5 * (1.0 + (PI * phase).cos())
}

pub fn step_lr(epoch: usize, cfg: &TrainConfig) -> f64 {
    cfg.lr_init * cfg.step_gamma.powi((epoch / cfg.step_size) as i32)
}

pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    match cfg.schedule {
        Schedule::Cosine => cosine_lr(epoch, cfg),
        Schedule::Step => step_lr(epoch, cfg),
    }
}

/// One forward/backward/update on a batch. Returns the loss before the update.
pub fn train_step<T: Real>(
    model: &mut Model<T>,
    adam: &mut Adam<T>,
    lr_batch: &Tensor<T>,
    hr_batch: &Tensor<T>,
    lr: f64,
    loss: Loss,
) -> Result<f64> {
    let tape = Tape::new();
    let params = model.params().bind(&tape);
    let x = tape.constant(lr_batch.clone());
    let sr = model.forward(&x, &params)?;
    let l = match loss {
        Loss::L1 => sr.l1_loss(hr_batch)?,
        Loss::L2 => sr.mse_loss(hr_batch)?,
    };
    let value = l.value().data()[0].as_f64();
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("training loss is {value}")));
    }
    let grads = tape.backward(&l)?;
    model.params_mut().accumulate(&params, &grads)?;
    adam.update(model.params_mut(), lr)?;
    Ok(value)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogRecord {
    /// Mean loss over the last `log_interval` steps.
    Step {
        epoch: usize,
        step: u64,
        lr: f64,
        loss: f64,
    },
    Epoch {
        epoch: usize,
        lr: f64,
        mean_loss: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        val_psnr_y: Option<f64>,
    },
}

impl LogRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("log record serializes")
    }
}

/// Training state: model, optimizer, progress and log.
pub struct Trainer<T> {
    pub cfg: TrainConfig,
    pub model: Model<T>,
    pub adam: Adam<T>,
    /// Completed epochs.
    pub epoch: usize,
    pub log: Vec<LogRecord>,
    out_dir: Option<PathBuf>,
}

impl<T: Real> Trainer<T> {
    pub fn new(model: Model<T>, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if model.spec().scale != cfg.scale {
            return Err(Error::Config(format!(
                "model scale {} but config scale {}",
                model.spec().scale,
                cfg.scale
            )));
        }
        let adam = Adam::new(model.params(), cfg.beta1, cfg.beta2, cfg.eps);
        Ok(Trainer {
            cfg,
            model,
            adam,
            epoch: 0,
            log: Vec::new(),
            out_dir: None,
        })
    }

    /// Writes logs and checkpoints under `dir`.
    pub fn with_output(mut self, dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.out_dir = Some(dir.to_path_buf());
        Ok(self)
    }

    /// Continues from the newest checkpoint in `dir`.
    pub fn resume(dir: &Path, spec: &ModelSpec, cfg: TrainConfig) -> Result<Self> {
        let model = Model::load(&dir.join("last.ckpt"), Some(spec))?;
        let mut t = Trainer::new(model, cfg)?.with_output(dir)?;
        let adam_path = dir.join("last.adam");
        let bytes = std::fs::read(&adam_path).map_err(|e| Error::io(&adam_path, e))?;
        t.adam.load_state(&bytes)?;
        let state_path = dir.join("state.txt");
        let state = std::fs::read_to_string(&state_path).map_err(|e| Error::io(&state_path, e))?;
        t.epoch = state
            .trim()
            .strip_prefix("epoch ")
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| Error::CorruptHeader {
                what: state_path.display().to_string(),
                reason: "expected \"epoch <n>\"".into(),
            })?;
        Ok(t)
    }

    fn emit(&mut self, record: LogRecord) -> Result<()> {
        if let Some(dir) = &self.out_dir {
            let path = dir.join("log.jsonl");
            let mut f = std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(&path)
                .map_err(|e| Error::io(&path, e))?;
            writeln!(f, "{}", record.to_json()).map_err(|e| Error::io(&path, e))?;
        }
        self.log.push(record);
        Ok(())
    }

    /// Random stream for one epoch, independent of how earlier epochs ran.
    pub fn epoch_rng(&self, epoch: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(epoch as u64);
        rng
    }

    pub fn validate(&self, val: &Dataset) -> Result<f64> {
        let opts = EvalOptions {
            border: self.cfg.scale,
            quantize: true,
        };
        Ok(evaluate(&ModelUpscaler::new(&self.model), &val.pairs, opts)?.mean_psnr_y)
    }

    pub fn run_epoch(&mut self, data: &Dataset, val: Option<&Dataset>) -> Result<()> {
        let epoch = self.epoch;
        let lr = lr_at(epoch, &self.cfg);
        let mut rng = self.epoch_rng(epoch);
        let mut window = 0.0;
        let mut total = 0.0;
        for i in 0..self.cfg.iters_per_epoch {
            let (x, y) = sample_batch::<T>(data, &self.cfg, &mut rng)?;
            let loss = train_step(&mut self.model, &mut self.adam, &x, &y, lr, self.cfg.loss)?;
            window += loss;
            total += loss;
            if (i + 1) % self.cfg.log_interval == 0 {
                self.emit(LogRecord::Step {
                    epoch: epoch + 1,
                    step: self.adam.step,
                    lr,
                    loss: window / self.cfg.log_interval as f64,
                })?;
                window = 0.0;
            }
        }
        self.epoch += 1;
        let val_psnr_y = match val {
            Some(v) if self.cfg.val_interval > 0 && self.epoch.is_multiple_of(self.cfg.val_interval) => Some(self.validate(v)?),
            _ => None,
        };
        self.emit(LogRecord::Epoch {
            epoch: self.epoch,
            lr,
            mean_loss: total / self.cfg.iters_per_epoch as f64,
            val_psnr_y,
        })?;
        self.checkpoint()
    }

    fn checkpoint(&self) -> Result<()> {
        let Some(dir) = &self.out_dir else {
            return Ok(());
        };
        let bytes = self.model.to_checkpoint_bytes();
        crate::io::write_atomic(&dir.join(format!("epoch_{:04}.ckpt", self.epoch)), &bytes)?;
        crate::io::write_atomic(&dir.join("last.ckpt"), &bytes)?;
        crate::io::write_atomic(&dir.join("last.adam"), &self.adam.to_bytes())?;
        crate::io::write_atomic_str(&dir.join("state.txt"), &format!("epoch {}\n", self.epoch))
    }

    /// Trains until `cfg.max_epochs` epochs are complete.
    pub fn run(&mut self, data: &Dataset, val: Option<&Dataset>) -> Result<()> {
        while self.epoch < self.cfg.max_epochs {
            self.run_epoch(data, val)?;
        }
        Ok(())
    }

    pub fn step_records(&self) -> impl Iterator<Item = &LogRecord> {
        self.log.iter().filter(|r| matches!(r, LogRecord::Step { .. }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_schedule_points() {
        let cfg = TrainConfig::default();
        assert_eq!(cosine_lr(0, &cfg), 2e-4);
        assert!((cosine_lr(125, &cfg) - 1e-4).abs() < 1e-18);
        assert_eq!(cosine_lr(250, &cfg), 2e-4);
        assert!(cosine_lr(249, &cfg) > 0.0);
    }

    #[test]
    fn step_schedule_halves() {
        let cfg = TrainConfig {
            schedule: Schedule::Step,
            step_size: 10,
            ..Default::default()
        };
        assert_eq!(lr_at(9, &cfg), 2e-4);
        assert_eq!(lr_at(10, &cfg), 1e-4);
        assert_eq!(lr_at(25, &cfg), 5e-5);
    }

    #[test]
    fn zero_lr_step_keeps_weights() {
        let mut model = Model::<f32>::build(&ModelSpec::toy(2), 0).unwrap();
        let before: Vec<f32> = model.params().iter().flat_map(|p| p.tensor.data().to_vec()).collect();
        let mut adam = Adam::new(model.params(), 0.9, 0.999, 1e-8);
        let x = Tensor::rand_uniform([2, 3, 8, 8], 0.0, 1.0, 1).unwrap();
        let y = Tensor::rand_uniform([2, 3, 16, 16], 0.0, 1.0, 2).unwrap();
        let loss = train_step(&mut model, &mut adam, &x, &y, 0.0, Loss::L1).unwrap();
        assert!(loss > 0.0);
        let after: Vec<f32> = model.params().iter().flat_map(|p| p.tensor.data().to_vec()).collect();
        assert_eq!(before, after);
    }
}
