use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub initial_lr: f64,
    /// Non-improving epochs tolerated before the learning rate is cut.
    pub patience: usize,
    pub decay_factor: f64,
    pub max_decays: usize,
    pub max_epochs: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            initial_lr: 0.001,
            patience: 20,
            decay_factor: 0.5,
            max_decays: 4,
            max_epochs: 300,
        }
    }
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor < 1.0) {
            return Err(Error::Config(format!(
                "decay_factor must lie in (0, 1), got {}",
                self.decay_factor
            )));
        }
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.initial_lr
            )));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        Ok(())
    }
}

/// Plateau learning-rate schedule with early stopping, driven by the
/// validation loss of each epoch.
///
/// A patience window is a reference epoch followed by `patience`
/// non-improving epochs. Epoch 1 is the reference of the first window; an
/// improving epoch, or the epoch right after a decay, starts a new one. A
/// constant loss with patience 20 therefore decays at epochs 21, 42, 63 and
/// 84, and with four decays allowed stops at epoch 105.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlateauSchedule {
    pub lr: f64,
    /// Epochs ticked so far.
    pub epoch: usize,
    /// Lowest validation loss seen; improvement is strictly below it.
    pub best_valid_loss: Option<f64>,
    pub best_epoch: Option<usize>,
    pub epochs_since_improvement: usize,
    pub decays: usize,
    /// Set by a decay: the next epoch is the new window's reference.
    pub window_reset: bool,
    pub stopped: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ScheduleTick {
    pub improved: bool,
    pub decayed: bool,
    pub stop: bool,
}

impl PlateauSchedule {
    pub fn new(config: &ScheduleConfig) -> Self {
        Self {
            lr: config.initial_lr,
            epoch: 0,
            best_valid_loss: None,
            best_epoch: None,
            epochs_since_improvement: 0,
            decays: 0,
            window_reset: false,
            stopped: false,
        }
    }

    /// Records one epoch's validation loss.
    pub fn tick(&mut self, config: &ScheduleConfig, valid_loss: f64) -> ScheduleTick {
        let mut out = ScheduleTick::default();
        self.epoch += 1;
        if self.best_valid_loss.map_or(true, |b| valid_loss < b) {
            self.best_valid_loss = Some(valid_loss);
            self.best_epoch = Some(self.epoch);
            self.epochs_since_improvement = 0;
            self.window_reset = false;
            out.improved = true;
        } else if self.window_reset {
            self.window_reset = false;
        } else {
            self.epochs_since_improvement += 1;
            if self.epochs_since_improvement >= config.patience {
                if self.decays >= config.max_decays {
                    out.stop = true;
                } else {
                    self.lr *= config.decay_factor;
                    self.decays += 1;
                    self.epochs_since_improvement = 0;
                    self.window_reset = true;
                    out.decayed = true;
                }
            }
        }
        if self.epoch >= config.max_epochs {
            out.stop = true;
        }
        self.stopped |= out.stop;
        out
    }
}
