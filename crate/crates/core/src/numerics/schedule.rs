//! Linear warmup followed by cosine decay, evaluated per optimizer step.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub warmup_epochs: f64,
    pub total_epochs: f64,
    pub ending_lr: f64,
    #[serde(default = "one")]
    pub steps_per_epoch: u64,
}

fn one() -> u64 {
    1
}

impl LrSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::Config(format!(
                "base_lr must be positive, got {}",
                self.base_lr
            )));
        }
        if !(0.0..=self.total_epochs).contains(&self.warmup_epochs) {
            return Err(Error::Config(format!(
                "need 0 <= warmup_epochs ({}) <= total_epochs ({})",
                self.warmup_epochs, self.total_epochs
            )));
        }
        if !(0.0..=self.base_lr).contains(&self.ending_lr) {
            return Err(Error::Config(format!(
                "ending_lr {} must lie in [0, base_lr {}]",
                self.ending_lr, self.base_lr
            )));
        }
        if self.steps_per_epoch == 0 {
            return Err(Error::Config("steps_per_epoch must be at least 1".into()));
        }
        Ok(())
    }

    pub fn warmup_steps(&self) -> f64 {
        self.warmup_epochs * self.steps_per_epoch as f64
    }

    /// Total optimizer steps covered by the schedule (rounded up).
    pub fn total_steps(&self) -> u64 {
        (self.total_epochs * self.steps_per_epoch as f64).ceil() as u64
    }

    /// Learning rate at 0-based `step`. Warmup rises linearly from 0 and
    /// reaches `base_lr` at the warmup boundary; the cosine then lands
    /// exactly on `ending_lr` at the last step `total_steps() - 1`.
    pub fn lr_at(&self, step: u64) -> f64 {
        let s = step as f64;
        let warm = self.warmup_steps();
        if s < warm {
            return self.base_lr * s / warm;
        }
        let span = (self.total_steps() as f64 - 1.0 - warm).max(1.0);
        let u = ((s - warm) / span).clamp(0.0, 1.0);
        self.ending_lr + (self.base_lr - self.ending_lr) * (1.0 + (PI * u).cos()) / 2.0
    }
}

pub fn lr_at(step: u64, schedule: &LrSchedule) -> f64 {
    schedule.lr_at(step)
}
