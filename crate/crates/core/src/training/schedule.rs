use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One progressive-resizing stage, active from `start_epoch` until the next stage begins.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stage {
    pub start_epoch: usize,
    pub resize_factor: f64,
    /// Batch-size multiplier relative to `base_batch`.
    pub batch_scale: usize,
}

impl Stage {
    /// Stage whose batch grows with the inverse pixel count (`1/factor²`).
    pub fn scaled(start_epoch: usize, resize_factor: f64) -> Self {
        Stage {
            start_epoch,
            resize_factor,
            batch_scale: (1.0 / (resize_factor * resize_factor)).round() as usize,
        }
    }
}

const ALLOWED_FACTORS: [f64; 3] = [0.25, 0.5, 1.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSchedule {
    pub base_lr: f64,
    pub power: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Derived from the stage list and dataset size when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total_iters: Option<usize>,
    pub total_epochs: usize,
    pub stages: Vec<Stage>,
    pub base_batch: usize,
    /// Upper bound on the per-iteration batch after stage scaling.
    pub max_batch: usize,
    /// Reset batch-norm running statistics when the resize factor changes.
    pub reset_bn_stats_on_stage_change: bool,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule::desk()
    }
}

impl TrainSchedule {
    /// 160-epoch recipe: 1/4 until epoch 100, 1/2 until 130, then full size.
    pub fn paper() -> Self {
        TrainSchedule {
            base_lr: 1e-3,
            power: 0.9,
            momentum: 0.9,
            weight_decay: 1e-4,
            total_iters: None,
            total_epochs: 160,
            stages: vec![Stage::scaled(0, 0.25), Stage::scaled(100, 0.5), Stage::scaled(130, 1.0)],
            base_batch: 12,
            max_batch: 192,
            reset_bn_stats_on_stage_change: false,
        }
    }

    /// The same stage structure compressed to 32 epochs (20/26/32).
    pub fn desk() -> Self {
        TrainSchedule {
            total_epochs: 32,
            stages: vec![Stage::scaled(0, 0.25), Stage::scaled(20, 0.5), Stage::scaled(26, 1.0)],
            base_batch: 2,
            max_batch: 32,
            ..Self::paper()
        }
    }

    /// Single full-resolution stage.
    pub fn full_scale(total_epochs: usize, base_batch: usize) -> Self {
        TrainSchedule {
            total_epochs,
            stages: vec![Stage::scaled(0, 1.0)],
            base_batch,
            max_batch: base_batch,
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::config("schedule.base_lr", "must be positive"));
        }
        if self.power.is_nan() || self.power <= 0.0 {
            return Err(Error::config("schedule.power", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("schedule.momentum", "must lie in [0, 1)"));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::config("schedule.weight_decay", "must be non-negative"));
        }
        if self.total_epochs == 0 {
            return Err(Error::config("schedule.total_epochs", "must be positive"));
        }
        if self.base_batch == 0 || self.max_batch == 0 {
            return Err(Error::config("schedule.base_batch", "batch sizes must be positive"));
        }
        if self.total_iters == Some(0) {
            return Err(Error::config("schedule.total_iters", "must be positive"));
        }
        validate_stages(&self.stages, self.total_epochs)
    }

    pub fn stage_index(&self, epoch: usize) -> usize {
        self.stages.iter().rposition(|s| s.start_epoch <= epoch).unwrap_or(0)
    }

    pub fn stage_for_epoch(&self, epoch: usize) -> &Stage {
        &self.stages[self.stage_index(epoch)]
    }

    pub fn batch_size(&self, epoch: usize) -> usize {
        (self.base_batch * self.stage_for_epoch(epoch).batch_scale.max(1)).min(self.max_batch)
    }

    /// Optimizer steps over the whole run for `train_len` samples.
    pub fn derived_total_iters(&self, train_len: usize) -> usize {
        (0..self.total_epochs).map(|e| super::trainer::batches_per_epoch(train_len, self.batch_size(e))).sum()
    }
}

fn validate_stages(stages: &[Stage], total_epochs: usize) -> Result<()> {
    let first = stages
        .first()
        .ok_or_else(|| Error::config("schedule.stages", "at least one stage is required"))?;
    if first.start_epoch != 0 {
        return Err(Error::config("schedule.stages", "the first stage must start at epoch 0"));
    }
    for (i, s) in stages.iter().enumerate() {
        if !ALLOWED_FACTORS.contains(&s.resize_factor) {
            return Err(Error::config(
                format!("schedule.stages[{i}].resize_factor"),
                format!("must be one of 0.25, 0.5, 1, got {}", s.resize_factor),
            ));
        }
        if s.start_epoch >= total_epochs {
            return Err(Error::config(
                format!("schedule.stages[{i}].start_epoch"),
                format!("{} is past the last epoch ({})", s.start_epoch, total_epochs - 1),
            ));
        }
        if i > 0 {
            let p = &stages[i - 1];
            if s.start_epoch <= p.start_epoch {
                return Err(Error::config(format!("schedule.stages[{i}].start_epoch"), "stages overlap or are unsorted"));
            }
            if s.resize_factor < p.resize_factor {
                return Err(Error::config(format!("schedule.stages[{i}].resize_factor"), "resize factors must not decrease"));
            }
        }
    }
    Ok(())
}

/// `base_lr · (1 − iter/total_iters)^power`.
pub fn poly_lr(iter: usize, base_lr: f64, power: f64, total_iters: usize) -> Result<f64> {
    if total_iters == 0 || iter > total_iters {
        return Err(Error::Invalid(format!("poly_lr: iteration {iter} outside [0, {total_iters}]")));
    }
    Ok(base_lr * (1.0 - iter as f64 / total_iters as f64).powf(power))
}

/// Relative compute of a progressive schedule versus training every epoch at
/// full size: `Σ factor² · epochs_in_stage / total_epochs`.
pub fn theoretical_cost_factor(stages: &[Stage], total_epochs: usize) -> Result<f64> {
    if total_epochs == 0 {
        return Err(Error::config("schedule.total_epochs", "must be positive"));
    }
    validate_stages(stages, total_epochs)?;
    let mut weighted = 0.0f64;
    for (i, s) in stages.iter().enumerate() {
        let end = stages.get(i + 1).map_or(total_epochs, |n| n.start_epoch);
        weighted += s.resize_factor * s.resize_factor * (end - s.start_epoch) as f64;
    }
    Ok(weighted / total_epochs as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poly_lr_endpoints_and_midpoint() {
        assert_eq!(poly_lr(0, 1e-3, 0.9, 100).unwrap(), 1e-3);
        assert_eq!(poly_lr(100, 1e-3, 0.9, 100).unwrap(), 0.0);
        // 1e-3 · 0.5^0.9
        assert!((poly_lr(50, 1e-3, 0.9, 100).unwrap() - 5.358_867_312_681_466e-4).abs() < 1e-15);
        assert!(poly_lr(101, 1e-3, 0.9, 100).is_err());
    }

    #[test]
    fn poly_lr_strictly_decreasing() {
        let v: Vec<f64> = (0..=57).map(|i| poly_lr(i, 1e-3, 0.9, 57).unwrap()).collect();
        assert!(v.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn cost_factor_of_fifteen_epoch_run() {
        let stages = [Stage::scaled(0, 0.25), Stage::scaled(9, 0.5), Stage::scaled(12, 1.0)];
        assert_eq!(theoretical_cost_factor(&stages, 15).unwrap(), 0.2875);
        assert_eq!(theoretical_cost_factor(&[Stage::scaled(0, 1.0)], 7).unwrap(), 1.0);
        assert_eq!(theoretical_cost_factor(&[Stage::scaled(0, 0.5)], 10).unwrap(), 0.25);
    }

    #[test]
    fn overlapping_stages_rejected() {
        let stages = [Stage::scaled(0, 0.25), Stage::scaled(5, 0.5), Stage::scaled(5, 1.0)];
        assert!(theoretical_cost_factor(&stages, 15).is_err());
        let stages = [Stage::scaled(0, 0.5), Stage::scaled(5, 0.25)];
        assert!(theoretical_cost_factor(&stages, 15).is_err());
    }

    #[test]
    fn stage_lookup_and_batch_scaling() {
        let s = TrainSchedule::paper();
        assert_eq!(s.stage_for_epoch(0).resize_factor, 0.25);
        assert_eq!(s.stage_for_epoch(99).resize_factor, 0.25);
        assert_eq!(s.stage_for_epoch(100).resize_factor, 0.5);
        assert_eq!(s.stage_for_epoch(129).resize_factor, 0.5);
        assert_eq!(s.stage_for_epoch(130).resize_factor, 1.0);
        assert_eq!(s.stages[0].batch_scale, 16);
        assert_eq!(s.batch_size(0), 192);
        assert_eq!(s.batch_size(140), 12);
        s.validate().unwrap();
        TrainSchedule::desk().validate().unwrap();
    }

    #[test]
    fn derived_iterations_count_partial_batches() {
        let s = TrainSchedule::full_scale(3, 4);
        assert_eq!(s.derived_total_iters(10), 9);
        // A trailing single-sample batch is dropped.
        assert_eq!(s.derived_total_iters(9), 6);
    }
}
