//! Run configuration: everything needed to reproduce a training run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::arch::NetworkConfig;
use crate::error::{Error, Result};
use crate::losses::{LossSpec, OhemConfig, DEFAULT_BORDER_KERNEL};
use crate::training::{AugmentConfig, TrainSchedule};

/// Base loss plus optional label relaxation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossMode {
    #[serde(rename = "CE")]
    Ce,
    #[serde(rename = "OHEM")]
    Ohem,
    #[serde(rename = "CE+LR")]
    CeLr,
    #[serde(rename = "OHEM+LR")]
    OhemLr,
}

impl LossMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "CE" => Ok(LossMode::Ce),
            "OHEM" => Ok(LossMode::Ohem),
            "CE+LR" => Ok(LossMode::CeLr),
            "OHEM+LR" => Ok(LossMode::OhemLr),
            _ => Err(Error::config("loss_mode", format!("expected CE, OHEM, CE+LR or OHEM+LR, got {s:?}"))),
        }
    }

    pub fn uses_ohem(self) -> bool {
        matches!(self, LossMode::Ohem | LossMode::OhemLr)
    }

    pub fn uses_relaxation(self) -> bool {
        matches!(self, LossMode::CeLr | LossMode::OhemLr)
    }

    pub fn name(self) -> &'static str {
        match self {
            LossMode::Ce => "CE",
            LossMode::Ohem => "OHEM",
            LossMode::CeLr => "CE+LR",
            LossMode::OhemLr => "OHEM+LR",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RelaxationConfig {
    /// When set, must agree with `loss_mode`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub enabled: Option<bool>,
    pub kernel: usize,
}

impl Default for RelaxationConfig {
    fn default() -> Self {
        RelaxationConfig {
            enabled: None,
            kernel: DEFAULT_BORDER_KERNEL,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub network: NetworkConfig,
    pub schedule: TrainSchedule,
    pub augmentation: AugmentConfig,
    pub loss_mode: LossMode,
    pub ohem: OhemConfig,
    pub label_relaxation: RelaxationConfig,
    pub seed: u64,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            network: NetworkConfig::default(),
            schedule: TrainSchedule::default(),
            augmentation: AugmentConfig::default(),
            loss_mode: LossMode::OhemLr,
            ohem: OhemConfig::default(),
            label_relaxation: RelaxationConfig::default(),
            seed: 0,
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::config("run config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn set_loss_mode(&mut self, mode: LossMode) {
        self.loss_mode = mode;
        self.label_relaxation.enabled = Some(mode.uses_relaxation());
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.schedule.validate()?;
        self.augmentation.validate()?;
        if self.loss_mode.uses_ohem() {
            self.ohem.validate()?;
        }
        if let Some(enabled) = self.label_relaxation.enabled {
            if enabled != self.loss_mode.uses_relaxation() {
                return Err(Error::config(
                    "label_relaxation.enabled",
                    format!("{enabled} contradicts loss_mode {}", self.loss_mode.name()),
                ));
            }
        }
        let k = self.label_relaxation.kernel;
        if k < 3 || k.is_multiple_of(2) {
            return Err(Error::config("label_relaxation.kernel", format!("must be odd and at least 3, got {k}")));
        }
        let m = self.network.required_multiple();
        for (i, s) in self.schedule.stages.iter().enumerate() {
            let side = self.augmentation.crop_size as f64 * s.resize_factor;
            if side.fract() != 0.0 || !(side as usize).is_multiple_of(m) {
                return Err(Error::config(
                    format!("schedule.stages[{i}].resize_factor"),
                    format!("crop {} scaled by {} is not a multiple of {m}", self.augmentation.crop_size, s.resize_factor),
                ));
            }
        }
        Ok(())
    }

    pub fn loss_spec(&self) -> LossSpec {
        LossSpec {
            ohem: self.loss_mode.uses_ohem().then_some(self.ohem),
            relax_kernel: self.loss_mode.uses_relaxation().then_some(self.label_relaxation.kernel),
        }
    }
}
