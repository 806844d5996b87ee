use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adversarial::{FocalMode, LossOptions, StageReduction};
use crate::data::{self, DatasetSpec, DomainDataset};
use crate::error::{Error, Result};
use crate::kernel::KernelConfig;
use crate::model::Architecture;
use crate::optim::{LrSchedule, Sgd};
use crate::sps::AfterPreEpoch;

/// Ablation ladder. Each rung adds one switch to the previous one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Classification loss only.
    SourceOnly,
    /// Adds adversarial alignment with plain cross-entropy.
    BaselineA,
    /// Cross-entropy replaced by a focal loss with a fixed exponent.
    BaselineB,
    /// Focal exponent taken from the per-stage hardness.
    SgaG,
    /// Adds the hardness loss term.
    SgaL,
    /// Adds progressive sampling.
    SgaS,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::SourceOnly,
        Variant::BaselineA,
        Variant::BaselineB,
        Variant::SgaG,
        Variant::SgaL,
        Variant::SgaS,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::SourceOnly => "source-only",
            Variant::BaselineA => "baseline-a",
            Variant::BaselineB => "baseline-b",
            Variant::SgaG => "sga-g",
            Variant::SgaL => "sga-l",
            Variant::SgaS => "sga-s",
        }
    }

    pub fn focal_mode(self, fixed_exponent: f64) -> Option<FocalMode> {
        match self {
            Variant::SourceOnly => None,
            Variant::BaselineA => Some(FocalMode::CrossEntropy),
            Variant::BaselineB => Some(FocalMode::Fixed(fixed_exponent)),
            Variant::SgaG | Variant::SgaL | Variant::SgaS => Some(FocalMode::Hardness),
        }
    }

    pub fn hardness_loss(self) -> bool {
        matches!(self, Variant::SgaL | Variant::SgaS)
    }

    pub fn progressive_sampling(self) -> bool {
        self == Variant::SgaS
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Where the training data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataSource {
    Spec(DatasetSpec),
    /// CSV file; relative paths resolve against the config file's directory.
    Path(PathBuf),
}

impl DataSource {
    pub fn resolve(&self) -> Result<DomainDataset> {
        match self {
            DataSource::Spec(spec) => data::generate(spec),
            DataSource::Path(p) => data::load(p),
        }
    }
}

fn default_epochs() -> usize {
    40
}
fn default_batch() -> usize {
    16
}
fn default_beta() -> f64 {
    0.25
}
fn default_grl() -> f64 {
    1.0
}
fn default_stages() -> usize {
    3
}
fn default_width() -> usize {
    16
}
fn default_disc_hidden() -> usize {
    32
}
fn default_momentum() -> f64 {
    0.9
}
fn default_fixed_focal() -> f64 {
    5.0
}
fn default_true() -> bool {
    true
}

/// Everything needed to reproduce one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Row label in comparison tables; defaults to the variant name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub data: DataSource,
    pub variant: Variant,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub lr: LrSchedule,
    /// Heavy-ball momentum of the SGD updates; `0` is plain SGD.
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_grl")]
    pub grl_lambda: f64,
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default = "default_stages")]
    pub stages: usize,
    #[serde(default = "default_width")]
    pub width: usize,
    #[serde(default = "default_disc_hidden")]
    pub disc_hidden: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub stage_reduction: StageReduction,
    #[serde(default)]
    pub after_pre_epoch: AfterPreEpoch,
    /// Exponent used by `baseline-b`.
    #[serde(default = "default_fixed_focal")]
    pub fixed_focal_exponent: f64,
    /// Score the model on both domains after every epoch.
    #[serde(default = "default_true")]
    pub evaluate_each_epoch: bool,
}

impl TrainConfig {
    /// Defaults for everything except data and variant.
    pub fn new(data: DataSource, variant: Variant) -> Self {
        TrainConfig {
            name: None,
            data,
            variant,
            epochs: default_epochs(),
            batch_size: default_batch(),
            lr: LrSchedule::default(),
            momentum: default_momentum(),
            beta: default_beta(),
            grl_lambda: default_grl(),
            kernel: KernelConfig::default(),
            stages: default_stages(),
            width: default_width(),
            disc_hidden: default_disc_hidden(),
            seed: 0,
            stage_reduction: StageReduction::default(),
            after_pre_epoch: AfterPreEpoch::default(),
            fixed_focal_exponent: default_fixed_focal(),
            evaluate_each_epoch: true,
        }
    }

    pub fn label(&self) -> String {
        self.name
            .clone()
            .unwrap_or_else(|| self.variant.name().to_string())
    }

    /// Parses a JSON config. Unknown keys are rejected.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: TrainConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads and validates a config file, resolving a relative data path
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg =
            Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let DataSource::Path(p) = &mut cfg.data {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        self.lr.validate()?;
        Sgd::new(self.momentum)?;
        self.kernel.validate()?;
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be >= 0, got {}", self.beta)));
        }
        if !(self.fixed_focal_exponent >= 0.0 && self.fixed_focal_exponent.is_finite()) {
            return Err(Error::Config(format!(
                "fixed_focal_exponent must be >= 0, got {}",
                self.fixed_focal_exponent
            )));
        }
        if let DataSource::Spec(spec) = &self.data {
            spec.validate()?;
        }
        self.architecture(2, 2).validate()
    }

    pub fn architecture(&self, input_dim: usize, classes: usize) -> Architecture {
        Architecture {
            input_dim,
            classes,
            width: self.width,
            stages: self.stages,
            disc_hidden: self.disc_hidden,
            grl_lambda: self.grl_lambda,
        }
    }

    pub fn loss_options(&self) -> LossOptions {
        LossOptions {
            focal: self.variant.focal_mode(self.fixed_focal_exponent),
            hardness_loss: self.variant.hardness_loss(),
            beta: self.beta,
            kernel: self.kernel,
            reduction: self.stage_reduction,
        }
    }
}
