//! TOML run configuration.
//!
//! ```toml
//! [train]
//! epochs = 400
//! lr0 = 0.01
//! seed = 1
//! ablation = "full"
//! seeds = [1, 2, 3, 4, 5]
//!
//! [loss]
//! tau = 0.5
//!
//! [synth]
//! regions = 80
//! ```
//!
//! Every section and key is optional; unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::AugmentConfig;
use crate::data::DataShape;
use crate::error::{RecpError, Result};
use crate::eval::EvalConfig;
use crate::losses::LossConfig;
use crate::model::ModelConfig;
use crate::synth::CitySpec;
use crate::train::{Ablation, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub lr0: f64,
    pub seed: u64,
    pub ablation: Ablation,
    /// Seeds shared by every variant in `ablate`.
    pub seeds: Vec<u64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            epochs: t.epochs,
            lr0: t.lr0,
            seed: t.seed,
            ablation: t.ablation,
            seeds: (1..=5).collect(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub dir: Option<PathBuf>,
    pub regions: Option<usize>,
    pub categories: Option<usize>,
    pub intervals: Option<usize>,
}

impl DataSection {
    pub fn shape(&self) -> DataShape {
        DataShape {
            regions: self.regions,
            categories: self.categories,
            intervals: self.intervals,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub train: TrainSection,
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub aug: AugmentConfig,
    pub synth: CitySpec,
    pub eval: EvalConfig,
    pub data: DataSection,
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| RecpError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| RecpError::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            RecpError::Config(m) => RecpError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// `Config::default()` when `path` is `None`.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Config::default()), Self::load)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML rendering, as lowercase hex.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml_string().as_bytes()))
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            lr0: self.train.lr0,
            seed: self.train.seed,
            ablation: self.train.ablation,
            model: self.model,
            loss: self.loss,
            aug: self.aug,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train_config().validate()?;
        self.synth.validate()?;
        if self.eval.runs == 0 || self.eval.folds < 2 {
            return Err(RecpError::Config("eval.runs must be >= 1 and eval.folds >= 2".into()));
        }
        if self.train.seeds.is_empty() {
            return Err(RecpError::Config("train.seeds must not be empty".into()));
        }
        Ok(())
    }
}
