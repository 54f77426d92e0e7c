//! Top-level experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::DataConfig;
use crate::detection::DetectionConfig;
use crate::error::{Error, Result};
use crate::model::TcnConfig;
use crate::training::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub model: TcnConfig,
    pub training: TrainConfig,
    pub data: DataConfig,
    pub detection: DetectionConfig,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: TcnConfig::default(),
            training: TrainConfig::default(),
            data: DataConfig::default(),
            detection: DetectionConfig::default(),
            output_dir: PathBuf::from("runs/default"),
        }
    }
}

impl ExperimentConfig {
    /// Parses strict JSON; unknown keys are errors that name their path.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.training.validate()?;
        self.data.validate()?;
        self.detection.validate()?;
        if !self.model.window_length.is_multiple_of(crate::detection::SUBSET_SIZE) {
            return Err(Error::Config(format!(
                "model.window_length must be a multiple of {}",
                crate::detection::SUBSET_SIZE
            )));
        }
        if let Some(s) = &self.data.synth {
            if s.channels != self.model.input_channels {
                return Err(Error::Config(format!(
                    "data.synth.channels ({}) must equal model.input_channels ({})",
                    s.channels, self.model.input_channels
                )));
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn sha256(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serialises");
        hex::encode(Sha256::digest(canonical))
    }

    /// `"RDO"` with the bottleneck, `"AE"` without.
    pub fn model_type(&self) -> &'static str {
        if self.model.bottleneck_enabled {
            "RDO"
        } else {
            "AE"
        }
    }
}
