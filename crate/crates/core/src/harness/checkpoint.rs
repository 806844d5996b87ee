//! Versioned JSON dump of a trained model and the config that produced it.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Architecture, Model};
use crate::tensor::Tensor;

use super::config::TrainConfig;

pub const CHECKPOINT_FORMAT: &str = "sga-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: TrainConfig,
    pub architecture: Architecture,
    pub params: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn from_model(model: &Model, config: &TrainConfig) -> Self {
        let params = model
            .params
            .names()
            .iter()
            .zip(model.params.tensors())
            .map(|(name, t)| NamedTensor {
                name: name.clone(),
                shape: t.shape().to_vec(),
                data: t.data().to_vec(),
            })
            .collect();
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: config.clone(),
            architecture: model.arch,
            params,
        }
    }

    /// Rebuilds the model, checking every name and shape against the layout.
    pub fn to_model(&self) -> Result<Model> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::Data(format!(
                "unsupported checkpoint {} v{}",
                self.format, self.version
            )));
        }
        let mut model = Model::new(self.architecture, 0)?;
        if model.params.len() != self.params.len() {
            return Err(Error::Data(format!(
                "checkpoint has {} tensors, architecture needs {}",
                self.params.len(),
                model.params.len()
            )));
        }
        let names = model.params.names().to_vec();
        for ((slot, name), saved) in model
            .params
            .tensors_mut()
            .iter_mut()
            .zip(&names)
            .zip(&self.params)
        {
            if &saved.name != name || saved.shape != slot.shape() {
                return Err(Error::Data(format!(
                    "checkpoint tensor {} {:?} does not match {} {:?}",
                    saved.name,
                    saved.shape,
                    name,
                    slot.shape()
                )));
            }
            *slot = Tensor::new(saved.shape.clone(), saved.data.clone())?;
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DatasetSpec;
    use crate::harness::config::{DataSource, Variant};

    #[test]
    fn round_trip_is_exact() {
        let model = Model::new(Architecture::default(), 42).unwrap();
        let cfg = TrainConfig::new(
            DataSource::Spec(DatasetSpec::two_moons(20, 0.0, 0.1, 1)),
            Variant::SgaS,
        );
        let ck = Checkpoint::from_model(&model, &cfg);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_model().unwrap(), model);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let model = Model::new(Architecture::default(), 1).unwrap();
        let cfg = TrainConfig::new(
            DataSource::Spec(DatasetSpec::two_moons(20, 0.0, 0.1, 1)),
            Variant::SgaS,
        );
        let mut ck = Checkpoint::from_model(&model, &cfg);
        ck.params[0].shape = vec![1, 1];
        assert!(matches!(ck.to_model(), Err(Error::Data(_))));
    }
}
