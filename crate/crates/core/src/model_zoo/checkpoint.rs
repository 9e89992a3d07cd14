// SPDX-License-Identifier: MIT OR Apache-2.0

//! Self-describing JSON checkpoints.
//!
//! Values are stored as 64-bit floats, so 32-bit parameters round-trip exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tensor::{Precision, Real, Tensor};

use super::config::BackboneConfig;
use super::model::Model;
use super::params::ParamSet;
use crate::error::{Error, Result};

pub const FORMAT: &str = "mechrecall-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub task: String,
    pub seed: u64,
    pub lr: f64,
    pub epoch: usize,
    pub precision: Precision,
    /// Set when training produced a non-finite loss.
    #[serde(default)]
    pub failed: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub config: BackboneConfig,
    pub params: Vec<NamedTensor>,
    pub provenance: Provenance,
}

impl Checkpoint {
    pub fn from_model<T: Real>(model: &Model<T>, provenance: Provenance) -> Self {
        Self {
            format: FORMAT.into(),
            config: model.config.clone(),
            params: model
                .params
                .iter()
                .map(|(name, t)| NamedTensor {
                    name: name.to_string(),
                    shape: t.shape().to_vec(),
                    data: t.to_f64_vec(),
                })
                .collect(),
            provenance,
        }
    }

    pub fn to_model<T: Real>(&self) -> Result<Model<T>> {
        if self.format != FORMAT {
            return Err(Error::Checkpoint(format!(
                "unknown format `{}`",
                self.format
            )));
        }
        let mut params = ParamSet::default();
        for p in &self.params {
            params.insert(p.name.clone(), Tensor::from_f64(&p.shape, &p.data)?)?;
        }
        Model::from_params(self.config.clone(), params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }
}
