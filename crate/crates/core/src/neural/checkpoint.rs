use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{ClassifierModel, DenseLayer, ModelKind};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDump {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major `in_dim x out_dim`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// JSON model dump: layer shapes, row-major weights and provenance tags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub kind: ModelKind,
    pub class_count: usize,
    pub dropout: f64,
    pub encoder_id: String,
    pub config_digest: String,
    pub layers: Vec<LayerDump>,
    pub history: Vec<f64>,
}

impl Checkpoint {
    pub fn from_model(model: &ClassifierModel, encoder_id: &str, config_digest: &str) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            kind: model.kind,
            class_count: model.class_count,
            dropout: model.dropout,
            encoder_id: encoder_id.into(),
            config_digest: config_digest.into(),
            layers: model
                .layers
                .iter()
                .map(|l| LayerDump {
                    in_dim: l.in_dim(),
                    out_dim: l.out_dim(),
                    weight: l.weight.iter().copied().collect(),
                    bias: l.bias.to_vec(),
                })
                .collect(),
            history: model.history.clone(),
        }
    }

    pub fn into_model(self) -> Result<ClassifierModel> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported checkpoint version {}",
                self.version
            )));
        }
        let mut layers = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.into_iter().enumerate() {
            let weight = Array2::from_shape_vec((l.in_dim, l.out_dim), l.weight)
                .map_err(|e| Error::invalid(format!("layer {i}: {e}")))?;
            if l.bias.len() != l.out_dim {
                return Err(Error::Dimension {
                    expected: l.out_dim,
                    got: l.bias.len(),
                });
            }
            if let Some(prev) = layers.last().map(DenseLayer::out_dim) {
                if prev != l.in_dim {
                    return Err(Error::Dimension {
                        expected: prev,
                        got: l.in_dim,
                    });
                }
            }
            layers.push(DenseLayer {
                weight,
                bias: Array1::from(l.bias),
            });
        }
        if layers.last().map(DenseLayer::out_dim) != Some(self.class_count) {
            return Err(Error::invalid("final layer width differs from class_count"));
        }
        Ok(ClassifierModel {
            kind: self.kind,
            layers,
            dropout: self.dropout,
            class_count: self.class_count,
            history: self.history,
        })
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, checkpoint: &Checkpoint) -> Result<()> {
    fs::write(path, serde_json::to_string(checkpoint)? + "\n")?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}
