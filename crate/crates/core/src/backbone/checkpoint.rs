//! Model checkpoints as a single JSON document.
//!
//! A checkpoint carries everything needed to score new records: backbone
//! hyperparameters, schema, vocabulary, named parameter tensors (flat
//! arrays of doubles plus their shapes), and the training/objective
//! configuration that produced them. Doubles are serialized in the shortest
//! decimal form that round-trips exactly, and all maps are ordered, so two
//! identical models write byte-identical files.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BackboneConfig, BackboneKind, FmParams, Model, MlpParams, TrainConfig};
use crate::error::{CwmError, Result};
use crate::objective::Objective;
use crate::records::Vocab;

/// Current checkpoint format version.
pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// On-disk model snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub backbone: BackboneConfig,
    pub schema: Vec<String>,
    pub vocab: Vocab,
    /// Tensor name -> dimensions.
    pub shapes: BTreeMap<String, Vec<usize>>,
    /// Tensor name -> row-major values.
    pub parameters: BTreeMap<String, Vec<f64>>,
    pub train_config: TrainConfig,
    pub objective_config: Objective,
}

/// Named tensor boundaries within a model's flat weight vector, in layout
/// order.
fn tensor_layout(model: &Model) -> Vec<(&'static str, Vec<usize>)> {
    match model {
        Model::Fm(p) => {
            let total = p.total_categories();
            vec![("bias", vec![1]), ("linear", vec![total]), ("embeddings", vec![total, p.k_emb])]
        }
        Model::Mlp(p) => {
            let total = p.total_categories();
            vec![
                ("embeddings", vec![total, p.k_emb]),
                ("w1", vec![p.hidden, p.in_dim()]),
                ("b1", vec![p.hidden]),
                ("w2", vec![p.hidden]),
                ("b2", vec![1]),
            ]
        }
    }
}

impl Checkpoint {
    /// Snapshot a trained model with its provenance.
    pub fn from_trained(
        model: &Model,
        schema: &[String],
        vocab: &Vocab,
        train_config: &TrainConfig,
        objective: &Objective,
    ) -> Checkpoint {
        let backbone = match model {
            Model::Fm(p) => BackboneConfig { kind: BackboneKind::Fm, k_emb: p.k_emb, ..BackboneConfig::fm() },
            Model::Mlp(p) => {
                BackboneConfig { kind: BackboneKind::Mlp, k_emb: p.k_emb, hidden: p.hidden, dropout: p.dropout }
            }
        };
        let mut shapes = BTreeMap::new();
        let mut parameters = BTreeMap::new();
        let mut offset = 0;
        let weights = model.weights();
        for (name, shape) in tensor_layout(model) {
            let len: usize = shape.iter().product();
            shapes.insert(name.to_string(), shape);
            parameters.insert(name.to_string(), weights[offset..offset + len].to_vec());
            offset += len;
        }
        debug_assert_eq!(offset, weights.len());
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            backbone,
            schema: schema.to_vec(),
            vocab: vocab.clone(),
            shapes,
            parameters,
            train_config: *train_config,
            objective_config: objective.clone(),
        }
    }

    /// Reassemble the model, validating tensor names, shapes, and values.
    pub fn to_model(&self) -> Result<Model> {
        self.backbone.validate()?;
        let field_cards = self.vocab.field_cards();
        let mut model = match self.backbone.kind {
            BackboneKind::Fm => Model::Fm(FmParams::zeros(&field_cards, self.backbone.k_emb)),
            BackboneKind::Mlp => Model::Mlp(MlpParams::zeros(
                &field_cards,
                self.backbone.k_emb,
                self.backbone.hidden,
                self.backbone.dropout,
            )),
        };
        let layout = tensor_layout(&model);
        let expected: Vec<&str> = layout.iter().map(|(n, _)| *n).collect();
        let found: Vec<&str> = self.parameters.keys().map(String::as_str).collect();
        {
            let mut sorted = expected.clone();
            sorted.sort_unstable();
            if found != sorted {
                return Err(CwmError::Data(format!(
                    "checkpoint tensors {found:?} do not match expected {sorted:?}"
                )));
            }
        }
        let mut offset = 0;
        let weights = model.weights_mut();
        for (name, shape) in &layout {
            let stored_shape = self.shapes.get(*name).ok_or_else(|| {
                CwmError::Data(format!("checkpoint is missing a shape entry for tensor {name}"))
            })?;
            if stored_shape != shape {
                return Err(CwmError::Data(format!(
                    "checkpoint tensor {name} has shape {stored_shape:?}, expected {shape:?}"
                )));
            }
            let values = &self.parameters[*name];
            let len: usize = shape.iter().product();
            if values.len() != len {
                return Err(CwmError::Data(format!(
                    "checkpoint tensor {name} holds {} values, shape {shape:?} needs {len}",
                    values.len()
                )));
            }
            if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
                return Err(CwmError::Data(format!("checkpoint tensor {name} contains non-finite value {bad}")));
            }
            weights[offset..offset + len].copy_from_slice(values);
            offset += len;
        }
        Ok(model)
    }

    /// Write pretty-printed JSON (deterministic bytes for equal contents).
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|source| CwmError::Json { path: path.into(), source })?;
        text.push('\n');
        fs::write(path, text).map_err(|source| CwmError::Io { path: path.into(), source })?;
        Ok(())
    }

    /// Read and version-check a checkpoint.
    pub fn load(path: &Path) -> Result<Checkpoint> {
        let text = fs::read_to_string(path).map_err(|source| CwmError::Io { path: path.into(), source })?;
        let ckpt: Checkpoint =
            serde_json::from_str(&text).map_err(|source| CwmError::Json { path: path.into(), source })?;
        if ckpt.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(CwmError::Config(format!(
                "checkpoint format version {} is not supported (expected {})",
                ckpt.format_version, CHECKPOINT_FORMAT_VERSION
            )));
        }
        Ok(ckpt)
    }
}
