//! Versioned, human-diffable model document.
//!
//! JSON with every parameter tensor stored as a named row-major array.
//! Floats are written in shortest round-trip decimal form, so loading a
//! saved model reproduces every parameter bit and every prediction.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifier::{ClassifierArch, ClassifierModel, TrainConfig, WasLstmParams};
use crate::error::{Error, Result};
use crate::intent::CommandMap;
use crate::nn::Parameterized;
use crate::rs::RsMap;
use crate::sam::{FocalState, SamConfig};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsMapRecord {
    pub k: usize,
    pub k_prime: usize,
    pub h: usize,
    pub permutation: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub train: TrainConfig,
    pub sam: Option<SamConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandTables {
    pub typing: CommandMap,
    pub robot: CommandMap,
}

impl Default for CommandTables {
    fn default() -> Self {
        Self {
            typing: CommandMap::typing(),
            robot: CommandMap::robot(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub seed: u64,
    pub dataset_fingerprint: String,
    pub focal_selector: String,
    pub focal_reward: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub rs_map: RsMapRecord,
    pub focal_state: FocalState,
    pub architecture: ClassifierArch,
    pub w1: f64,
    pub w2: f64,
    pub l2_lambda: f64,
    pub hyperparameters: Hyperparameters,
    pub command_tables: CommandTables,
    pub training: TrainingMetadata,
    pub parameters: Vec<NamedArray>,
}

fn field_err(field: impl Into<String>, message: impl Into<String>) -> Error {
    Error::ModelField {
        field: field.into(),
        message: message.into(),
    }
}

fn param_shapes(params: &WasLstmParams) -> Vec<Vec<usize>> {
    let mut shapes = Vec::new();
    for l in &params.dense {
        shapes.push(vec![l.out_dim(), l.in_dim()]);
        shapes.push(vec![l.out_dim()]);
    }
    for l in &params.lstm {
        for _ in 0..4 {
            shapes.push(vec![l.hidden_dim(), l.input_dim() + l.hidden_dim()]);
            shapes.push(vec![l.hidden_dim()]);
        }
    }
    shapes.push(vec![params.output.out_dim(), params.output.in_dim()]);
    shapes.push(vec![params.output.out_dim()]);
    shapes
}

impl ModelFile {
    pub fn from_model(
        model: &ClassifierModel,
        hyperparameters: Hyperparameters,
        training: TrainingMetadata,
    ) -> Self {
        let shapes = param_shapes(&model.params);
        let mut parameters = Vec::with_capacity(shapes.len());
        let mut i = 0;
        model.params.visit_params(&mut |name, p| {
            parameters.push(NamedArray {
                name: name.to_owned(),
                shape: shapes[i].clone(),
                data: p.to_vec(),
            });
            i += 1;
        });
        let rs = &model.rs_map;
        Self {
            format_version: FORMAT_VERSION,
            rs_map: RsMapRecord {
                k: rs.k(),
                k_prime: rs.k_prime(),
                h: rs.h(),
                permutation: rs.permutation().to_vec(),
            },
            focal_state: model.focal,
            architecture: model.arch,
            w1: model.w1,
            w2: model.w2,
            l2_lambda: model.l2_lambda,
            hyperparameters,
            command_tables: CommandTables::default(),
            training,
            parameters,
        }
    }

    /// Rebuilds the classifier, validating every structural invariant.
    pub fn to_model(&self) -> Result<ClassifierModel> {
        let r = &self.rs_map;
        let rs_map = RsMap::from_parts(r.k, r.k_prime, r.h, r.permutation.clone())
            .map_err(|e| field_err("rs_map", e.to_string()))?;
        let focal = self.focal_state;
        if !(focal.start_idx < focal.end_idx && focal.end_idx <= rs_map.k_prime() && focal.len() >= 2) {
            return Err(field_err("focal_state", format!("{focal} invalid for K' = {}", rs_map.k_prime())));
        }
        for (name, v) in [("w1", self.w1), ("w2", self.w2), ("l2_lambda", self.l2_lambda)] {
            if !v.is_finite() {
                return Err(field_err(name, "not finite"));
            }
        }
        let arch = self.architecture;
        if arch.hidden == 0 || arch.lstm_layers == 0 || arch.class_count < 2 {
            return Err(field_err("architecture", "degenerate layer sizes"));
        }
        let mut params = WasLstmParams::new(&arch, 0);
        let shapes = param_shapes(&params);
        let mut expected = Vec::new();
        params.visit_params(&mut |name, p| expected.push((name.to_owned(), p.len())));
        if expected.len() != self.parameters.len() {
            return Err(field_err(
                "parameters",
                format!("expected {} arrays, found {}", expected.len(), self.parameters.len()),
            ));
        }
        for (((name, len), shape), arr) in expected.iter().zip(&shapes).zip(&self.parameters) {
            if &arr.name != name {
                return Err(field_err("parameters", format!("expected `{name}`, found `{}`", arr.name)));
            }
            if &arr.shape != shape || arr.data.len() != *len {
                return Err(field_err(
                    format!("parameters.{name}"),
                    format!("shape {:?} with {} values, expected {shape:?}", arr.shape, arr.data.len()),
                ));
            }
            if arr.data.iter().any(|v| !v.is_finite()) {
                return Err(field_err(format!("parameters.{name}"), "non-finite value"));
            }
        }
        let mut i = 0;
        params.visit_params_mut(&mut |_, p| {
            p.copy_from_slice(&self.parameters[i].data);
            i += 1;
        });
        Ok(ClassifierModel {
            arch,
            params,
            w1: self.w1,
            w2: self.w2,
            l2_lambda: self.l2_lambda,
            rs_map,
            focal,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model file serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| field_err("document", e.to_string()))?;
        let version = value
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| field_err("format_version", "missing or not an integer"))?;
        if version != FORMAT_VERSION as u64 {
            return Err(Error::Version {
                found: version.min(u32::MAX as u64) as u32,
                expected: FORMAT_VERSION,
            });
        }
        serde_json::from_value(value).map_err(|e| field_err("document", e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Saves a bare model with default metadata.
pub fn save_model(model: &ClassifierModel, path: impl AsRef<Path>) -> Result<()> {
    let file = ModelFile::from_model(
        model,
        Hyperparameters {
            train: TrainConfig {
                l2_lambda: model.l2_lambda,
                w1: model.w1,
                w2: model.w2,
                ..TrainConfig::default()
            },
            sam: None,
        },
        TrainingMetadata {
            seed: 0,
            dataset_fingerprint: String::new(),
            focal_selector: "unspecified".into(),
            focal_reward: None,
        },
    );
    file.save(path)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ClassifierModel> {
    ModelFile::load(path)?.to_model()
}
