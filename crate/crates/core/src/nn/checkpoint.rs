//! Model checkpoints.
//!
//! A checkpoint is a JSON document:
//!
//! ```text
//! {
//!   "format": "meshclr-checkpoint",
//!   "version": 1,
//!   "seed": <u64>,
//!   "arch": { ...Architecture fields... },
//!   "stats": { "mean": [5 floats], "std": [5 floats] } | null,
//!   "tensors": [ { "name": "encoder.0.kernel", "values": [...] }, ... ]
//! }
//! ```
//!
//! Tensor names and order follow `ModelParams::named_tensors`. Floats are
//! written in shortest round-trip form and parsed exactly, so
//! `load(save(p)) == p` bit for bit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::ChannelStats;
use crate::nn::model::{init_params, Architecture, ModelParams, Parts};

pub const FORMAT: &str = "meshclr-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub seed: u64,
    pub stats: Option<ChannelStats>,
    pub params: ModelParams,
}

#[derive(Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Document {
    format: String,
    version: u32,
    seed: u64,
    arch: Architecture,
    stats: Option<ChannelStats>,
    tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        let tensors = self
            .params
            .named_tensors()
            .into_iter()
            .map(|(name, values)| {
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Checkpoint(format!("{name} has non-finite values")));
                }
                Ok(NamedTensor {
                    name,
                    values: values.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let doc = Document {
            format: FORMAT.into(),
            version: VERSION,
            seed: self.seed,
            arch: self.params.arch.clone(),
            stats: self.stats.clone(),
            tensors,
        };
        serde_json::to_string_pretty(&doc).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Document =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if doc.format != FORMAT || doc.version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format {} v{}",
                doc.format, doc.version
            )));
        }
        let has = |prefix: &str| doc.tensors.iter().any(|t| t.name.starts_with(prefix));
        let parts = Parts {
            head: has("head."),
            decoder: has("classifier."),
        };
        let mut params = init_params(&doc.arch, parts, 0)?;
        let names: Vec<String> = params.named_tensors().into_iter().map(|(n, _)| n).collect();
        if names.len() != doc.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                names.len(),
                doc.tensors.len()
            )));
        }
        for ((slot, name), t) in params
            .tensors_mut()
            .into_iter()
            .zip(&names)
            .zip(doc.tensors)
        {
            if &t.name != name || t.values.len() != slot.len() {
                return Err(Error::Checkpoint(format!(
                    "tensor {} does not match {name}",
                    t.name
                )));
            }
            *slot = t.values;
        }
        Ok(Checkpoint {
            seed: doc.seed,
            stats: doc.stats,
            params,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
