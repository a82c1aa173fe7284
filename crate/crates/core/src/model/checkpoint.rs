//! Checkpoint file layout:
//!
//! ```text
//! b"SPTR1"
//! u64 LE   length of the JSON metadata block
//! JSON     {"config": .., "tensors": [{"name", "shape", "offset"}], ..}
//! f32 LE   parameter arrays in listed order; offsets are relative to the
//!          first byte after the metadata block
//! ```
//!
//! Training runs in `f64`; values are cast to `f32` on save.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelError, Spoter, SpoterConfig};
use crate::diffcore::Tensor;

pub const MAGIC: &[u8; 5] = b"SPTR1";

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Metadata {
    config: SpoterConfig,
    tensors: Vec<TensorEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vocabulary: Option<Vec<String>>,
    #[serde(default = "default_true")]
    normalize_inputs: bool,
}

fn default_true() -> bool {
    true
}

/// A model plus the data contract it was trained under.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: Spoter,
    /// Gloss vocabulary the class indices refer to.
    pub vocabulary: Option<Vec<String>>,
    /// Whether inputs were normalized during training.
    pub normalize_inputs: bool,
}

impl Checkpoint {
    pub fn new(model: Spoter) -> Self {
        Self {
            model,
            vocabulary: None,
            normalize_inputs: true,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let params = self.model.params();
        let mut offset = 0u64;
        let tensors = params
            .iter()
            .map(|(name, t)| {
                let entry = TensorEntry {
                    name: name.to_owned(),
                    shape: t.shape().to_vec(),
                    offset,
                };
                offset += 4 * t.len() as u64;
                entry
            })
            .collect();
        let meta = Metadata {
            config: self.model.config().clone(),
            tensors,
            vocabulary: self.vocabulary.clone(),
            normalize_inputs: self.normalize_inputs,
        };
        let json = serde_json::to_vec(&meta).expect("metadata serializes");

        let mut out = Vec::with_capacity(MAGIC.len() + 8 + json.len() + offset as usize);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in params.iter() {
            for &v in t.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(ModelError::Format("bad magic bytes".into()));
        }
        let rest = &bytes[MAGIC.len()..];
        let len_bytes: [u8; 8] = rest
            .get(..8)
            .and_then(|b| b.try_into().ok())
            .ok_or_else(|| ModelError::Truncated("missing metadata length".into()))?;
        let meta_len = u64::from_le_bytes(len_bytes);
        let rest = &rest[8..];
        if meta_len > rest.len() as u64 {
            return Err(ModelError::Truncated(format!(
                "metadata block of {meta_len} bytes, {} available",
                rest.len()
            )));
        }
        let (json, data) = rest.split_at(meta_len as usize);
        let meta: Metadata =
            serde_json::from_slice(json).map_err(|e| ModelError::Format(format!("metadata: {e}")))?;
        meta.config.validate()?;

        if meta.config.param_array_count() != Some(meta.tensors.len()) {
            return Err(ModelError::Format(format!(
                "config implies {:?} arrays, metadata lists {}",
                meta.config.param_array_count(),
                meta.tensors.len()
            )));
        }
        let specs = meta.config.param_specs();
        if specs.len() != meta.tensors.len() {
            return Err(ModelError::Format(format!(
                "config implies {} arrays, metadata lists {}",
                specs.len(),
                meta.tensors.len()
            )));
        }
        let mut tensors = Vec::with_capacity(specs.len());
        for (spec, entry) in specs.iter().zip(&meta.tensors) {
            if spec.name != entry.name || spec.shape != entry.shape {
                return Err(ModelError::ShapeMismatch {
                    name: entry.name.clone(),
                    expected: spec.shape.clone(),
                    found: entry.shape.clone(),
                });
            }
            let n = spec
                .shape
                .iter()
                .try_fold(4usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| ModelError::Format(format!("{}: shape too large", entry.name)))?;
            let start = usize::try_from(entry.offset)
                .map_err(|_| ModelError::Truncated(format!("{}: offset out of range", entry.name)))?;
            let end = start
                .checked_add(n)
                .filter(|&e| e <= data.len())
                .ok_or_else(|| ModelError::Truncated(format!("{}: data past end of file", entry.name)))?;
            let values = data[start..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            tensors.push(Tensor::new(spec.shape.clone(), values)?);
        }
        let model = Spoter::from_tensors(meta.config, tensors)?;
        Ok(Self {
            model,
            vocabulary: meta.vocabulary,
            normalize_inputs: meta.normalize_inputs,
        })
    }
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: impl AsRef<Path>) -> Result<(), ModelError> {
    fs::write(path, checkpoint.to_bytes())?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, ModelError> {
    Checkpoint::from_bytes(&fs::read(path)?)
}

/// Loads a checkpoint and rejects it unless its architecture equals `expected`.
pub fn load_checkpoint_expecting(path: impl AsRef<Path>, expected: &SpoterConfig) -> Result<Checkpoint, ModelError> {
    let ckpt = load_checkpoint(path)?;
    let found = ckpt.model.config();
    if found != expected {
        let expected_specs = expected.param_specs();
        let found_specs = found.param_specs();
        let (name, exp, got) = expected_specs
            .iter()
            .zip(&found_specs)
            .find(|(e, f)| e.shape != f.shape || e.name != f.name)
            .map(|(e, f)| (e.name.clone(), e.shape.clone(), f.shape.clone()))
            .unwrap_or_else(|| {
                (
                    "<config>".to_owned(),
                    vec![expected_specs.len()],
                    vec![found_specs.len()],
                )
            });
        return Err(ModelError::ShapeMismatch {
            name,
            expected: exp,
            found: got,
        });
    }
    Ok(ckpt)
}
