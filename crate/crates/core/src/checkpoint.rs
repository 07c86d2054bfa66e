//! Trained-model checkpoints as a single JSON document.
//!
//! Layout:
//!
//! ```text
//! {
//!   "format": "monattn-checkpoint",
//!   "version": 1,
//!   "checksum": "<hex sha256 of the compact JSON encoding of payload>",
//!   "payload": {
//!     "dims":      { vocab_size, d_emb, d_h, d_s, d_a, energy },
//!     "params":    [ { "name": "emb_in", "data": [...] }, ... ],
//!     "task_hash": "<hex sha256 of the task table>",
//!     "config":    { ...training configuration... },
//!     "step":      2000,
//!     "rng":       [ { seed, stream_id, word_pos }, ... ]
//!   }
//! }
//! ```
//!
//! Arrays are flat and row-major; their shapes follow from `dims`. Floats
//! are written with round-trip precision, so save, load and save again
//! produces identical bytes.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numkit::RngState;
use crate::seq2seq::{ModelDims, ModelParams, TrainConfig};

pub const FORMAT: &str = "monattn-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelCheckpoint {
    pub params: ModelParams,
    pub task_hash: String,
    pub config: TrainConfig,
    pub step: u64,
    /// Data and noise stream positions at the end of training.
    pub rng: Vec<RngState>,
}

#[derive(Serialize, Deserialize)]
struct NamedArray {
    name: String,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Payload {
    dims: ModelDims,
    params: Vec<NamedArray>,
    task_hash: String,
    config: TrainConfig,
    step: u64,
    rng: Vec<RngState>,
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    format: String,
    version: u32,
    checksum: String,
    payload: Payload,
}

fn checksum(payload: &Payload) -> Result<String> {
    let bytes = serde_json::to_vec(payload).map_err(|e| Error::Checkpoint(e.to_string()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl ModelCheckpoint {
    pub fn to_json(&self) -> Result<String> {
        let payload = Payload {
            dims: self.params.dims,
            params: self
                .params
                .tensors()
                .into_iter()
                .map(|(name, data)| NamedArray {
                    name: name.to_string(),
                    data: data.to_vec(),
                })
                .collect(),
            task_hash: self.task_hash.clone(),
            config: self.config.clone(),
            step: self.step,
            rng: self.rng.clone(),
        };
        let envelope = Envelope {
            format: FORMAT.to_string(),
            version: VERSION,
            checksum: checksum(&payload)?,
            payload,
        };
        let mut text = serde_json::to_string_pretty(&envelope).map_err(|e| Error::Checkpoint(e.to_string()))?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let envelope: Envelope =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(format!("malformed checkpoint: {e}")))?;
        if envelope.format != FORMAT {
            return Err(Error::Checkpoint(format!("unknown format '{}'", envelope.format)));
        }
        if envelope.version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {} (expected {VERSION})",
                envelope.version
            )));
        }
        let payload = envelope.payload;
        let actual = checksum(&payload)?;
        if actual != envelope.checksum {
            return Err(Error::Checkpoint(format!(
                "checksum mismatch: stored {}, computed {actual}",
                envelope.checksum
            )));
        }
        payload
            .dims
            .validate()
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut params = ModelParams::zeros(payload.dims);
        {
            let mut slots = params.tensors_mut();
            if slots.len() != payload.params.len() {
                return Err(Error::Checkpoint(format!(
                    "expected {} parameter arrays, found {}",
                    slots.len(),
                    payload.params.len()
                )));
            }
            for ((name, slot), array) in slots.iter_mut().zip(&payload.params) {
                if *name != array.name || slot.len() != array.data.len() {
                    return Err(Error::Checkpoint(format!(
                        "parameter '{}' ({} values) does not match expected '{name}' ({} values)",
                        array.name,
                        array.data.len(),
                        slot.len()
                    )));
                }
                slot.copy_from_slice(&array.data);
            }
        }
        if !params.is_finite() {
            return Err(Error::Checkpoint("non-finite parameter values".into()));
        }
        Ok(Self {
            params,
            task_hash: payload.task_hash,
            config: payload.config,
            step: payload.step,
            rng: payload.rng,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
