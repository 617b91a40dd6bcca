use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelParams};
use crate::autodiff::Tensor;
use crate::corpus::LabelUniverse;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"HLANCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to rebuild a trained model.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub labels: LabelUniverse,
    /// Fingerprint of the vocabulary the embedding rows are indexed by.
    pub vocab_fingerprint: String,
    pub params: ModelParams,
}

#[derive(Serialize, Deserialize)]
struct TensorHeader {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    labels: LabelUniverse,
    vocab_fingerprint: String,
    tensors: Vec<TensorHeader>,
}

impl Checkpoint {
    /// Layout: magic, `u32` version, `u64` header length, JSON header, then
    /// every tensor's values as little-endian `f64` in header order.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let entries = self.params.entries();
        let header = Header {
            config: self.config.clone(),
            labels: self.labels.clone(),
            vocab_fingerprint: self.vocab_fingerprint.clone(),
            tensors: entries
                .iter()
                .map(|(name, _, t)| TensorHeader {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::format("checkpoint header", e))?;
        let mut out = Vec::with_capacity(20 + json.len() + 8 * self.params.num_scalars());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, _, t) in entries {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: String| Error::format("checkpoint", m);
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = bytes
            .get(20..)
            .filter(|b| b.len() >= header_len)
            .ok_or_else(|| bad("truncated header".into()))?;
        let header: Header =
            serde_json::from_slice(&body[..header_len]).map_err(|e| Error::format("checkpoint header", e))?;
        header.config.validate()?;
        let mut params = ModelParams::zeros(&header.config);
        let expected: Vec<(String, Vec<usize>)> = params
            .entries()
            .into_iter()
            .map(|(n, _, t)| (n, t.shape().to_vec()))
            .collect();
        if header.tensors.len() != expected.len() {
            return Err(bad(format!(
                "{} tensors, expected {}",
                header.tensors.len(),
                expected.len()
            )));
        }
        let mut data = &body[header_len..];
        for ((th, (name, shape)), slot) in header.tensors.iter().zip(expected).zip(params.tensors_mut()) {
            if th.name != name || th.shape != shape {
                return Err(bad(format!(
                    "tensor {} {:?} does not match {name} {shape:?}",
                    th.name, th.shape
                )));
            }
            let n: usize = shape.iter().product();
            if data.len() < 8 * n {
                return Err(bad(format!("truncated data for {name}")));
            }
            let values = data[..8 * n]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            *slot = Tensor::new(shape, values)?;
            data = &data[8 * n..];
        }
        if !data.is_empty() {
            return Err(bad(format!("{} trailing bytes", data.len())));
        }
        if header.labels.len() != header.config.num_labels {
            return Err(bad("label count disagrees with config".into()));
        }
        Ok(Self {
            config: header.config,
            labels: header.labels,
            vocab_fingerprint: header.vocab_fingerprint,
            params,
        })
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, checkpoint: &Checkpoint) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, checkpoint.to_bytes()?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}
