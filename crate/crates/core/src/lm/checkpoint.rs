//! Versioned binary model container.
//!
//! ```text
//! b"FSDLM\0"            magic, 6 bytes
//! u32 LE                format version (1)
//! u32 LE                header length in bytes
//! header                compact JSON: {"model":…, "adapter":…|null, "tensors":[{"name","shape"}…]}
//! f32 LE …              every tensor in header order: base tensors, then adapter tensors
//! ```

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::config::{AdapterConfig, ModelConfig};
use super::layout::{AdapterLayout, Layout, TensorSpec};
use super::model::{AdapterSet, LanguageModel};

pub const MAGIC: &[u8; 6] = b"FSDLM\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CheckpointError {
    #[error("not a model checkpoint (bad magic bytes)")]
    BadMagic,
    #[error("unsupported checkpoint version {0} (expected {FORMAT_VERSION})")]
    UnsupportedVersion(u32),
    #[error("checkpoint truncated: needed {needed} bytes, {available} available")]
    Truncated { needed: usize, available: usize },
    #[error("malformed checkpoint header: {0}")]
    Header(String),
    #[error("tensor shape mismatch at {name}: expected {expected:?}, found {found:?}")]
    TensorShape { name: String, expected: Vec<usize>, found: Vec<usize> },
    #[error("checkpoint has {0} unexpected trailing bytes")]
    TrailingBytes(usize),
    #[error("tensor {0} holds non-finite values")]
    NonFinite(String),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    model: ModelConfig,
    adapter: Option<AdapterConfig>,
    tensors: Vec<TensorSpec>,
}

pub fn encode_model(model: &LanguageModel) -> Vec<u8> {
    let mut tensors = model.layout().tensors.clone();
    if let Some(a) = model.adapters() {
        tensors.extend(a.tensors().iter().cloned());
    }
    let header = Header { model: model.config().clone(), adapter: model.adapters().map(|a| a.config().clone()), tensors };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let n_values = model.params().len() + model.adapters().map_or(0, |a| a.params().len());
    let mut out = Vec::with_capacity(14 + json.len() + 4 * n_values);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    let adapter_params = model.adapters().map(|a| a.params()).unwrap_or(&[]);
    for p in model.params().iter().chain(adapter_params) {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(CheckpointError::Truncated { needed: self.pos + n, available: self.bytes.len() });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

fn check_shapes(expected: &[TensorSpec], found: &[TensorSpec]) -> Result<(), CheckpointError> {
    for (i, e) in expected.iter().enumerate() {
        match found.get(i) {
            Some(f) if f.name == e.name && f.shape == e.shape => {}
            Some(f) => {
                return Err(CheckpointError::TensorShape {
                    name: e.name.clone(),
                    expected: e.shape.clone(),
                    found: if f.name == e.name { f.shape.clone() } else { Vec::new() },
                })
            }
            None => {
                return Err(CheckpointError::TensorShape {
                    name: e.name.clone(),
                    expected: e.shape.clone(),
                    found: Vec::new(),
                })
            }
        }
    }
    if let Some(extra) = found.get(expected.len()) {
        return Err(CheckpointError::TensorShape { name: extra.name.clone(), expected: Vec::new(), found: extra.shape.clone() });
    }
    Ok(())
}

fn read_f32s(r: &mut Reader<'_>, specs: &[TensorSpec], total: usize) -> Result<Vec<f32>, CheckpointError> {
    let raw = r.take(4 * total)?;
    let values: Vec<f32> = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    for t in specs {
        if values[t.range()].iter().any(|v| !v.is_finite()) {
            return Err(CheckpointError::NonFinite(t.name.clone()));
        }
    }
    Ok(values)
}

/// Parse a checkpoint. Either the whole model is returned or an error.
pub fn decode_model(bytes: &[u8]) -> Result<LanguageModel, CheckpointError> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(MAGIC.len()).map_err(|_| CheckpointError::BadMagic)?;
    if magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let header_len = r.u32()? as usize;
    let header: Header =
        serde_json::from_slice(r.take(header_len)?).map_err(|e| CheckpointError::Header(e.to_string()))?;
    header.model.validate().map_err(|e| CheckpointError::Header(e.to_string()))?;
    if let Some(a) = &header.adapter {
        a.validate().map_err(|e| CheckpointError::Header(e.to_string()))?;
    }

    let layout = Layout::new(&header.model);
    let adapter_layout = header.adapter.as_ref().map(|a| AdapterLayout::new(&header.model, a));
    let mut expected = layout.tensors.clone();
    if let Some(al) = &adapter_layout {
        expected.extend(al.tensors.iter().cloned());
    }
    check_shapes(&expected, &header.tensors)?;

    let base = read_f32s(&mut r, &layout.tensors, layout.total)?;
    let adapter = match (header.adapter, adapter_layout) {
        (Some(cfg), Some(al)) => {
            let values = read_f32s(&mut r, &al.tensors, al.total)?;
            Some(AdapterSet::from_parts(&header.model, cfg, values).map_err(|e| CheckpointError::Header(e.to_string()))?)
        }
        _ => None,
    };
    if r.pos != bytes.len() {
        return Err(CheckpointError::TrailingBytes(bytes.len() - r.pos));
    }
    LanguageModel::from_parts(header.model, base, adapter).map_err(|e| CheckpointError::Header(format!("{e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::ModelConfig;

    fn tiny() -> LanguageModel {
        LanguageModel::new(ModelConfig {
            vocab_size: 259,
            context_len: 32,
            embed_dim: 8,
            num_layers: 1,
            num_heads: 2,
            feedforward_dim: 16,
            seed: 3,
        })
        .unwrap()
    }

    #[test]
    fn round_trip_with_adapters() {
        let mut m = tiny();
        m.attach_adapters(AdapterConfig::default(), 4).unwrap();
        let bytes = encode_model(&m);
        assert_eq!(&bytes[..6], MAGIC);
        let back = decode_model(&bytes).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn bad_magic_and_version() {
        let mut bytes = encode_model(&tiny());
        bytes[0] = b'X';
        assert_eq!(decode_model(&bytes), Err(CheckpointError::BadMagic));
        let mut bytes = encode_model(&tiny());
        bytes[6] = 9;
        assert_eq!(decode_model(&bytes), Err(CheckpointError::UnsupportedVersion(9)));
    }

    #[test]
    fn every_truncation_is_rejected() {
        let bytes = encode_model(&tiny());
        for cut in (0..bytes.len()).step_by(37).chain([bytes.len() - 1]) {
            let err = decode_model(&bytes[..cut]).unwrap_err();
            assert!(
                matches!(err, CheckpointError::Truncated { .. } | CheckpointError::BadMagic),
                "cut {cut}: {err:?}"
            );
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let m = tiny();
        let mut header = Header { model: m.config().clone(), adapter: None, tensors: m.layout().tensors.clone() };
        header.tensors[0].shape = alloc::vec![259, 9];
        let json = serde_json::to_vec(&header).unwrap();
        let mut bytes = Vec::new();
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        bytes.extend_from_slice(&(json.len() as u32).to_le_bytes());
        bytes.extend_from_slice(&json);
        assert!(matches!(decode_model(&bytes), Err(CheckpointError::TensorShape { .. })));
    }

    #[test]
    fn trailing_bytes_are_rejected() {
        let mut bytes = encode_model(&tiny());
        bytes.push(0);
        assert_eq!(decode_model(&bytes), Err(CheckpointError::TrailingBytes(1)));
    }
}
