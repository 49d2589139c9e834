//! Checkpoint file: one line of JSON (config, seed, tensor index), a
//! newline, then every tensor as little-endian `f32` at its recorded byte
//! offset into the blob.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Tensor;

use super::{EncoderConfig, EncoderError, ModelCheckpoint};

const FORMAT: &str = "rxnemb-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("unsupported checkpoint format {format:?} version {version}")]
    Format { format: String, version: u32 },
    #[error("tensor {name} lies outside the {len}-byte blob")]
    Truncated { name: String, len: usize },
    #[error(transparent)]
    Model(#[from] EncoderError),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    config: EncoderConfig,
    seed: u64,
    tensors: Vec<TensorEntry>,
}

pub fn write_checkpoint<W: Write>(mut out: W, model: &ModelCheckpoint) -> Result<(), CheckpointError> {
    let mut offset = 0;
    let mut tensors = Vec::with_capacity(model.params.len());
    for (name, t) in &model.params {
        tensors.push(TensorEntry { name: name.clone(), shape: t.shape().to_vec(), offset });
        offset += t.len() * 4;
    }
    let header = Header {
        format: FORMAT.to_string(),
        version: VERSION,
        config: model.config.clone(),
        seed: model.seed,
        tensors,
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    let mut blob = Vec::with_capacity(offset);
    for t in model.params.values() {
        for v in t.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.write_all(&blob)?;
    out.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(input: R) -> Result<ModelCheckpoint, CheckpointError> {
    let mut reader = BufReader::new(input);
    let mut line = Vec::new();
    reader.read_until(b'\n', &mut line)?;
    let header: Header = serde_json::from_slice(&line)?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(CheckpointError::Format { format: header.format, version: header.version });
    }
    let mut blob = Vec::new();
    reader.read_to_end(&mut blob)?;
    let mut params = BTreeMap::new();
    for e in header.tensors {
        let n: usize = e.shape.iter().product();
        let bytes = blob
            .get(e.offset..e.offset + n * 4)
            .ok_or_else(|| CheckpointError::Truncated { name: e.name.clone(), len: blob.len() })?;
        let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        params.insert(e.name, Tensor::new(&e.shape, data).map_err(EncoderError::from)?);
    }
    let model = ModelCheckpoint { config: header.config, params, seed: header.seed };
    model.validate()?;
    Ok(model)
}
