//! File formats shared by the commands: reaction JSON lines in, a binary
//! embedding matrix, and run manifests.

use std::io::{BufRead, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::chem::{parse_reaction, Reaction};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("line {line}: {message}")]
    Record { line: usize, message: String },
    #[error("embedding file: {0}")]
    Embeddings(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// One input line. Extra fields (labels, flags) are tolerated so corpus
/// files can be embedded directly.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ReactionRecord {
    pub id: String,
    pub rxn_smiles: String,
}

/// A record whose SMILES did not parse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedRecord {
    pub line: usize,
    pub id: String,
    pub error: String,
}

#[derive(Debug, Default)]
pub struct ReactionBatch {
    pub reactions: Vec<Reaction>,
    pub skipped: Vec<SkippedRecord>,
}

/// Reads JSON lines of `{id, rxn_smiles}`. Malformed JSON is an error;
/// reactions that fail to parse are collected in `skipped`.
pub fn read_reactions<R: BufRead>(input: R) -> Result<ReactionBatch, IoError> {
    let mut out = ReactionBatch::default();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ReactionRecord =
            serde_json::from_str(&line).map_err(|e| IoError::Record { line: n + 1, message: e.to_string() })?;
        match parse_reaction(&rec.rxn_smiles, &rec.id) {
            Ok(r) => out.reactions.push(r),
            Err(e) => out.skipped.push(SkippedRecord { line: n + 1, id: rec.id, error: e.to_string() }),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingHeader {
    pub count: usize,
    pub emb_dim: usize,
    pub ids: Vec<String>,
    /// Input records that could not be embedded.
    pub skipped: usize,
    /// Reaction SMILES as written back from the parsed graphs, one per id.
    pub smiles: Vec<String>,
}

/// Header plus a row-major `count × emb_dim` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub header: EmbeddingHeader,
    pub data: Vec<f32>,
}

impl EmbeddingSet {
    pub fn new(ids: Vec<String>, smiles: Vec<String>, rows: &[Vec<f32>], skipped: usize) -> Result<Self, IoError> {
        let emb_dim = rows.first().map_or(0, Vec::len);
        if ids.len() != rows.len() || smiles.len() != rows.len() {
            return Err(IoError::Embeddings(format!(
                "{} ids and {} smiles for {} rows",
                ids.len(),
                smiles.len(),
                rows.len()
            )));
        }
        if rows.iter().any(|r| r.len() != emb_dim) {
            return Err(IoError::Embeddings("rows differ in length".into()));
        }
        let data = rows.iter().flatten().copied().collect();
        Ok(EmbeddingSet { header: EmbeddingHeader { count: rows.len(), emb_dim, ids, skipped, smiles }, data })
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let d = self.header.emb_dim;
        &self.data[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> Vec<&[f32]> {
        (0..self.header.count).map(|i| self.row(i)).collect()
    }
}

/// Compact JSON header, one `\n`, then the matrix as little-endian `f32`.
pub fn write_embeddings<W: Write>(mut out: W, set: &EmbeddingSet) -> Result<(), IoError> {
    serde_json::to_writer(&mut out, &set.header)?;
    out.write_all(b"\n")?;
    let mut bytes = Vec::with_capacity(set.data.len() * 4);
    for v in &set.data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&bytes)?;
    out.flush()?;
    Ok(())
}

pub fn read_embeddings<R: Read>(mut input: R) -> Result<EmbeddingSet, IoError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| IoError::Embeddings("missing header terminator".into()))?;
    let header: EmbeddingHeader = serde_json::from_slice(&bytes[..nl])?;
    let body = &bytes[nl + 1..];
    let expected = header.count * header.emb_dim * 4;
    if body.len() != expected {
        return Err(IoError::Embeddings(format!("expected {expected} matrix bytes, found {}", body.len())));
    }
    if header.ids.len() != header.count || header.smiles.len() != header.count {
        return Err(IoError::Embeddings("id or smiles count differs from count".into()));
    }
    let data = body.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    Ok(EmbeddingSet { header, data })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    /// As given on the command line (inputs) or relative to the output
    /// directory (outputs).
    pub path: String,
    pub sha256: String,
}

/// Provenance record written next to every command's outputs. Contains no
/// timestamps so reruns stay byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub config: serde_json::Value,
}
