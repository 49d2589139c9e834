//! JSON-lines corpus records and the training-history CSV.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::chem::parse_reaction;

use super::{EpochRecord, LabeledReaction, PretrainError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusRecord {
    pub id: String,
    pub rxn_smiles: String,
    #[serde(default = "default_real")]
    pub is_real: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

fn default_real() -> bool {
    true
}

pub fn write_corpus_jsonl<W: Write>(mut out: W, corpus: &[LabeledReaction]) -> std::io::Result<()> {
    for e in corpus {
        let rec = CorpusRecord {
            id: e.reaction.id.clone(),
            rxn_smiles: e.reaction.to_smiles(),
            is_real: e.is_real,
            label: e.reaction.class_label.clone(),
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Reads every non-blank line; a record that fails to parse is an error
/// carrying its 1-based line number.
pub fn read_corpus_jsonl<R: BufRead>(input: R) -> Result<Vec<LabeledReaction>, PretrainError> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let err = |message: String| PretrainError::Corpus { line: n + 1, message };
        let line = line.map_err(|e| err(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CorpusRecord = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        let mut reaction = parse_reaction(&rec.rxn_smiles, &rec.id).map_err(|e| err(e.to_string()))?;
        reaction.class_label = rec.label;
        out.push(LabeledReaction { source_id: rec.id, reaction, is_real: rec.is_real, partner_id: None });
    }
    Ok(out)
}

pub fn write_history_csv<W: Write>(out: W, history: &[EpochRecord]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for rec in history {
        w.serialize(rec)?;
    }
    w.flush()?;
    Ok(())
}
