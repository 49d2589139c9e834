//! Real-vs-fictitious pre-training: template corpus, fragment-exchange
//! negatives, BCE training and evaluation.

mod corpus;
mod io;
mod templates;
mod train;

use thiserror::Error;

use crate::encoder::EncoderError;

pub use corpus::{make_fictitious_corpus, LabeledReaction};
pub use io::{read_corpus_jsonl, write_corpus_jsonl, write_history_csv, CorpusRecord};
pub use templates::{synth_templates, TEMPLATE_LABELS};
pub use train::{
    evaluate, metrics, predict, stratified_split, train, EpochRecord, EvalReport, Split, TrainConfig, TrainOutcome,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PretrainError {
    #[error("reaction {0}: product has no acyclic single bond to cut")]
    NoCuttableBond(String),
    #[error("need at least 2 real reactions, got {0}")]
    NotEnoughReactions(usize),
    #[error("corpus contains only one class")]
    SingleClassCorpus,
    #[error("evaluation set is empty")]
    EmptySet,
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("corpus line {line}: {message}")]
    Corpus { line: usize, message: String },
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}
