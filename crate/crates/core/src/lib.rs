//! Reaction embeddings from a pre-trained dual graph/Transformer encoder.
//!
//! The crate covers the full desk-scale pipeline: SMILES ingestion
//! ([`chem`]), a small reverse-mode tensor engine ([`autodiff`]), the
//! reaction encoder ([`encoder`]), real-vs-fictitious pre-training
//! ([`pretrain`]), centroid clustering with optimal leaf ordering
//! ([`cluster`]), a 2-D neighbor-graph projection ([`project`]) and SVG
//! rendering ([`viz`]). The `rxnemb` binary wires them into file-based
//! commands.

pub mod autodiff;
pub mod chem;
pub mod cluster;
pub mod encoder;
pub mod io;
pub mod pretrain;
pub mod project;
pub mod viz;
