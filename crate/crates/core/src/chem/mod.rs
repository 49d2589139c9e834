//! Molecular graphs, a SMILES subset reader/writer, reaction SMILES, and the
//! bond-cut / fragment-exchange primitives used to build fictitious products.

mod element;
mod fragment;
mod graph;
mod isomorphism;
mod reaction;
mod smiles;
mod writer;

pub use element::{Element, Vocab};
pub use fragment::{cut_acyclic_bond, cuttable_bonds, exchange_fragments, CutResult, FragmentError};
pub use graph::{Atom, Bond, BondOrder, GraphError, MolecularGraph};
pub use isomorphism::is_isomorphic;
pub use reaction::{parse_reaction, Reaction, ReactionError};
pub use smiles::{parse_molecule, SmilesError};
pub use writer::{write_smiles, write_smiles_with_order};
