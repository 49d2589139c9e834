//! Real/fictitious corpus construction by product fragment exchange.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::chem::{cut_acyclic_bond, cuttable_bonds, exchange_fragments, is_isomorphic, CutResult, MolecularGraph, Reaction};

use super::PretrainError;

const MAX_TRIES: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledReaction {
    pub reaction: Reaction,
    pub is_real: bool,
    /// Id of the real reaction this entry derives from.
    pub source_id: String,
    /// For fictitious entries, the reaction whose product supplied the
    /// foreign fragment.
    pub partner_id: Option<String>,
}

/// Index of the product component that gets cut: the largest one, first
/// on ties.
fn main_product(rxn: &Reaction) -> usize {
    let mut best = 0;
    for (i, m) in rxn.product_components.iter().enumerate() {
        if m.atoms.len() > rxn.product_components[best].atoms.len() {
            best = i;
        }
    }
    best
}

fn random_cut(mol: &MolecularGraph, rng: &mut ChaCha8Rng) -> Option<CutResult> {
    let bonds = cuttable_bonds(mol);
    if bonds.is_empty() {
        return None;
    }
    let b = bonds[rng.random_range(0..bonds.len())];
    Some(cut_acyclic_bond(mol, b).expect("cuttable bond"))
}

/// One fictitious counterpart for `real[index]`, or `None` after
/// `MAX_TRIES` failed attempts.
fn fictitious_for(real: &[Reaction], index: usize, seed: u64) -> Result<Option<LabeledReaction>, PretrainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ index as u64);
    let rxn = &real[index];
    let target = main_product(rxn);
    let product = &rxn.product_components[target];
    if cuttable_bonds(product).is_empty() {
        return Err(PretrainError::NoCuttableBond(rxn.id.clone()));
    }
    for _ in 0..MAX_TRIES {
        let own = random_cut(product, &mut rng).expect("checked above");
        let mut p = rng.random_range(0..real.len() - 1);
        if p >= index {
            p += 1;
        }
        let partner = &real[p];
        let Some(other) = random_cut(&partner.product_components[main_product(partner)], &mut rng) else {
            continue;
        };
        let Ok((candidate, _)) = exchange_fragments(&own, &other) else {
            continue;
        };
        if is_isomorphic(&candidate, product) {
            continue;
        }
        let mut fake = rxn.clone();
        fake.id = format!("{}_fict", rxn.id);
        fake.product_components[target] = candidate;
        return Ok(Some(LabeledReaction {
            reaction: fake,
            is_real: false,
            source_id: rxn.id.clone(),
            partner_id: Some(partner.id.clone()),
        }));
    }
    Ok(None)
}

/// All real reactions followed by one fictitious counterpart per real
/// entry (same reactant side, product replaced by a fragment exchange with
/// a random partner product). Entries that yield no distinct product in
/// ten tries, or whose product cannot be cut, are dropped with a warning.
/// Each entry draws from its own stream seeded `seed ^ index`, so the
/// result does not depend on scheduling.
pub fn make_fictitious_corpus(real: &[Reaction], seed: u64) -> Result<Vec<LabeledReaction>, PretrainError> {
    if real.len() < 2 {
        return Err(PretrainError::NotEnoughReactions(real.len()));
    }
    let fakes: Vec<Result<Option<LabeledReaction>, PretrainError>> =
        (0..real.len()).into_par_iter().map(|i| fictitious_for(real, i, seed)).collect();

    let mut out: Vec<LabeledReaction> = real
        .iter()
        .map(|r| LabeledReaction { reaction: r.clone(), is_real: true, source_id: r.id.clone(), partner_id: None })
        .collect();
    for (i, f) in fakes.into_iter().enumerate() {
        match f {
            Ok(Some(entry)) => out.push(entry),
            Ok(None) => warn!("no distinct fictitious product for {} after {MAX_TRIES} tries; dropped", real[i].id),
            Err(e) => warn!("{e}; dropped"),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_reaction;
    use crate::pretrain::synth_templates;

    #[test]
    fn two_reaction_corpus() {
        let real = vec![
            parse_reaction("CC(=O)O.OCC>>CC(=O)OCC", "a").unwrap(),
            parse_reaction("c1ccccc1N.BrCC>>c1ccccc1NCC", "b").unwrap(),
        ];
        let corpus = make_fictitious_corpus(&real, 5).unwrap();
        assert_eq!(corpus.len(), 4);
        for (real_entry, fake) in corpus[..2].iter().zip(&corpus[2..]) {
            assert!(real_entry.is_real && !fake.is_real);
            assert_eq!(fake.source_id, real_entry.reaction.id);
            assert_eq!(fake.reaction.reactant_components, real_entry.reaction.reactant_components);
            assert!(!is_isomorphic(&fake.reaction.product_components[0], &real_entry.reaction.product_components[0]));
        }
    }

    #[test]
    fn balanced_and_deterministic() {
        let real = synth_templates(100, 2);
        let a = make_fictitious_corpus(&real, 8).unwrap();
        let b = make_fictitious_corpus(&real, 8).unwrap();
        assert_eq!(a, b);
        let fakes = a.iter().filter(|e| !e.is_real).count();
        assert_eq!(a.len() - fakes, 100);
        assert_eq!(fakes, 100);
    }

    #[test]
    fn needs_two_reactions() {
        let real = vec![parse_reaction("CCO>>CC=O", "a").unwrap()];
        assert_eq!(make_fictitious_corpus(&real, 0).unwrap_err(), PretrainError::NotEnoughReactions(1));
    }

    #[test]
    fn uncuttable_product_is_dropped() {
        let real = vec![
            parse_reaction("C1CCCCC1>>c1ccccc1", "ring").unwrap(),
            parse_reaction("CC(=O)O.OCC>>CC(=O)OCC", "a").unwrap(),
            parse_reaction("c1ccccc1N.BrCC>>c1ccccc1NCC", "b").unwrap(),
        ];
        let corpus = make_fictitious_corpus(&real, 1).unwrap();
        assert_eq!(corpus.iter().filter(|e| !e.is_real).count(), 2);
        assert!(corpus.iter().all(|e| e.is_real || e.source_id != "ring"));
    }
}
