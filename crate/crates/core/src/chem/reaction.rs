use thiserror::Error;

use super::graph::MolecularGraph;
use super::smiles::{parse_molecule, SmilesError};
use super::writer::write_smiles;

/// A reaction as two component lists. The reactant side holds everything
/// left of the arrow, agents included.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reaction {
    pub id: String,
    pub reactant_components: Vec<MolecularGraph>,
    pub product_components: Vec<MolecularGraph>,
    pub class_label: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Reactants,
    Agents,
    Products,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReactionError {
    #[error("reaction SMILES must have the form A>>C or A>B>C")]
    MalformedArrow,
    #[error("{0:?} side of the reaction is empty")]
    EmptySide(Side),
    #[error("{side:?} component {index}: {error}")]
    Component { side: Side, index: usize, error: SmilesError },
}

/// Parse `reactants>agents>products`; agents join the reactant side after
/// the reactants, and component order is kept as written.
pub fn parse_reaction(rxn_smiles: &str, id: &str) -> Result<Reaction, ReactionError> {
    let parts: Vec<&str> = rxn_smiles.trim().split('>').collect();
    let [reactants, agents, products] = parts.as_slice() else {
        return Err(ReactionError::MalformedArrow);
    };
    let parse_side = |text: &str, side: Side| -> Result<Vec<MolecularGraph>, ReactionError> {
        if text.is_empty() {
            return Ok(Vec::new());
        }
        text.split('.')
            .enumerate()
            .map(|(index, s)| {
                parse_molecule(s).map_err(|error| ReactionError::Component { side, index, error })
            })
            .collect()
    };
    let mut reactant_components = parse_side(reactants, Side::Reactants)?;
    reactant_components.extend(parse_side(agents, Side::Agents)?);
    let product_components = parse_side(products, Side::Products)?;
    if reactant_components.is_empty() {
        return Err(ReactionError::EmptySide(Side::Reactants));
    }
    if product_components.is_empty() {
        return Err(ReactionError::EmptySide(Side::Products));
    }
    Ok(Reaction {
        id: id.to_string(),
        reactant_components,
        product_components,
        class_label: None,
    })
}

impl Reaction {
    /// Reaction SMILES in `A>>C` form from the writer's per-component output.
    pub fn to_smiles(&self) -> String {
        let side = |mols: &[MolecularGraph]| {
            mols.iter().map(write_smiles).collect::<Vec<_>>().join(".")
        };
        format!("{}>>{}", side(&self.reactant_components), side(&self.product_components))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::is_isomorphic;

    #[test]
    fn acid_chloride_formation() {
        let r = parse_reaction("O=C(O)c1ccccc1.[Cl-]>>O=C(Cl)c1ccccc1", "C1").unwrap();
        assert_eq!(r.reactant_components.len(), 2);
        assert_eq!(r.product_components.len(), 1);
        assert_eq!(r.id, "C1");
    }

    #[test]
    fn identity_reaction() {
        let r = parse_reaction("C>>C", "x").unwrap();
        assert_eq!(r.reactant_components.len(), 1);
        assert!(is_isomorphic(&r.reactant_components[0], &r.product_components[0]));
    }

    #[test]
    fn agents_join_reactants() {
        let r = parse_reaction("C.O>[Na+]>CO", "x").unwrap();
        assert_eq!(r.reactant_components.len(), 3);
        assert_eq!(r.product_components.len(), 1);
        assert_eq!(write_smiles(&r.reactant_components[2]), "[Na+]");
    }

    #[test]
    fn errors() {
        assert_eq!(parse_reaction(">>C", "x"), Err(ReactionError::EmptySide(Side::Reactants)));
        assert_eq!(parse_reaction("C>>", "x"), Err(ReactionError::EmptySide(Side::Products)));
        assert_eq!(parse_reaction("CC", "x"), Err(ReactionError::MalformedArrow));
        assert_eq!(parse_reaction("C>C>C>C", "x"), Err(ReactionError::MalformedArrow));
        match parse_reaction("C.C(>>C", "x") {
            Err(ReactionError::Component { side: Side::Reactants, index: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        match parse_reaction("C>>C..C", "x") {
            Err(ReactionError::Component { side: Side::Products, index: 1, error: SmilesError::Empty }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}
