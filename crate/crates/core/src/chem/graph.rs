use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::element::Element;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Contribution to an atom's valence sum. Aromatic bonds count 1; the
    /// extra half bond of an aromatic atom is added once per atom.
    pub fn valence_contribution(self) -> u32 {
        match self {
            BondOrder::Single | BondOrder::Aromatic => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Atom {
    pub element: Element,
    pub formal_charge: i8,
    pub aromatic: bool,
    /// Total attached hydrogens, implicit ones resolved at parse time.
    pub explicit_h: u8,
    pub isotope: Option<u16>,
    /// Parsed and carried along; never consumed downstream.
    pub atom_map: Option<u32>,
}

impl Atom {
    pub fn new(element: Element) -> Self {
        Atom {
            element,
            formal_charge: 0,
            aromatic: false,
            explicit_h: 0,
            isotope: None,
            atom_map: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
}

impl Bond {
    pub fn other(&self, atom: usize) -> usize {
        if self.a == atom {
            self.b
        } else {
            self.a
        }
    }

    pub fn touches(&self, atom: usize) -> bool {
        self.a == atom || self.b == atom
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("bond {bond} has an endpoint outside the graph")]
    EndpointOutOfRange { bond: usize },
    #[error("bond {bond} is a self-loop")]
    SelfLoop { bond: usize },
    #[error("atoms {a} and {b} are bonded more than once")]
    DuplicateBond { a: usize, b: usize },
    #[error("aromatic bond {bond} joins a non-aromatic atom")]
    AromaticMismatch { bond: usize },
    #[error("atom {atom} carries {count} hydrogens (limit 8)")]
    TooManyHydrogens { atom: usize, count: u8 },
}

/// Undirected molecular graph; each bond is stored once.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MolecularGraph {
    pub atoms: Vec<Atom>,
    pub bonds: Vec<Bond>,
}

impl MolecularGraph {
    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        let n = self.atoms.len();
        let mut seen = std::collections::HashSet::new();
        for (i, bond) in self.bonds.iter().enumerate() {
            if bond.a >= n || bond.b >= n {
                return Err(GraphError::EndpointOutOfRange { bond: i });
            }
            if bond.a == bond.b {
                return Err(GraphError::SelfLoop { bond: i });
            }
            let key = (bond.a.min(bond.b), bond.a.max(bond.b));
            if !seen.insert(key) {
                return Err(GraphError::DuplicateBond { a: key.0, b: key.1 });
            }
            if bond.order == BondOrder::Aromatic
                && !(self.atoms[bond.a].aromatic && self.atoms[bond.b].aromatic)
            {
                return Err(GraphError::AromaticMismatch { bond: i });
            }
        }
        for (i, atom) in self.atoms.iter().enumerate() {
            if atom.explicit_h > 8 {
                return Err(GraphError::TooManyHydrogens { atom: i, count: atom.explicit_h });
            }
        }
        Ok(())
    }

    /// Neighbor lists, each sorted by atom index.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.atoms.len()];
        for bond in &self.bonds {
            adj[bond.a].push(bond.b);
            adj[bond.b].push(bond.a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    pub fn degree(&self, atom: usize) -> usize {
        self.bonds.iter().filter(|b| b.touches(atom)).count()
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<usize> {
        self.bonds
            .iter()
            .position(|bond| (bond.a == a && bond.b == b) || (bond.a == b && bond.b == a))
    }

    /// Sum of bond valence contributions at `atom`, plus one for aromatic
    /// atoms (their share of the delocalized double bond).
    pub fn valence_sum(&self, atom: usize) -> u32 {
        let bonds: u32 = self
            .bonds
            .iter()
            .filter(|b| b.touches(atom))
            .map(|b| b.order.valence_contribution())
            .sum();
        bonds + u32::from(self.atoms[atom].aromatic)
    }

    /// Hydrogen count an unbracketed atom would receive from the valence
    /// table. `None` for elements that cannot be written unbracketed.
    pub fn implied_hydrogens(&self, atom: usize) -> Option<u8> {
        let a = &self.atoms[atom];
        let valences = a.element.default_valences();
        if valences.is_empty() {
            return None;
        }
        let used = self.valence_sum(atom);
        // Aromatic atoms only ever take their lowest valence; kekulization
        // would be needed to justify anything else.
        let candidates: &[u8] = if a.aromatic { &valences[..1] } else { valences };
        Some(
            candidates
                .iter()
                .map(|&v| u32::from(v))
                .find(|&v| v >= used)
                .map_or(0, |v| (v - used) as u8),
        )
    }

    /// Connected components as sorted atom index lists, ordered by their
    /// smallest atom.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let adj = self.adjacency();
        let mut seen = vec![false; self.atoms.len()];
        let mut out = Vec::new();
        for start in 0..self.atoms.len() {
            if seen[start] {
                continue;
            }
            let mut stack = vec![start];
            seen[start] = true;
            let mut comp = Vec::new();
            while let Some(v) = stack.pop() {
                comp.push(v);
                for &w in &adj[v] {
                    if !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// Subgraph induced by `atoms` (in the given order).
    pub fn induced(&self, atoms: &[usize]) -> MolecularGraph {
        let mut remap = vec![usize::MAX; self.atoms.len()];
        for (new, &old) in atoms.iter().enumerate() {
            remap[old] = new;
        }
        let bonds = self
            .bonds
            .iter()
            .filter(|b| remap[b.a] != usize::MAX && remap[b.b] != usize::MAX)
            .map(|b| Bond { a: remap[b.a], b: remap[b.b], order: b.order })
            .collect();
        MolecularGraph {
            atoms: atoms.iter().map(|&i| self.atoms[i].clone()).collect(),
            bonds,
        }
    }

    pub fn total_charge(&self) -> i32 {
        self.atoms.iter().map(|a| i32::from(a.formal_charge)).sum()
    }
}
