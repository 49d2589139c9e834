//! Reader for the supported SMILES subset: organic-subset and bracket atoms,
//! branches, ring closures (including `%nn`), and the bond symbols
//! `- = # : / \`. Chirality markers are accepted and dropped.

use std::collections::BTreeMap;

use thiserror::Error;

use super::element::Element;
use super::graph::{Atom, Bond, BondOrder, MolecularGraph};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SmilesError {
    #[error("empty SMILES")]
    Empty,
    #[error("ring closure {ring} opened at byte {offset} is never closed")]
    UnbalancedRing { offset: usize, ring: u32 },
    #[error("unbalanced parenthesis at byte {offset}")]
    UnbalancedParen { offset: usize },
    #[error("unexpected {found:?} at byte {offset}")]
    UnknownToken { offset: usize, found: String },
    #[error("hydrogen count of atom at byte {offset} exceeds its valence")]
    ValenceUnderflow { offset: usize },
    #[error("invalid bond at byte {offset}")]
    InvalidBond { offset: usize },
}

impl SmilesError {
    pub fn offset(&self) -> usize {
        match self {
            SmilesError::Empty => 0,
            SmilesError::UnbalancedRing { offset, .. }
            | SmilesError::UnbalancedParen { offset }
            | SmilesError::UnknownToken { offset, .. }
            | SmilesError::ValenceUnderflow { offset }
            | SmilesError::InvalidBond { offset } => *offset,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BondSymbol {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondSymbol {
    fn from_byte(b: u8) -> Option<Self> {
        match b {
            b'-' | b'/' | b'\\' => Some(BondSymbol::Single),
            b'=' => Some(BondSymbol::Double),
            b'#' => Some(BondSymbol::Triple),
            b':' => Some(BondSymbol::Aromatic),
            _ => None,
        }
    }

    fn order(self) -> BondOrder {
        match self {
            BondSymbol::Single => BondOrder::Single,
            BondSymbol::Double => BondOrder::Double,
            BondSymbol::Triple => BondOrder::Triple,
            BondSymbol::Aromatic => BondOrder::Aromatic,
        }
    }
}

struct OpenRing {
    atom: usize,
    symbol: Option<BondSymbol>,
    offset: usize,
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    atoms: Vec<Atom>,
    atom_offsets: Vec<usize>,
    bracketed: Vec<bool>,
    bonds: Vec<Bond>,
    prev: Option<usize>,
    pending: Option<(BondSymbol, usize)>,
    branches: Vec<(usize, usize)>,
    rings: BTreeMap<u32, OpenRing>,
}

/// Parse a single-component SMILES string into a molecular graph.
pub fn parse_molecule(smiles: &str) -> Result<MolecularGraph, SmilesError> {
    if smiles.is_empty() {
        return Err(SmilesError::Empty);
    }
    let mut p = Parser {
        src: smiles.as_bytes(),
        pos: 0,
        atoms: Vec::new(),
        atom_offsets: Vec::new(),
        bracketed: Vec::new(),
        bonds: Vec::new(),
        prev: None,
        pending: None,
        branches: Vec::new(),
        rings: BTreeMap::new(),
    };
    p.run()?;
    p.finish()
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn unknown(&self, offset: usize) -> SmilesError {
        let found = std::str::from_utf8(&self.src[offset..])
            .ok()
            .and_then(|s| s.chars().next())
            .map_or_else(|| "end of input".to_string(), |c| c.to_string());
        SmilesError::UnknownToken { offset, found }
    }

    fn run(&mut self) -> Result<(), SmilesError> {
        while let Some(c) = self.peek() {
            let offset = self.pos;
            match c {
                b'(' => {
                    if self.prev.is_none() || self.pending.is_some() {
                        return Err(self.unknown(offset));
                    }
                    self.branches.push((self.prev.unwrap(), offset));
                    self.pos += 1;
                    if self.peek() == Some(b')') {
                        return Err(self.unknown(self.pos));
                    }
                }
                b')' => {
                    let (atom, _) = self
                        .branches
                        .pop()
                        .ok_or(SmilesError::UnbalancedParen { offset })?;
                    if self.pending.is_some() {
                        return Err(SmilesError::InvalidBond { offset });
                    }
                    self.prev = Some(atom);
                    self.pos += 1;
                }
                b'0'..=b'9' | b'%' => self.ring_closure()?,
                b'[' => self.bracket_atom()?,
                b'.' => return Err(self.unknown(offset)),
                _ => {
                    if let Some(sym) = BondSymbol::from_byte(c) {
                        if self.prev.is_none() || self.pending.is_some() {
                            return Err(SmilesError::InvalidBond { offset });
                        }
                        self.pending = Some((sym, offset));
                        self.pos += 1;
                    } else {
                        self.organic_atom()?;
                    }
                }
            }
        }
        Ok(())
    }

    fn organic_atom(&mut self) -> Result<(), SmilesError> {
        let offset = self.pos;
        let rest = &self.src[self.pos..];
        let (element, aromatic, len) = match rest {
            [b'C', b'l', ..] => (Element::CL, false, 2),
            [b'B', b'r', ..] => (Element::BR, false, 2),
            [b'B', ..] => (Element::B, false, 1),
            [b'C', ..] => (Element::C, false, 1),
            [b'N', ..] => (Element::N, false, 1),
            [b'O', ..] => (Element::O, false, 1),
            [b'P', ..] => (Element::P, false, 1),
            [b'S', ..] => (Element::S, false, 1),
            [b'F', ..] => (Element::F, false, 1),
            [b'I', ..] => (Element::I, false, 1),
            [b'b', ..] => (Element::B, true, 1),
            [b'c', ..] => (Element::C, true, 1),
            [b'n', ..] => (Element::N, true, 1),
            [b'o', ..] => (Element::O, true, 1),
            [b'p', ..] => (Element::P, true, 1),
            [b's', ..] => (Element::S, true, 1),
            _ => return Err(self.unknown(offset)),
        };
        self.pos += len;
        let mut atom = Atom::new(element);
        atom.aromatic = aromatic;
        self.push_atom(atom, offset, false)
    }

    fn bracket_atom(&mut self) -> Result<(), SmilesError> {
        let open = self.pos;
        self.pos += 1;
        let isotope = self.read_number(5)?.map(|v| v as u16);

        let sym_offset = self.pos;
        let (element, aromatic) = self.bracket_symbol().ok_or_else(|| self.unknown(sym_offset))?;

        // Chirality: @ or @@, discarded.
        if self.peek() == Some(b'@') {
            self.pos += 1;
            if self.peek() == Some(b'@') {
                self.pos += 1;
            }
        }

        let mut explicit_h = 0u8;
        if self.peek() == Some(b'H') {
            self.pos += 1;
            let h_offset = self.pos;
            explicit_h = match self.read_number(1)? {
                Some(n) if n > 8 => return Err(self.unknown(h_offset)),
                Some(n) => n as u8,
                None => 1,
            };
        }

        let mut charge: i32 = 0;
        if let Some(sign @ (b'+' | b'-')) = self.peek() {
            let unit = if sign == b'+' { 1 } else { -1 };
            self.pos += 1;
            if let Some(n) = self.read_number(2)? {
                charge = unit * n as i32;
            } else {
                charge = unit;
                while self.peek() == Some(sign) {
                    charge += unit;
                    self.pos += 1;
                }
            }
            if !(-15..=15).contains(&charge) {
                return Err(self.unknown(self.pos - 1));
            }
        }

        let mut atom_map = None;
        if self.peek() == Some(b':') {
            self.pos += 1;
            let at = self.pos;
            atom_map = Some(self.read_number(9)?.ok_or_else(|| self.unknown(at))?);
        }

        if self.peek() != Some(b']') {
            return Err(self.unknown(self.pos));
        }
        self.pos += 1;

        let atom = Atom {
            element,
            formal_charge: charge as i8,
            aromatic,
            explicit_h,
            isotope,
            atom_map,
        };
        self.push_atom(atom, open, true)
    }

    fn bracket_symbol(&mut self) -> Option<(Element, bool)> {
        let rest = &self.src[self.pos..];
        match rest.first().copied()? {
            c if c.is_ascii_uppercase() => {
                if let Some(&l) = rest.get(1) {
                    if l.is_ascii_lowercase() {
                        let two = std::str::from_utf8(&rest[..2]).ok()?;
                        if let Some(e) = Element::from_symbol(two) {
                            self.pos += 2;
                            return Some((e, false));
                        }
                    }
                }
                let e = Element::from_symbol(std::str::from_utf8(&rest[..1]).ok()?)?;
                self.pos += 1;
                Some((e, false))
            }
            c if c.is_ascii_lowercase() => {
                for two in ["se", "as"] {
                    if rest.starts_with(two.as_bytes()) {
                        self.pos += 2;
                        let mut sym = two.to_string();
                        sym[..1].make_ascii_uppercase();
                        return Some((Element::from_symbol(&sym)?, true));
                    }
                }
                let e = match c {
                    b'b' => Element::B,
                    b'c' => Element::C,
                    b'n' => Element::N,
                    b'o' => Element::O,
                    b'p' => Element::P,
                    b's' => Element::S,
                    _ => return None,
                };
                self.pos += 1;
                Some((e, true))
            }
            _ => None,
        }
    }

    /// Reads up to `max_digits` decimal digits.
    fn read_number(&mut self, max_digits: usize) -> Result<Option<u32>, SmilesError> {
        let start = self.pos;
        while self.pos - start < max_digits && matches!(self.peek(), Some(b'0'..=b'9')) {
            self.pos += 1;
        }
        if self.pos == start {
            return Ok(None);
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii digits");
        text.parse().map(Some).map_err(|_| self.unknown(start))
    }

    fn push_atom(&mut self, atom: Atom, offset: usize, bracketed: bool) -> Result<(), SmilesError> {
        let idx = self.atoms.len();
        self.atoms.push(atom);
        self.atom_offsets.push(offset);
        self.bracketed.push(bracketed);
        if let Some(prev) = self.prev {
            let sym = self.pending.take().map(|(s, _)| s);
            self.add_bond(prev, idx, sym, offset)?;
        }
        self.prev = Some(idx);
        Ok(())
    }

    fn add_bond(
        &mut self,
        a: usize,
        b: usize,
        sym: Option<BondSymbol>,
        offset: usize,
    ) -> Result<(), SmilesError> {
        if a == b
            || self
                .bonds
                .iter()
                .any(|x| (x.a == a && x.b == b) || (x.a == b && x.b == a))
        {
            return Err(SmilesError::InvalidBond { offset });
        }
        let both_aromatic = self.atoms[a].aromatic && self.atoms[b].aromatic;
        let order = match sym {
            Some(BondSymbol::Aromatic) if !both_aromatic => {
                return Err(SmilesError::InvalidBond { offset })
            }
            Some(s) => s.order(),
            None if both_aromatic => BondOrder::Aromatic,
            None => BondOrder::Single,
        };
        self.bonds.push(Bond { a, b, order });
        Ok(())
    }

    fn ring_closure(&mut self) -> Result<(), SmilesError> {
        let offset = self.pos;
        let Some(atom) = self.prev else {
            return Err(self.unknown(offset));
        };
        let ring = if self.peek() == Some(b'%') {
            self.pos += 1;
            let digits = &self.src[self.pos..];
            if digits.len() < 2 || !digits[0].is_ascii_digit() || !digits[1].is_ascii_digit() {
                return Err(self.unknown(offset));
            }
            self.pos += 2;
            u32::from(digits[0] - b'0') * 10 + u32::from(digits[1] - b'0')
        } else {
            let d = u32::from(self.src[self.pos] - b'0');
            self.pos += 1;
            d
        };
        let sym = self.pending.take().map(|(s, _)| s);
        match self.rings.remove(&ring) {
            Some(open) => {
                let symbol = match (open.symbol, sym) {
                    (Some(x), Some(y)) if x != y => {
                        return Err(SmilesError::InvalidBond { offset })
                    }
                    (x, y) => x.or(y),
                };
                self.add_bond(open.atom, atom, symbol, offset)
            }
            None => {
                self.rings.insert(ring, OpenRing { atom, symbol: sym, offset });
                Ok(())
            }
        }
    }

    fn finish(mut self) -> Result<MolecularGraph, SmilesError> {
        if let Some((_, offset)) = self.pending {
            return Err(SmilesError::InvalidBond { offset });
        }
        if let Some(&(_, offset)) = self.branches.last() {
            return Err(SmilesError::UnbalancedParen { offset });
        }
        if let Some((&ring, open)) = self.rings.iter().next() {
            return Err(SmilesError::UnbalancedRing { offset: open.offset, ring });
        }
        if self.atoms.is_empty() {
            return Err(SmilesError::Empty);
        }
        let mut graph = MolecularGraph {
            atoms: std::mem::take(&mut self.atoms),
            bonds: std::mem::take(&mut self.bonds),
        };
        for i in 0..graph.atoms.len() {
            if self.bracketed[i] {
                check_bracket_valence(&graph, i).map_err(|_| SmilesError::ValenceUnderflow {
                    offset: self.atom_offsets[i],
                })?;
            } else {
                graph.atoms[i].explicit_h = graph.implied_hydrogens(i).unwrap_or(0);
            }
        }
        Ok(graph)
    }
}

fn check_bracket_valence(graph: &MolecularGraph, atom: usize) -> Result<(), ()> {
    let a = &graph.atoms[atom];
    let Some(&max) = a.element.default_valences().last() else {
        return Ok(());
    };
    let bonded: u32 = graph
        .bonds
        .iter()
        .filter(|b| b.touches(atom))
        .map(|b| b.order.valence_contribution())
        .sum();
    let allowed = u32::from(max) + a.formal_charge.unsigned_abs() as u32;
    if bonded + u32::from(a.explicit_h) > allowed {
        Err(())
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn methane() {
        let g = parse_molecule("C").unwrap();
        assert_eq!(g.atoms.len(), 1);
        assert!(g.bonds.is_empty());
        let a = &g.atoms[0];
        assert_eq!((a.element, a.formal_charge, a.aromatic, a.explicit_h), (Element::C, 0, false, 4));
    }

    #[test]
    fn chloride_anion() {
        let g = parse_molecule("[Cl-]").unwrap();
        let a = &g.atoms[0];
        assert_eq!((a.element, a.formal_charge, a.explicit_h), (Element::CL, -1, 0));
    }

    #[test]
    fn benzene_ring() {
        let g = parse_molecule("c1ccccc1").unwrap();
        assert_eq!(g.atoms.len(), 6);
        assert_eq!(g.bonds.len(), 6);
        assert!(g.atoms.iter().all(|a| a.aromatic && a.explicit_h == 1));
        assert!(g.bonds.iter().all(|b| b.order == BondOrder::Aromatic));
        assert!((0..6).all(|i| g.degree(i) == 2));
        assert_eq!(g.components().len(), 1);
    }

    #[test]
    fn implicit_hydrogens_follow_valence_table() {
        let g = parse_molecule("O=C(O)c1ccccc1").unwrap();
        let h: Vec<u8> = g.atoms.iter().map(|a| a.explicit_h).collect();
        assert_eq!(h, vec![0, 0, 1, 0, 1, 1, 1, 1, 1]);
        // Hypervalent sulfur picks the next valence; overfull atoms get zero.
        let g = parse_molecule("CS(=O)(=O)C").unwrap();
        assert_eq!(g.atoms[1].explicit_h, 0);
        let g = parse_molecule("OP(O)(O)=O").unwrap();
        assert_eq!(g.atoms[1].explicit_h, 0);
        let g = parse_molecule("FC(F)(F)(F)F").unwrap();
        assert_eq!(g.atoms[1].explicit_h, 0);
    }

    #[test]
    fn aromatic_heteroatoms() {
        let g = parse_molecule("c1ccsc1").unwrap();
        assert_eq!(g.atoms[3].explicit_h, 0);
        let g = parse_molecule("c1cc[nH]c1").unwrap();
        assert_eq!(g.atoms[3].explicit_h, 1);
        let g = parse_molecule("c1ccncc1").unwrap();
        assert_eq!(g.atoms[3].explicit_h, 0);
    }

    #[test]
    fn bracket_atom_fields() {
        let g = parse_molecule("[13CH3:7]").unwrap();
        let a = &g.atoms[0];
        assert_eq!(a.isotope, Some(13));
        assert_eq!(a.explicit_h, 3);
        assert_eq!(a.atom_map, Some(7));
        let g = parse_molecule("[Pd+2]").unwrap();
        assert_eq!(g.atoms[0].formal_charge, 2);
        let g = parse_molecule("[O--]").unwrap();
        assert_eq!(g.atoms[0].formal_charge, -2);
        let g = parse_molecule("[C@@H](F)(Cl)Br").unwrap();
        assert_eq!(g.atoms[0].explicit_h, 1);
        assert_eq!(g.bonds.len(), 3);
    }

    #[test]
    fn stereo_bonds_are_single() {
        let g = parse_molecule("F/C=C/F").unwrap();
        let orders: Vec<_> = g.bonds.iter().map(|b| b.order).collect();
        assert_eq!(orders, vec![BondOrder::Single, BondOrder::Double, BondOrder::Single]);
    }

    #[test]
    fn percent_ring_closures() {
        let g = parse_molecule("C%12CCCCC%12").unwrap();
        assert_eq!(g.bonds.len(), 6);
        assert!(g.bonds.iter().all(|b| b.order == BondOrder::Single));
    }

    #[test]
    fn ring_bond_symbol_on_either_end() {
        let g = parse_molecule("C=1CCCC1").unwrap();
        assert_eq!(g.bonds.last().unwrap().order, BondOrder::Double);
        let g = parse_molecule("C1CCCC=1").unwrap();
        assert_eq!(g.bonds.last().unwrap().order, BondOrder::Double);
        assert!(matches!(
            parse_molecule("C=1CCCC#1"),
            Err(SmilesError::InvalidBond { .. })
        ));
    }

    #[test]
    fn errors_carry_offsets() {
        assert_eq!(
            parse_molecule("C1CC"),
            Err(SmilesError::UnbalancedRing { offset: 1, ring: 1 })
        );
        assert_eq!(parse_molecule("CC(C"), Err(SmilesError::UnbalancedParen { offset: 2 }));
        assert_eq!(parse_molecule("CC)C"), Err(SmilesError::UnbalancedParen { offset: 2 }));
        assert!(matches!(
            parse_molecule("CXC"),
            Err(SmilesError::UnknownToken { offset: 1, .. })
        ));
        assert_eq!(
            parse_molecule("C[CH4]"),
            Err(SmilesError::ValenceUnderflow { offset: 1 })
        );
        assert!(matches!(parse_molecule("C.C"), Err(SmilesError::UnknownToken { offset: 1, .. })));
        assert_eq!(parse_molecule(""), Err(SmilesError::Empty));
        assert!(matches!(parse_molecule("C="), Err(SmilesError::InvalidBond { offset: 1 })));
        assert!(matches!(parse_molecule("C11"), Err(SmilesError::InvalidBond { .. })));
    }

    #[test]
    fn charged_nitro_group_is_within_valence() {
        let g = parse_molecule("O=[N+]([O-])c1ccccc1").unwrap();
        assert_eq!(g.atoms[1].formal_charge, 1);
        assert_eq!(g.atoms[2].formal_charge, -1);
    }
}
