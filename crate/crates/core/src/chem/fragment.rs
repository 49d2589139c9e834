use thiserror::Error;

use super::graph::{Bond, BondOrder, MolecularGraph};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FragmentError {
    #[error("bond {0} lies in a ring")]
    BondInCycle(usize),
    #[error("bond {0} is not a single bond")]
    NotSingleOrder(usize),
    #[error("bond index {index} out of range ({count} bonds)")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("attachment atom {atom} has no hydrogen to give up")]
    ValenceUnderflow { atom: usize },
    #[error("product has no acyclic single bond to cut")]
    NoCuttableBond,
}

/// The two pieces left after removing one acyclic single bond.
///
/// `first` holds the bond's first endpoint, `second` the other; atoms keep
/// their relative order from the source graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CutResult {
    pub first: MolecularGraph,
    pub second: MolecularGraph,
    pub attach_first: usize,
    pub attach_second: usize,
}

/// Indices of single bonds whose removal disconnects the graph.
pub fn cuttable_bonds(graph: &MolecularGraph) -> Vec<usize> {
    (0..graph.bonds.len())
        .filter(|&i| graph.bonds[i].order == BondOrder::Single && !in_cycle(graph, i))
        .collect()
}

fn side_of(graph: &MolecularGraph, skip: usize, start: usize) -> Vec<usize> {
    let n = graph.atoms.len();
    let mut adj = vec![Vec::new(); n];
    for (i, b) in graph.bonds.iter().enumerate() {
        if i != skip {
            adj[b.a].push(b.b);
            adj[b.b].push(b.a);
        }
    }
    let mut seen = vec![false; n];
    seen[start] = true;
    let mut stack = vec![start];
    while let Some(v) = stack.pop() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    (0..n).filter(|&i| seen[i]).collect()
}

fn in_cycle(graph: &MolecularGraph, bond: usize) -> bool {
    let b = graph.bonds[bond];
    side_of(graph, bond, b.a).binary_search(&b.b).is_ok()
}

pub fn cut_acyclic_bond(graph: &MolecularGraph, bond_index: usize) -> Result<CutResult, FragmentError> {
    let bond = *graph.bonds.get(bond_index).ok_or(FragmentError::IndexOutOfRange {
        index: bond_index,
        count: graph.bonds.len(),
    })?;
    let first_atoms = side_of(graph, bond_index, bond.a);
    if first_atoms.binary_search(&bond.b).is_ok() {
        return Err(FragmentError::BondInCycle(bond_index));
    }
    if bond.order != BondOrder::Single {
        return Err(FragmentError::NotSingleOrder(bond_index));
    }
    let second_atoms = side_of(graph, bond_index, bond.b);

    let mut first = graph.induced(&first_atoms);
    let mut second = graph.induced(&second_atoms);
    let attach_first = first_atoms.binary_search(&bond.a).expect("endpoint in its side");
    let attach_second = second_atoms.binary_search(&bond.b).expect("endpoint in its side");
    first.atoms[attach_first].explicit_h += 1;
    second.atoms[attach_second].explicit_h += 1;
    Ok(CutResult { first, second, attach_first, attach_second })
}

fn join(
    left: &MolecularGraph,
    left_attach: usize,
    right: &MolecularGraph,
    right_attach: usize,
) -> Result<MolecularGraph, FragmentError> {
    if left.atoms[left_attach].explicit_h == 0 {
        return Err(FragmentError::ValenceUnderflow { atom: left_attach });
    }
    let offset = left.atoms.len();
    if right.atoms[right_attach].explicit_h == 0 {
        return Err(FragmentError::ValenceUnderflow { atom: offset + right_attach });
    }
    let mut out = left.clone();
    out.atoms.extend(right.atoms.iter().cloned());
    out.bonds.extend(
        right
            .bonds
            .iter()
            .map(|b| Bond { a: b.a + offset, b: b.b + offset, order: b.order }),
    );
    out.atoms[left_attach].explicit_h -= 1;
    out.atoms[offset + right_attach].explicit_h -= 1;
    out.bonds.push(Bond { a: left_attach, b: offset + right_attach, order: BondOrder::Single });
    Ok(out)
}

/// Swap fragments between two cuts: returns `first(a) + second(b)` and
/// `first(b) + second(a)`, each joined by a new single bond between the
/// recorded attachment atoms.
pub fn exchange_fragments(
    a: &CutResult,
    b: &CutResult,
) -> Result<(MolecularGraph, MolecularGraph), FragmentError> {
    let x = join(&a.first, a.attach_first, &b.second, b.attach_second)?;
    let y = join(&b.first, b.attach_first, &a.second, a.attach_second)?;
    Ok((x, y))
}
