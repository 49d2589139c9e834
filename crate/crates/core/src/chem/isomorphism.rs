//! Graph isomorphism for molecules by color refinement with
//! individualization and backtracking. Atoms match on every stored feature
//! except the atom-map number; bonds match on order.

use std::collections::HashMap;

use super::graph::{BondOrder, MolecularGraph};

type Signature = (u32, Vec<(u8, u32)>);

fn bond_code(order: BondOrder) -> u8 {
    match order {
        BondOrder::Single => 1,
        BondOrder::Double => 2,
        BondOrder::Triple => 3,
        BondOrder::Aromatic => 4,
    }
}

struct Side<'a> {
    adj: Vec<Vec<(usize, u8)>>,
    graph: &'a MolecularGraph,
}

impl<'a> Side<'a> {
    fn new(graph: &'a MolecularGraph) -> Self {
        let mut adj = vec![Vec::new(); graph.atoms.len()];
        for b in &graph.bonds {
            adj[b.a].push((b.b, bond_code(b.order)));
            adj[b.b].push((b.a, bond_code(b.order)));
        }
        Side { adj, graph }
    }
}

pub fn is_isomorphic(g1: &MolecularGraph, g2: &MolecularGraph) -> bool {
    if g1.atoms.len() != g2.atoms.len() || g1.bonds.len() != g2.bonds.len() {
        return false;
    }
    let s1 = Side::new(g1);
    let s2 = Side::new(g2);

    let mut ids: HashMap<_, u32> = HashMap::new();
    let mut initial = |g: &MolecularGraph| -> Vec<u32> {
        g.atoms
            .iter()
            .map(|a| {
                let key = (a.element, a.formal_charge, a.aromatic, a.explicit_h, a.isotope);
                let next = ids.len() as u32;
                *ids.entry(key).or_insert(next)
            })
            .collect()
    };
    let c1 = initial(g1);
    let c2 = initial(g2);
    search(&s1, &s2, c1, c2)
}

/// Refine both colorings jointly until stable. Returns false when the color
/// histograms diverge.
fn refine(s1: &Side, s2: &Side, c1: &mut Vec<u32>, c2: &mut Vec<u32>) -> bool {
    let mut classes = count_classes(c1, c2);
    loop {
        let sig = |side: &Side, colors: &[u32], v: usize| -> Signature {
            let mut nb: Vec<(u8, u32)> = side.adj[v].iter().map(|&(w, o)| (o, colors[w])).collect();
            nb.sort_unstable();
            (colors[v], nb)
        };
        let sig1: Vec<Signature> = (0..c1.len()).map(|v| sig(s1, c1, v)).collect();
        let sig2: Vec<Signature> = (0..c2.len()).map(|v| sig(s2, c2, v)).collect();
        let mut all: Vec<&Signature> = sig1.iter().chain(sig2.iter()).collect();
        all.sort();
        all.dedup();
        let index: HashMap<&Signature, u32> =
            all.iter().enumerate().map(|(i, s)| (*s, i as u32)).collect();
        *c1 = sig1.iter().map(|s| index[s]).collect();
        *c2 = sig2.iter().map(|s| index[s]).collect();
        if !same_histogram(c1, c2) {
            return false;
        }
        let now = count_classes(c1, c2);
        if now == classes {
            return true;
        }
        classes = now;
    }
}

fn count_classes(c1: &[u32], c2: &[u32]) -> usize {
    let mut all: Vec<u32> = c1.iter().chain(c2).copied().collect();
    all.sort_unstable();
    all.dedup();
    all.len()
}

fn same_histogram(c1: &[u32], c2: &[u32]) -> bool {
    let mut a = c1.to_vec();
    let mut b = c2.to_vec();
    a.sort_unstable();
    b.sort_unstable();
    a == b
}

fn search(s1: &Side, s2: &Side, mut c1: Vec<u32>, mut c2: Vec<u32>) -> bool {
    if !refine(s1, s2, &mut c1, &mut c2) {
        return false;
    }
    let mut sizes: HashMap<u32, usize> = HashMap::new();
    for &c in &c1 {
        *sizes.entry(c).or_default() += 1;
    }
    let target = sizes
        .iter()
        .filter(|(_, &n)| n > 1)
        .min_by_key(|(&c, &n)| (n, c))
        .map(|(&c, _)| c);
    let Some(color) = target else {
        return verify(s1, s2, &c1, &c2);
    };
    let fresh = c1.iter().chain(&c2).copied().max().unwrap_or(0) + 1;
    let x = c1.iter().position(|&c| c == color).expect("class member");
    for y in (0..c2.len()).filter(|&y| c2[y] == color) {
        let mut n1 = c1.clone();
        let mut n2 = c2.clone();
        n1[x] = fresh;
        n2[y] = fresh;
        if search(s1, s2, n1, n2) {
            return true;
        }
    }
    false
}

/// With a discrete coloring the mapping is forced; check it bond by bond.
fn verify(s1: &Side, s2: &Side, c1: &[u32], c2: &[u32]) -> bool {
    let mut by_color = HashMap::new();
    for (v, &c) in c2.iter().enumerate() {
        by_color.insert(c, v);
    }
    let map: Vec<usize> = c1.iter().map(|c| by_color[c]).collect();
    for (v, &w) in map.iter().enumerate() {
        let a = &s1.graph.atoms[v];
        let b = &s2.graph.atoms[w];
        if (a.element, a.formal_charge, a.aromatic, a.explicit_h, a.isotope)
            != (b.element, b.formal_charge, b.aromatic, b.explicit_h, b.isotope)
        {
            return false;
        }
        let mut n1: Vec<(usize, u8)> = s1.adj[v].iter().map(|&(u, o)| (map[u], o)).collect();
        let mut n2 = s2.adj[w].clone();
        n1.sort_unstable();
        n2.sort_unstable();
        if n1 != n2 {
            return false;
        }
    }
    true
}
