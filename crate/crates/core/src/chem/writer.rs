use std::collections::HashMap;
use std::fmt::Write as _;

use super::graph::{BondOrder, MolecularGraph};

/// Serialize a graph to SMILES by depth-first traversal from atom 0.
pub fn write_smiles(graph: &MolecularGraph) -> String {
    write_smiles_with_order(graph).0
}

/// Like [`write_smiles`], also returning the emission order: entry `i` is the
/// input atom index that becomes atom `i` when the output is parsed again.
///
/// Disconnected inputs are written component by component, joined by `.`.
pub fn write_smiles_with_order(graph: &MolecularGraph) -> (String, Vec<usize>) {
    let n = graph.atoms.len();
    let adj = graph.adjacency();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut out = String::new();

    for root in 0..n {
        if visited[root] {
            continue;
        }
        if !out.is_empty() {
            out.push('.');
        }
        let plan = plan_component(graph, &adj, root, &mut visited);
        emit(graph, &plan, root, &mut out, &mut order);
    }
    (out, order)
}

struct Plan {
    children: Vec<Vec<usize>>,
    /// Ring-closure partners per atom, in the order they are written.
    closures: Vec<Vec<usize>>,
}

fn plan_component(
    graph: &MolecularGraph,
    adj: &[Vec<usize>],
    root: usize,
    visited: &mut [bool],
) -> Plan {
    let n = graph.atoms.len();
    let mut children = vec![Vec::new(); n];
    let mut closures: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut rank = vec![usize::MAX; n];
    let mut next_rank = 0;

    // Iterative DFS; each frame is (atom, parent, next neighbor position).
    let mut stack = vec![(root, usize::MAX, 0usize)];
    visited[root] = true;
    rank[root] = next_rank;
    next_rank += 1;
    while let Some(frame) = stack.last_mut() {
        let (v, parent, pos) = *frame;
        if pos == adj[v].len() {
            stack.pop();
            continue;
        }
        frame.2 += 1;
        let w = adj[v][pos];
        if w == parent {
            continue;
        }
        if visited[w] {
            // Back edge to an ancestor still open on the stack: ring closure.
            if rank[w] < rank[v] && !closures[w].contains(&v) {
                closures[w].push(v);
                closures[v].push(w);
            }
            continue;
        }
        visited[w] = true;
        rank[w] = next_rank;
        next_rank += 1;
        children[v].push(w);
        stack.push((w, v, 0));
    }
    Plan { children, closures }
}

struct Emitter<'a> {
    graph: &'a MolecularGraph,
    plan: &'a Plan,
    ring_digit: HashMap<(usize, usize), u32>,
    free: [bool; 100],
}

impl Emitter<'_> {
    fn visit(&mut self, v: usize, out: &mut String, order: &mut Vec<usize>) {
        write_atom(self.graph, v, out);
        order.push(v);

        for &w in &self.plan.closures[v] {
            let key = (v.min(w), v.max(w));
            if let Some(d) = self.ring_digit.remove(&key) {
                self.free[d as usize] = true;
                write_ring_digit(out, d);
            } else {
                let d = (1..100).find(|&d| self.free[d]).expect("more than 99 open rings");
                self.free[d] = false;
                self.ring_digit.insert(key, d as u32);
                out.push_str(bond_symbol(self.graph, v, w));
                write_ring_digit(out, d as u32);
            }
        }

        let kids = &self.plan.children[v];
        for (i, &w) in kids.iter().enumerate() {
            let branch = i + 1 < kids.len();
            if branch {
                out.push('(');
            }
            out.push_str(bond_symbol(self.graph, v, w));
            self.visit(w, out, order);
            if branch {
                out.push(')');
            }
        }
    }
}

fn emit(graph: &MolecularGraph, plan: &Plan, root: usize, out: &mut String, order: &mut Vec<usize>) {
    let mut free = [true; 100];
    free[0] = false;
    let mut emitter = Emitter { graph, plan, ring_digit: HashMap::new(), free };
    emitter.visit(root, out, order);
}

fn bond_symbol(graph: &MolecularGraph, a: usize, b: usize) -> &'static str {
    let idx = graph.bond_between(a, b).expect("bond present");
    let both_aromatic = graph.atoms[a].aromatic && graph.atoms[b].aromatic;
    match graph.bonds[idx].order {
        BondOrder::Single if both_aromatic => "-",
        BondOrder::Single => "",
        BondOrder::Double => "=",
        BondOrder::Triple => "#",
        BondOrder::Aromatic if both_aromatic => "",
        BondOrder::Aromatic => ":",
    }
}

fn write_ring_digit(out: &mut String, d: u32) {
    if d < 10 {
        let _ = write!(out, "{d}");
    } else {
        let _ = write!(out, "%{d:02}");
    }
}

fn write_atom(graph: &MolecularGraph, v: usize, out: &mut String) {
    let atom = &graph.atoms[v];
    let bare = atom.element.is_organic_subset()
        && atom.formal_charge == 0
        && atom.isotope.is_none()
        && atom.atom_map.is_none()
        && (!atom.aromatic || atom.element.has_bare_aromatic_form())
        && graph.implied_hydrogens(v) == Some(atom.explicit_h);
    let symbol = atom.element.symbol();
    if bare {
        if atom.aromatic {
            out.push_str(&symbol.to_ascii_lowercase());
        } else {
            out.push_str(symbol);
        }
        return;
    }
    out.push('[');
    if let Some(iso) = atom.isotope {
        let _ = write!(out, "{iso}");
    }
    if atom.aromatic {
        out.push_str(&symbol.to_ascii_lowercase());
    } else {
        out.push_str(symbol);
    }
    match atom.explicit_h {
        0 => {}
        1 => out.push('H'),
        h => {
            let _ = write!(out, "H{h}");
        }
    }
    match atom.formal_charge {
        0 => {}
        1 => out.push('+'),
        -1 => out.push('-'),
        c if c > 0 => {
            let _ = write!(out, "+{c}");
        }
        c => {
            let _ = write!(out, "-{}", -c);
        }
    }
    if let Some(m) = atom.atom_map {
        let _ = write!(out, ":{m}");
    }
    out.push(']');
}
