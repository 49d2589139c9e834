use crate::autodiff::{Scalar, Tensor};
use crate::chem::MolecularGraph;

const ELEMENT_SLOTS: usize = 11;
const DEGREE_SLOTS: usize = 6;
const CHARGE_SLOTS: usize = 5;
const H_SLOTS: usize = 5;

/// element (11) + degree 0–5 (6) + charge −2..+2 (5) + aromatic (1) + H count 0–4 (5).
pub const ATOM_FEATURE_DIM: usize = ELEMENT_SLOTS + DEGREE_SLOTS + CHARGE_SLOTS + 1 + H_SLOTS;

/// One row of one-hot blocks per atom; out-of-range degree, charge and H
/// counts are clipped into the end slots.
pub fn featurize_atoms<T: Scalar>(graph: &MolecularGraph) -> Tensor<T> {
    let n = graph.atoms.len();
    let mut data = vec![T::zero(); n * ATOM_FEATURE_DIM];
    for (i, atom) in graph.atoms.iter().enumerate() {
        let row = &mut data[i * ATOM_FEATURE_DIM..(i + 1) * ATOM_FEATURE_DIM];
        let mut base = 0;
        row[base + atom.element.vocab().index()] = T::one();
        base += ELEMENT_SLOTS;
        row[base + graph.degree(i).min(DEGREE_SLOTS - 1)] = T::one();
        base += DEGREE_SLOTS;
        row[base + (atom.formal_charge.clamp(-2, 2) + 2) as usize] = T::one();
        base += CHARGE_SLOTS;
        if atom.aromatic {
            row[base] = T::one();
        }
        base += 1;
        row[base + usize::from(atom.explicit_h).min(H_SLOTS - 1)] = T::one();
    }
    Tensor::matrix(n, ATOM_FEATURE_DIM, data).expect("graph has at least one atom")
}

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` with bond orders ignored.
pub fn normalize_adjacency<T: Scalar>(graph: &MolecularGraph) -> Tensor<T> {
    let n = graph.atoms.len();
    let mut a = vec![0.0f64; n * n];
    for i in 0..n {
        a[i * n + i] = 1.0;
    }
    for b in &graph.bonds {
        a[b.a * n + b.b] = 1.0;
        a[b.b * n + b.a] = 1.0;
    }
    let inv_sqrt: Vec<f64> = (0..n).map(|i| 1.0 / a[i * n..(i + 1) * n].iter().sum::<f64>().sqrt()).collect();
    let data = (0..n * n).map(|k| T::from_f64(a[k] * inv_sqrt[k / n] * inv_sqrt[k % n])).collect();
    Tensor::matrix(n, n, data).expect("graph has at least one atom")
}

/// Disjoint union of several molecules: stacked features and a
/// block-diagonal normalized adjacency. Returns the atom offset of every
/// molecule (plus the total at the end).
pub(crate) fn batch_molecules<T: Scalar>(mols: &[MolecularGraph]) -> (Tensor<T>, Tensor<T>, Vec<usize>) {
    let mut offsets = vec![0];
    for m in mols {
        offsets.push(offsets.last().unwrap() + m.atoms.len());
    }
    let total = *offsets.last().unwrap();
    let mut feats = Vec::with_capacity(total * ATOM_FEATURE_DIM);
    let mut adj = vec![T::zero(); total * total];
    for (k, m) in mols.iter().enumerate() {
        feats.extend_from_slice(featurize_atoms::<T>(m).data());
        let a = normalize_adjacency::<T>(m);
        let (o, n) = (offsets[k], m.atoms.len());
        for i in 0..n {
            adj[(o + i) * total + o..(o + i) * total + o + n].copy_from_slice(a.row_slice(i));
        }
    }
    (
        Tensor::matrix(total, ATOM_FEATURE_DIM, feats).expect("non-empty side"),
        Tensor::matrix(total, total, adj).expect("non-empty side"),
        offsets,
    )
}
