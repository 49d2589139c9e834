use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::distance::DistanceMatrix;
use super::ClusterError;

/// One agglomeration step. Node ids follow the usual linkage-matrix
/// convention: leaves are `0..n`, merge `t` creates node `n + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub n_leaves: usize,
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    pub fn validate(&self) -> Result<(), ClusterError> {
        let n = self.n_leaves;
        if n == 0 || self.merges.len() != n - 1 {
            return Err(ClusterError::BadTree(format!("{} merges for {n} leaves", self.merges.len())));
        }
        let mut used = vec![false; 2 * n - 1];
        let mut size = vec![1usize; 2 * n - 1];
        for (t, m) in self.merges.iter().enumerate() {
            let id = n + t;
            for c in [m.left, m.right] {
                if c >= id || used[c] {
                    return Err(ClusterError::BadTree(format!("merge {t} reuses or forward-references node {c}")));
                }
                used[c] = true;
            }
            if m.left == m.right {
                return Err(ClusterError::BadTree(format!("merge {t} joins node {} with itself", m.left)));
            }
            size[id] = size[m.left] + size[m.right];
            if m.size != size[id] {
                return Err(ClusterError::BadTree(format!("merge {t} records size {} not {}", m.size, size[id])));
            }
        }
        Ok(())
    }

    pub fn root(&self) -> usize {
        2 * self.n_leaves - 2
    }

    /// Children of an internal node, `None` for a leaf.
    pub fn children(&self, node: usize) -> Option<(usize, usize)> {
        (node >= self.n_leaves).then(|| {
            let m = &self.merges[node - self.n_leaves];
            (m.left, m.right)
        })
    }

    /// Leaves under `node`, left subtree first.
    pub fn leaves(&self, node: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(v) = stack.pop() {
            match self.children(v) {
                None => out.push(v),
                Some((l, r)) => {
                    stack.push(r);
                    stack.push(l);
                }
            }
        }
        out
    }

    /// Unflipped in-order traversal.
    pub fn leaf_order(&self) -> Vec<usize> {
        self.leaves(self.root())
    }

    /// Rows of `[left, right, height, size]`.
    pub fn linkage_matrix(&self) -> Vec<[f64; 4]> {
        self.merges.iter().map(|m| [m.left as f64, m.right as f64, m.height, m.size as f64]).collect()
    }
}

/// UPGMA via the Lance-Williams update. Among equally close pairs the one
/// with the lexicographically smallest `(i, j)` node ids merges first.
pub fn average_linkage_tree(dm: &DistanceMatrix) -> Result<Dendrogram, ClusterError> {
    let n = dm.n();
    if n < 2 {
        return Err(ClusterError::TooFewItems { needed: 2, found: n });
    }
    let total = 2 * n - 1;
    let mut d = vec![f64::NAN; total * total];
    for i in 0..n {
        for j in 0..n {
            d[i * total + j] = dm.get(i, j);
        }
    }
    let mut active: Vec<usize> = (0..n).collect();
    let mut size = vec![1usize; total];
    let mut merges = Vec::with_capacity(n - 1);
    for t in 0..n - 1 {
        let mut best = (f64::INFINITY, usize::MAX, usize::MAX);
        for (ai, &a) in active.iter().enumerate() {
            for &b in &active[ai + 1..] {
                let v = d[a * total + b];
                if v < best.0 {
                    best = (v, a, b);
                }
            }
        }
        let (height, a, b) = best;
        let id = n + t;
        let (sa, sb) = (size[a] as f64, size[b] as f64);
        size[id] = size[a] + size[b];
        active.retain(|&c| c != a && c != b);
        for &c in &active {
            let v = (sa * d[a * total + c] + sb * d[b * total + c]) / (sa + sb);
            d[id * total + c] = v;
            d[c * total + id] = v;
        }
        // `active` stays sorted because new ids exceed every existing one.
        active.push(id);
        merges.push(Merge { left: a, right: b, height, size: size[id] });
    }
    Ok(Dendrogram { n_leaves: n, merges })
}

/// Sum of distances between neighbours in `order`.
pub fn ordering_cost(order: &[usize], dm: &DistanceMatrix) -> f64 {
    order.windows(2).map(|w| dm.get(w[0], w[1])).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeafOrder {
    pub order: Vec<usize>,
    /// Optimal cost as accumulated by the dynamic program.
    pub cost: f64,
}

struct Olo<'a> {
    tree: &'a Dendrogram,
    dm: &'a DistanceMatrix,
    parent: Vec<usize>,
    leaves: Vec<Vec<usize>>,
    /// `m[i*n + j]`: cheapest ordering of lca(i,j)'s leaves that starts at
    /// `i` and ends at `j`.
    m: Vec<f64>,
    memo: HashMap<(usize, usize), Vec<usize>>,
}

impl Olo<'_> {
    fn n(&self) -> usize {
        self.tree.n_leaves
    }

    /// The child of `v` whose subtree holds leaf `i`.
    fn child_towards(&self, v: usize, i: usize) -> usize {
        let mut c = i;
        while self.parent[c] != v {
            c = self.parent[c];
        }
        c
    }

    fn lca(&self, i: usize, j: usize) -> usize {
        let mut seen = vec![false; self.parent.len()];
        let mut v = i;
        loop {
            seen[v] = true;
            if v == self.tree.root() {
                break;
            }
            v = self.parent[v];
        }
        let mut v = j;
        while !seen[v] {
            v = self.parent[v];
        }
        v
    }

    /// Leaves of `w` that can sit at the far end when `i` is at the near
    /// end: the other child's leaves, or `i` itself for a leaf.
    fn far_ends(&self, w: usize, i: usize) -> &[usize] {
        match self.tree.children(w) {
            None => &self.leaves[w],
            Some((l, r)) => {
                if self.leaves[l].contains(&i) {
                    &self.leaves[r]
                } else {
                    &self.leaves[l]
                }
            }
        }
    }

    fn candidates(&self, w: usize, x: usize, i: usize, j: usize) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.n();
        let ks = self.far_ends(w, i);
        let ms = self.far_ends(x, j);
        ks.iter().flat_map(move |&k| {
            ms.iter().map(move |&mm| (k, mm, (self.m[i * n + k] + self.m[mm * n + j]) + self.dm.get(k, mm)))
        })
    }

    fn fill(&mut self) {
        let n = self.n();
        for t in 0..self.tree.merges.len() {
            let Merge { left: w, right: x, .. } = self.tree.merges[t];
            for &i in &self.leaves[w] {
                for &j in &self.leaves[x] {
                    let best = self.candidates(w, x, i, j).map(|c| c.2).fold(f64::INFINITY, f64::min);
                    self.m[i * n + j] = best;
                    self.m[j * n + i] = best;
                }
            }
        }
    }

    /// Lexicographically smallest optimal ordering of lca(i,j) running from
    /// `i` to `j`.
    fn sequence(&mut self, i: usize, j: usize) -> Vec<usize> {
        if i == j {
            return vec![i];
        }
        if let Some(s) = self.memo.get(&(i, j)) {
            return s.clone();
        }
        let n = self.n();
        let v = self.lca(i, j);
        let w = self.child_towards(v, i);
        let x = self.child_towards(v, j);
        let target = self.m[i * n + j];
        let splits: Vec<(usize, usize)> =
            self.candidates(w, x, i, j).filter(|c| c.2 == target).map(|c| (c.0, c.1)).collect();
        let mut best: Option<Vec<usize>> = None;
        for (k, mm) in splits {
            let mut s = self.sequence(i, k);
            s.extend(self.sequence(mm, j));
            if best.as_ref().is_none_or(|b| s < *b) {
                best = Some(s);
            }
        }
        let best = best.expect("optimum is attained by some split");
        self.memo.insert((i, j), best.clone());
        best
    }
}

/// Optimal leaf ordering: among the orderings reachable by flipping
/// subtrees, the one minimizing the summed distance between neighbours,
/// lexicographically smallest on ties.
pub fn optimal_leaf_order(tree: &Dendrogram, dm: &DistanceMatrix) -> Result<LeafOrder, ClusterError> {
    if tree.n_leaves != dm.n() {
        return Err(ClusterError::TreeMatrixMismatch { leaves: tree.n_leaves, items: dm.n() });
    }
    tree.validate()?;
    let n = tree.n_leaves;
    if n == 1 {
        return Ok(LeafOrder { order: vec![0], cost: 0.0 });
    }
    let total = 2 * n - 1;
    let mut parent = vec![usize::MAX; total];
    let mut leaves: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    for (t, m) in tree.merges.iter().enumerate() {
        parent[m.left] = n + t;
        parent[m.right] = n + t;
        let mut l = leaves[m.left].clone();
        l.extend(&leaves[m.right]);
        leaves.push(l);
    }
    let mut olo = Olo { tree, dm, parent, leaves, m: vec![0.0; n * n], memo: HashMap::new() };
    olo.fill();

    let (l, r) = tree.children(tree.root()).expect("n ≥ 2 has an internal root");
    let mut cost = f64::INFINITY;
    for &i in &olo.leaves[l] {
        for &j in &olo.leaves[r] {
            cost = cost.min(olo.m[i * n + j]);
        }
    }
    let mut ends = Vec::new();
    for &i in &olo.leaves[l] {
        for &j in &olo.leaves[r] {
            if olo.m[i * n + j] == cost {
                ends.push((i, j));
                ends.push((j, i));
            }
        }
    }
    let order = ends
        .into_iter()
        .map(|(i, j)| olo.sequence(i, j))
        .min()
        .expect("at least one optimal end pair");
    Ok(LeafOrder { order, cost })
}
