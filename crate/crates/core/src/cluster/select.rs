use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::distance::{DistanceMatrix, Distances, Metric, VectorDistances};
use super::ClusterError;

/// `(distance, i, j)` ordering: larger distance wins, then smaller `i`,
/// then smaller `j`.
fn farther(a: (f64, usize, usize), b: (f64, usize, usize)) -> (f64, usize, usize) {
    if b.0 > a.0 || (b.0 == a.0 && (b.1, b.2) < (a.1, a.2)) {
        b
    } else {
        a
    }
}

/// The globally farthest pair `(i, j)` with `i < j`; ties go to the
/// lexicographically smallest pair.
pub fn farthest_pair<D: Distances>(d: &D) -> (usize, usize) {
    let n = d.len();
    let best = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut best = (f64::NEG_INFINITY, usize::MAX, usize::MAX);
            for j in i + 1..n {
                best = farther(best, (d.dist(i, j), i, j));
            }
            best
        })
        .reduce(|| (f64::NEG_INFINITY, usize::MAX, usize::MAX), farther);
    (best.1, best.2)
}

/// Classic Kennard-Stone: seed with the farthest pair, then repeatedly add
/// the item whose nearest selected item is farthest away. Returned in
/// selection order.
pub fn kennard_stone_select<D: Distances>(d: &D, k: usize) -> Result<Vec<usize>, ClusterError> {
    let n = d.len();
    if k > n {
        return Err(ClusterError::KTooLarge { k, n });
    }
    if k < 2 {
        return Err(ClusterError::KTooSmall(k));
    }
    let (a, b) = farthest_pair(d);
    let mut selected = vec![a, b];
    let mut taken = vec![false; n];
    taken[a] = true;
    taken[b] = true;
    let mut min_d: Vec<f64> = (0..n).into_par_iter().map(|i| d.dist(i, a).min(d.dist(i, b))).collect();
    while selected.len() < k {
        let mut next = usize::MAX;
        let mut best = f64::NEG_INFINITY;
        for i in 0..n {
            if !taken[i] && min_d[i] > best {
                best = min_d[i];
                next = i;
            }
        }
        taken[next] = true;
        selected.push(next);
        min_d.par_iter_mut().enumerate().for_each(|(i, m)| *m = m.min(d.dist(i, next)));
    }
    Ok(selected)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub k: usize,
    pub centroid_indices: Vec<usize>,
    pub labels: Vec<usize>,
}

impl ClusterAssignment {
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == cluster).collect()
    }

    pub fn validate(&self) -> Result<(), ClusterError> {
        if self.centroid_indices.len() != self.k {
            return Err(ClusterError::LengthMismatch { expected: self.k, found: self.centroid_indices.len() });
        }
        for (c, &item) in self.centroid_indices.iter().enumerate() {
            if self.labels.get(item) != Some(&c) {
                return Err(ClusterError::BadAssignment(format!("centroid {c} (item {item}) is not labeled {c}")));
            }
        }
        if let Some(&l) = self.labels.iter().find(|&&l| l >= self.k) {
            return Err(ClusterError::BadAssignment(format!("label {l} out of range")));
        }
        Ok(())
    }
}

/// Label every item with its nearest centroid; ties go to the lower
/// centroid position. A centroid always labels itself, even when it
/// duplicates an earlier centroid's vector.
pub fn assign_nearest<D: Distances>(d: &D, centroids: &[usize]) -> Result<ClusterAssignment, ClusterError> {
    let n = d.len();
    let mut owner = vec![usize::MAX; n];
    for (c, &item) in centroids.iter().enumerate() {
        if item >= n {
            return Err(ClusterError::IndexOutOfRange { index: item, n });
        }
        if owner[item] != usize::MAX {
            return Err(ClusterError::DuplicateCentroid(item));
        }
        owner[item] = c;
    }
    if centroids.is_empty() {
        return Err(ClusterError::KTooSmall(0));
    }
    let labels = (0..n)
        .into_par_iter()
        .map(|i| {
            if owner[i] != usize::MAX {
                return owner[i];
            }
            let mut best = 0;
            let mut best_d = d.dist(i, centroids[0]);
            for (c, &item) in centroids.iter().enumerate().skip(1) {
                let v = d.dist(i, item);
                if v < best_d {
                    best_d = v;
                    best = c;
                }
            }
            best
        })
        .collect();
    Ok(ClusterAssignment { k: centroids.len(), centroid_indices: centroids.to_vec(), labels })
}

/// How the distance between two groups is defined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterGroup {
    /// Distance between the groups' mean embeddings.
    #[default]
    Mean,
    /// Mean of all cross-group item distances.
    AveragePairwise,
    /// Distance between the groups' medoids.
    Medoid,
}

impl std::str::FromStr for InterGroup {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mean" => Ok(InterGroup::Mean),
            "average_pairwise" => Ok(InterGroup::AveragePairwise),
            "medoid" => Ok(InterGroup::Medoid),
            other => Err(format!("unknown inter-group distance {other:?} (mean|average_pairwise|medoid)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSummary {
    pub means: Vec<Vec<f64>>,
    pub distances: DistanceMatrix,
}

fn medoid(d: &VectorDistances, members: &[usize]) -> usize {
    let mut best = members[0];
    let mut best_sum = f64::INFINITY;
    for &i in members {
        let s: f64 = members.iter().map(|&j| d.dist(i, j)).sum();
        if s < best_sum {
            best_sum = s;
            best = i;
        }
    }
    best
}

pub fn group_centroid_vectors<E: AsRef<[f32]>>(
    embs: &[E],
    assignment: &ClusterAssignment,
    metric: Metric,
    mode: InterGroup,
) -> Result<GroupSummary, ClusterError> {
    if embs.len() != assignment.labels.len() {
        return Err(ClusterError::LengthMismatch { expected: assignment.labels.len(), found: embs.len() });
    }
    assignment.validate()?;
    let items = VectorDistances::new(embs, metric)?;
    let dim = items.dim();
    let k = assignment.k;
    let mut sums = vec![vec![0.0f64; dim]; k];
    let mut counts = vec![0usize; k];
    for (i, &l) in assignment.labels.iter().enumerate() {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(items.vector(i)) {
            *s += v;
        }
    }
    let means: Vec<Vec<f64>> = sums
        .into_iter()
        .zip(&counts)
        .map(|(s, &c)| s.into_iter().map(|v| v / c as f64).collect())
        .collect();

    let distances = match mode {
        InterGroup::Mean => VectorDistances::from_f64(dim, means.concat(), metric)?.to_matrix(),
        InterGroup::Medoid => {
            let medoids: Vec<usize> = (0..k).map(|c| medoid(&items, &assignment.members(c))).collect();
            let mut values = vec![0.0; k * k];
            for a in 0..k {
                for b in 0..k {
                    values[a * k + b] = items.dist(medoids[a], medoids[b]);
                }
            }
            DistanceMatrix::from_values(k, values, metric)?
        }
        InterGroup::AveragePairwise => {
            let members: Vec<Vec<usize>> = (0..k).map(|c| assignment.members(c)).collect();
            let pairs: Vec<(usize, usize)> = (0..k).flat_map(|a| (a + 1..k).map(move |b| (a, b))).collect();
            let avg: Vec<f64> = pairs
                .par_iter()
                .map(|&(a, b)| {
                    let s: f64 = members[a].iter().flat_map(|&i| members[b].iter().map(move |&j| (i, j))).map(|(i, j)| items.dist(i, j)).sum();
                    s / (members[a].len() * members[b].len()) as f64
                })
                .collect();
            let mut values = vec![0.0; k * k];
            for (&(a, b), v) in pairs.iter().zip(avg) {
                values[a * k + b] = v;
                values[b * k + a] = v;
            }
            DistanceMatrix::from_values(k, values, metric)?
        }
    };
    Ok(GroupSummary { means, distances })
}
