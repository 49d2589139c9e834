use std::io::Write;

use serde::{Deserialize, Serialize};

use super::distance::{Metric, VectorDistances};
use super::select::{assign_nearest, group_centroid_vectors, kennard_stone_select, ClusterAssignment, GroupSummary, InterGroup};
use super::tree::{average_linkage_tree, optimal_leaf_order, Dendrogram};
use super::ClusterError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub cluster_id: usize,
    pub size: usize,
    pub centroid_id: String,
    pub centroid_rxn_smiles: Option<String>,
}

/// Everything `cluster` writes besides the per-item CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub n_items: usize,
    pub k: usize,
    pub metric: Metric,
    pub inter_group: InterGroup,
    pub clusters: Vec<ClusterSummary>,
    /// Heatmap row order (cluster ids).
    pub leaf_order: Vec<usize>,
    pub leaf_order_cost: f64,
    /// `[left, right, height, size]` per merge of the group tree.
    pub linkage: Vec<[f64; 4]>,
}

impl ClusterReport {
    pub fn summaries(assignment: &ClusterAssignment, ids: &[String], smiles: Option<&[String]>) -> Vec<ClusterSummary> {
        let sizes = assignment.sizes();
        assignment
            .centroid_indices
            .iter()
            .enumerate()
            .map(|(c, &item)| ClusterSummary {
                cluster_id: c,
                size: sizes[c],
                centroid_id: ids[item].clone(),
                centroid_rxn_smiles: smiles.map(|s| s[item].clone()),
            })
            .collect()
    }
}

/// Intermediate results of [`cluster_embeddings`], kept for rendering and
/// checks.
#[derive(Debug, Clone)]
pub struct ClusterRun {
    pub assignment: ClusterAssignment,
    pub groups: GroupSummary,
    pub tree: Dendrogram,
    pub report: ClusterReport,
}

/// The full procedure: Kennard-Stone centroids, nearest-centroid labels,
/// group distances, an average-linkage tree over the groups, and its
/// optimal leaf order. `ids` (and `smiles`, when given) run parallel to
/// `embs`.
pub fn cluster_embeddings<E: AsRef<[f32]> + Sync>(
    embs: &[E],
    ids: &[String],
    smiles: Option<&[String]>,
    k: usize,
    metric: Metric,
    inter_group: InterGroup,
) -> Result<ClusterRun, ClusterError> {
    if ids.len() != embs.len() {
        return Err(ClusterError::LengthMismatch { expected: embs.len(), found: ids.len() });
    }
    if let Some(s) = smiles {
        if s.len() != embs.len() {
            return Err(ClusterError::LengthMismatch { expected: embs.len(), found: s.len() });
        }
    }
    let d = VectorDistances::new(embs, metric)?;
    let centroids = kennard_stone_select(&d, k)?;
    let assignment = assign_nearest(&d, &centroids)?;
    let groups = group_centroid_vectors(embs, &assignment, metric, inter_group)?;
    let tree = average_linkage_tree(&groups.distances)?;
    let order = optimal_leaf_order(&tree, &groups.distances)?;
    let report = ClusterReport {
        n_items: embs.len(),
        k,
        metric,
        inter_group,
        clusters: ClusterReport::summaries(&assignment, ids, smiles),
        leaf_order: order.order,
        leaf_order_cost: order.cost,
        linkage: tree.linkage_matrix(),
    };
    Ok(ClusterRun { assignment, groups, tree, report })
}

/// `reaction_id,cluster_id,is_centroid`, one row per item in input order.
pub fn write_assignment_csv<W: Write>(out: W, ids: &[String], assignment: &ClusterAssignment) -> csv::Result<()> {
    let mut is_centroid = vec![false; assignment.labels.len()];
    for &c in &assignment.centroid_indices {
        is_centroid[c] = true;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["reaction_id", "cluster_id", "is_centroid"])?;
    for (i, id) in ids.iter().enumerate() {
        w.write_record([id.as_str(), &assignment.labels[i].to_string(), if is_centroid[i] { "true" } else { "false" }])?;
    }
    w.flush()?;
    Ok(())
}
