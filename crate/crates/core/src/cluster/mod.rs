//! Flat clustering of reaction embeddings around Kennard-Stone centroids,
//! plus the group-level tree and leaf ordering used to lay out heatmaps.

mod distance;
mod report;
mod select;
mod tree;

use thiserror::Error;

pub use distance::{pairwise_distances, DistanceMatrix, Distances, Metric, VectorDistances};
pub use report::{cluster_embeddings, write_assignment_csv, ClusterReport, ClusterRun, ClusterSummary};
pub use select::{
    assign_nearest, farthest_pair, group_centroid_vectors, kennard_stone_select, ClusterAssignment, GroupSummary,
    InterGroup,
};
pub use tree::{average_linkage_tree, optimal_leaf_order, ordering_cost, Dendrogram, LeafOrder, Merge};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("vector {0} is all zeros; cosine distance is undefined")]
    ZeroVectorCosine(usize),
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("need at least {needed} items, found {found}")]
    TooFewItems { needed: usize, found: usize },
    #[error("distances must be finite and non-negative")]
    InvalidDistance,
    #[error("k = {k} exceeds the {n} available items")]
    KTooLarge { k: usize, n: usize },
    #[error("k = {0} is too small (need at least 2)")]
    KTooSmall(usize),
    #[error("item index {index} out of range ({n} items)")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("item {0} is listed as a centroid twice")]
    DuplicateCentroid(usize),
    #[error("invalid assignment: {0}")]
    BadAssignment(String),
    #[error("invalid dendrogram: {0}")]
    BadTree(String),
    #[error("tree has {leaves} leaves but the matrix covers {items} items")]
    TreeMatrixMismatch { leaves: usize, items: usize },
}
