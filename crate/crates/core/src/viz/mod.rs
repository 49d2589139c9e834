//! Attention aggregation and deterministic SVG rendering. Every renderer
//! also returns a JSON-serializable sidecar carrying the plotted values.

mod attention;
mod color;
mod svg;

use thiserror::Error;

pub use attention::{aggregate_pool_attention, aggregate_transformer_attention, AtomIntensities, SideAttention};
pub use color::{hex, red_scale, ColorMap, Rgb};
pub use svg::{
    render_attention_svg, render_heatmap_svg, render_scatter_svg, AttentionSidecar, HeatmapSidecar, Palette,
    ScatterSidecar, MAX_DATASETS,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VizError {
    #[error("expected {expected} entries, found {found}")]
    CountMismatch { expected: usize, found: usize },
    #[error("invalid order: {0}")]
    InvalidPermutation(String),
    #[error("dataset tag {0:?} is not in the palette")]
    UnknownTag(String),
    #[error("{0} datasets exceed the palette limit")]
    TooManyDatasets(usize),
    #[error("invalid attention bundle: {0}")]
    BadAttention(String),
}
