//! Distance matrices over dataset collections, their export, and
//! distance-versus-loss correlation.

mod correlation;
mod matrix;
mod pairwise;
mod plot;

pub use correlation::{
    correlate, correlate_source, load_losses, CorrelationPair, CorrelationReport, SourceCorrelation,
};
pub use matrix::{
    export_matrix, load_matrix, matrix_from_str, matrix_to_string, DistanceMatrix, MatrixFormat,
    Metric,
};
pub use pairwise::{pairwise_from_sketches, pairwise_matrix, PairwiseOptions};
pub use plot::{export_heatmap, export_scatter, heatmap_svg, scatter_svg};
