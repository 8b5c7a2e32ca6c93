//! Time-series dataset similarity.
//!
//! Each dataset is reduced to fixed-length normalized windows, summarized by
//! a fitted multivariate normal, and compared with the closed-form
//! 2-Wasserstein distance between Gaussians. Mean-series Euclidean and DTW
//! distances and window-level linkage distances are available for
//! comparison, together with heatmap, graph-layout and correlation tooling.

pub mod analysis;
pub mod baselines;
mod error;
pub mod gaussian;
pub mod ingest;
pub mod layout;
pub mod linalg;
pub mod svg;

pub use analysis::{DistanceMatrix, Metric};
pub use error::{Error, Result};
pub use gaussian::{fit_mvn, wasserstein_distance, MvnParams};
pub use ingest::{SampleMatrix, SamplingConfig, TimeSeriesDataset};
pub use layout::{kamada_kawai_layout, LayoutCoordinates};
pub use linalg::Matrix;

/// Rounds to 12 significant decimal digits.
pub fn round_significant(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    format!("{v:.11e}").parse().unwrap_or(v)
}

#[cfg(test)]
mod tests {
    use super::round_significant;

    #[test]
    fn rounding() {
        assert_eq!(round_significant(0.1 + 0.2), 0.3);
        assert_eq!(round_significant(1234567.8912345678), 1234567.89123);
        assert_eq!(round_significant(0.0), 0.0);
        assert_eq!(round_significant(-2.0 / 3.0), -0.666666666667);
    }
}
