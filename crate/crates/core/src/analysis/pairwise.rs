use rayon::prelude::*;

use super::matrix::{DistanceMatrix, Metric};
use crate::baselines::{self, LinkageKind};
use crate::error::{Error, Result};
use crate::gaussian::{self, MvnParams, PreparedMvn};
use crate::ingest::SampleMatrix;
use crate::linalg::Matrix;

/// Knobs for [`pairwise_matrix`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PairwiseOptions {
    /// Caps the rows per dataset used by linkage metrics. Anything set here
    /// makes linkage values approximate.
    pub linkage_subsample: Option<usize>,
    /// Seed for the linkage subsample.
    pub seed: u64,
}

/// Unordered index pairs `(i, j)` with `i < j`, or `i <= j` when the diagonal
/// is included.
fn index_pairs(m: usize, with_diagonal: bool) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(m * (m + 1) / 2);
    for i in 0..m {
        let start = if with_diagonal { i } else { i + 1 };
        for j in start..m {
            pairs.push((i, j));
        }
    }
    pairs
}

fn assemble(
    labels: Vec<String>,
    metric: Metric,
    entries: Vec<((usize, usize), f64)>,
) -> Result<DistanceMatrix> {
    let m = labels.len();
    let mut values = Matrix::zeros(m, m);
    for ((i, j), v) in entries {
        values[(i, j)] = v;
        values[(j, i)] = v;
    }
    DistanceMatrix::new(labels, values, Some(metric))
}

fn pair_error(labels: &[String], i: usize, j: usize, source: Error) -> Error {
    Error::Pair {
        left: labels[i].clone(),
        right: labels[j].clone(),
        source: Box::new(source),
    }
}

fn check_len(count: usize) -> Result<()> {
    if count < 2 {
        return Err(Error::TooFewDatasets(count));
    }
    Ok(())
}

fn check_same_length(lengths: impl Iterator<Item = usize>) -> Result<()> {
    let mut first = None;
    for l in lengths {
        match first {
            None => first = Some(l),
            Some(f) if f != l => return Err(Error::DimensionMismatch { left: f, right: l }),
            _ => {}
        }
    }
    Ok(())
}

/// Pairwise distances over datasets. MVN-based metrics fit each dataset
/// once; linkage metrics compare raw windows. Each unordered pair is computed
/// once, in parallel on the current rayon pool.
pub fn pairwise_matrix(
    datasets: &[SampleMatrix],
    metric: Metric,
    opts: &PairwiseOptions,
) -> Result<DistanceMatrix> {
    check_len(datasets.len())?;
    check_same_length(datasets.iter().map(SampleMatrix::window_length))?;
    match metric {
        Metric::Linkage(kind) => linkage_matrix(datasets, kind, opts),
        _ => {
            let sketches = datasets
                .par_iter()
                .map(gaussian::fit_mvn)
                .collect::<Result<Vec<_>>>()?;
            pairwise_from_sketches(&sketches, metric)
        }
    }
}

/// Pairwise distances from already fitted sketches. Linkage metrics are
/// rejected with [`Error::MetricNeedsRawData`].
pub fn pairwise_from_sketches(sketches: &[MvnParams], metric: Metric) -> Result<DistanceMatrix> {
    check_len(sketches.len())?;
    check_same_length(sketches.iter().map(MvnParams::dim))?;
    let labels: Vec<String> = sketches.iter().map(|s| s.dataset_name().to_string()).collect();
    let pairs = index_pairs(sketches.len(), false);

    let entries: Vec<((usize, usize), f64)> = match metric {
        Metric::Linkage(_) => return Err(Error::MetricNeedsRawData(metric.name().into())),
        Metric::Wasserstein => {
            let prepared = sketches
                .par_iter()
                .enumerate()
                .map(|(i, s)| {
                    PreparedMvn::new(s.clone()).map_err(|e| pair_error(&labels, i, i, e))
                })
                .collect::<Result<Vec<_>>>()?;
            pairs
                .par_iter()
                .map(|&(i, j)| {
                    gaussian::wasserstein_prepared(&prepared[i], &prepared[j])
                        .map(|d| ((i, j), d))
                        .map_err(|e| pair_error(&labels, i, j, e))
                })
                .collect::<Result<_>>()?
        }
        Metric::Euclidean | Metric::Dtw => pairs
            .par_iter()
            .map(|&(i, j)| {
                let d = if metric == Metric::Euclidean {
                    baselines::euclidean_mean_distance(&sketches[i], &sketches[j])
                } else {
                    baselines::dtw_mean_distance(&sketches[i], &sketches[j])
                };
                d.map(|d| ((i, j), d))
                    .map_err(|e| pair_error(&labels, i, j, e))
            })
            .collect::<Result<_>>()?,
    };
    assemble(labels, metric, entries)
}

fn linkage_matrix(
    datasets: &[SampleMatrix],
    kind: LinkageKind,
    opts: &PairwiseOptions,
) -> Result<DistanceMatrix> {
    let labels: Vec<String> = datasets.iter().map(|d| d.dataset_name().to_string()).collect();
    let rows: Vec<Matrix> = match opts.linkage_subsample {
        Some(cap) => {
            log::warn!("linkage subsample cap {cap} in effect: values are approximate");
            datasets
                .iter()
                .map(|d| baselines::subsample_rows(d.data(), cap, opts.seed, d.dataset_name()))
                .collect::<Result<_>>()?
        }
        None => datasets.iter().map(|d| d.data().clone()).collect(),
    };
    let pairs = index_pairs(datasets.len(), true);
    let entries = pairs
        .par_iter()
        .map(|&(i, j)| {
            baselines::linkage_summary(&rows[i], &rows[j])
                .map(|s| ((i, j), s.get(kind)))
                .map_err(|e| pair_error(&labels, i, j, e))
        })
        .collect::<Result<_>>()?;
    assemble(labels, Metric::Linkage(kind), entries)
}
