//! Comparison distances: Euclidean and DTW on mean series, and
//! cluster-linkage distances over all cross-dataset window pairs.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gaussian::MvnParams;
use crate::ingest::{dataset_rng, SampleMatrix};
use crate::linalg::Matrix;

/// Rows of `a` handled per parallel task in the linkage kernel. Fixed, so the
/// reduction tree does not depend on the thread count.
pub const LINKAGE_BLOCK_ROWS: usize = 64;

/// ‖μ_a − μ_b‖₂.
pub fn euclidean_mean_distance(a: &MvnParams, b: &MvnParams) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    Ok(a.mean()
        .iter()
        .zip(b.mean())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// Full-window DTW configuration. Carries no options yet.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DtwConfig;

/// Dynamic time warping with absolute-difference cost:
/// `D[i][j] = |x_i − y_j| + min(D[i−1][j−1], D[i][j−1], D[i−1][j])`,
/// `D[0][0] = 0` and infinite borders otherwise. Lengths may differ.
pub fn dtw_distance(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::EmptyInput);
    }
    // two rolling rows over y, index 0 is the border column
    let m = y.len();
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut curr = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for &xi in x {
        curr[0] = f64::INFINITY;
        for j in 1..=m {
            let best = prev[j - 1].min(curr[j - 1]).min(prev[j]);
            curr[j] = (xi - y[j - 1]).abs() + best;
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    Ok(prev[m])
}

/// DTW between the two mean series.
pub fn dtw_mean_distance(a: &MvnParams, b: &MvnParams) -> Result<f64> {
    dtw_distance(a.mean(), b.mean())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LinkageKind {
    Min,
    Avg,
    Max,
}

impl fmt::Display for LinkageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LinkageKind::Min => "min",
            LinkageKind::Avg => "avg",
            LinkageKind::Max => "max",
        })
    }
}

impl FromStr for LinkageKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min" => Ok(LinkageKind::Min),
            "avg" => Ok(LinkageKind::Avg),
            "max" => Ok(LinkageKind::Max),
            other => Err(Error::UnknownMetric(other.to_string())),
        }
    }
}

/// Minimum, mean and maximum Euclidean distance over every cross pair of rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkageSummary {
    pub min: f64,
    pub avg: f64,
    pub max: f64,
    pub pairs: u64,
}

impl LinkageSummary {
    pub fn get(&self, kind: LinkageKind) -> f64 {
        match kind {
            LinkageKind::Min => self.min,
            LinkageKind::Avg => self.avg,
            LinkageKind::Max => self.max,
        }
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.carry);
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

#[inline]
fn row_distance(x: &[f64], y: &[f64]) -> f64 {
    let mut s = 0.0;
    for (a, b) in x.iter().zip(y) {
        let d = a - b;
        s += d * d;
    }
    s.sqrt()
}

struct BlockStats {
    min: f64,
    max: f64,
    sum: CompensatedSum,
}

/// Exact linkage statistics between two row sets.
///
/// Rows of `a` are split into blocks of [`LINKAGE_BLOCK_ROWS`] and processed
/// in parallel; block results are merged sequentially in block order, so the
/// output is bit-identical for any thread count.
pub fn linkage_summary(a: &Matrix, b: &Matrix) -> Result<LinkageSummary> {
    if a.cols() != b.cols() {
        return Err(Error::DimensionMismatch {
            left: a.cols(),
            right: b.cols(),
        });
    }
    let a_rows = a.as_slice();
    let width = a.cols();
    let blocks: Vec<BlockStats> = a_rows
        .par_chunks(LINKAGE_BLOCK_ROWS * width)
        .map(|block| {
            let mut stats = BlockStats {
                min: f64::INFINITY,
                max: f64::NEG_INFINITY,
                sum: CompensatedSum::default(),
            };
            for x in block.chunks_exact(width) {
                for y in b.row_iter() {
                    let d = row_distance(x, y);
                    stats.min = stats.min.min(d);
                    stats.max = stats.max.max(d);
                    stats.sum.add(d);
                }
            }
            stats
        })
        .collect();

    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut total = CompensatedSum::default();
    for s in &blocks {
        min = min.min(s.min);
        max = max.max(s.max);
        total.merge(&s.sum);
    }
    let pairs = (a.rows() as u64) * (b.rows() as u64);
    // keep min ≤ avg ≤ max even when every distance is equal
    let avg = (total.value() / pairs as f64).clamp(min, max);
    Ok(LinkageSummary {
        min,
        avg,
        max,
        pairs,
    })
}

pub fn linkage_distance(a: &SampleMatrix, b: &SampleMatrix, kind: LinkageKind) -> Result<f64> {
    if a.sample_count() == 0 || b.sample_count() == 0 {
        return Err(Error::EmptyMatrix);
    }
    Ok(linkage_summary(a.data(), b.data())?.get(kind))
}

/// Deterministic subset of at most `cap` rows, in original order, drawn on the
/// dataset's own random stream. Results computed on subsets are approximate.
pub fn subsample_rows(rows: &Matrix, cap: usize, seed: u64, dataset_name: &str) -> Result<Matrix> {
    if cap == 0 {
        return Err(Error::InvalidConfig("subsample cap must be positive".into()));
    }
    if rows.rows() <= cap {
        return Ok(rows.clone());
    }
    let mut rng = dataset_rng(seed ^ 0x5eed_11a6_e000_0000, dataset_name);
    let mut picked = index::sample(&mut rng, rows.rows(), cap).into_vec();
    picked.sort_unstable();
    let mut data = Vec::with_capacity(cap * rows.cols());
    for i in picked {
        data.extend_from_slice(rows.row(i));
    }
    Matrix::new(cap, rows.cols(), data)
}
