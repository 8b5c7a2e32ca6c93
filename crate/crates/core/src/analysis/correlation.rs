use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::matrix::DistanceMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationPair {
    pub label: String,
    pub distance: f64,
    pub loss: f64,
}

/// Linear association between distances and losses, with the least-squares
/// line `loss ≈ slope · distance + intercept`. `spearman_r` is supplementary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub pearson_r: f64,
    pub spearman_r: f64,
    pub slope: f64,
    pub intercept: f64,
    pub n: usize,
    pub pairs: Vec<CorrelationPair>,
}

struct LinearFit {
    r: f64,
    slope: f64,
    intercept: f64,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let (mx, my) = (mean(x), mean(y));
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let slope = sxy / sxx;
    LinearFit {
        r,
        slope,
        intercept: my - slope * mx,
    }
}

/// 1-based ranks, ties sharing their average rank.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

fn is_constant(v: &[f64]) -> bool {
    v.iter().all(|&x| x == v[0])
}

/// Pearson and Spearman correlation plus the OLS fit of loss on distance.
pub fn correlate(distances: &[f64], losses: &[f64], labels: &[String]) -> Result<CorrelationReport> {
    if distances.len() != losses.len() {
        return Err(Error::LengthMismatch {
            left: distances.len(),
            right: losses.len(),
        });
    }
    if labels.len() != distances.len() {
        return Err(Error::LengthMismatch {
            left: distances.len(),
            right: labels.len(),
        });
    }
    if distances.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            got: distances.len(),
        });
    }
    if distances.iter().chain(losses).any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig("correlation inputs must be finite".into()));
    }
    if is_constant(distances) {
        return Err(Error::DegenerateVariance("distance"));
    }
    if is_constant(losses) {
        return Err(Error::DegenerateVariance("loss"));
    }
    let fit = linear_fit(distances, losses);
    let spearman = linear_fit(&ranks(distances), &ranks(losses)).r;
    Ok(CorrelationReport {
        pearson_r: fit.r,
        spearman_r: spearman,
        slope: fit.slope,
        intercept: fit.intercept,
        n: distances.len(),
        pairs: labels
            .iter()
            .zip(distances.iter().zip(losses))
            .map(|(label, (&distance, &loss))| CorrelationPair {
                label: label.clone(),
                distance,
                loss,
            })
            .collect(),
    })
}

/// Reads a `label,loss` CSV. The header row is optional.
pub fn load_losses(path: impl AsRef<Path>) -> Result<Vec<(String, f64)>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (idx, rec) in reader.records().enumerate() {
        let line = idx + 1;
        let parse_err = |message: String| Error::Parse {
            path: path.into(),
            line,
            message,
        };
        let rec = rec.map_err(|e| parse_err(e.to_string()))?;
        if rec.len() != 2 {
            return Err(parse_err(format!("expected 2 fields, found {}", rec.len())));
        }
        if line == 1 && &rec[0] == "label" && &rec[1] == "loss" {
            continue;
        }
        let loss: f64 = rec[1]
            .parse()
            .map_err(|_| parse_err(format!("invalid loss '{}'", &rec[1])))?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteValue {
                path: path.into(),
                line,
            });
        }
        if !seen.insert(rec[0].to_string()) {
            return Err(parse_err(format!("duplicate label '{}'", &rec[0])));
        }
        out.push((rec[0].to_string(), loss));
    }
    Ok(out)
}

/// Result of [`correlate_source`]: the report plus the matrix labels that had
/// no loss entry.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceCorrelation {
    pub report: CorrelationReport,
    pub missing: Vec<String>,
}

/// Correlates the distance from `source` to every other dataset with that
/// dataset's loss. Targets follow matrix order; the source itself and labels
/// without a loss are skipped.
pub fn correlate_source(m: &DistanceMatrix, source: &str, losses: &[(String, f64)]) -> Result<SourceCorrelation> {
    let s = m
        .index_of(source)
        .ok_or_else(|| Error::UnknownSourceLabel(source.to_string()))?;
    let mut labels = Vec::new();
    let mut distances = Vec::new();
    let mut values = Vec::new();
    let mut missing = Vec::new();
    for (j, label) in m.labels().iter().enumerate() {
        if j == s {
            continue;
        }
        match losses.iter().find(|(l, _)| l == label) {
            Some(&(_, loss)) => {
                labels.push(label.clone());
                distances.push(m.get(s, j));
                values.push(loss);
            }
            None => missing.push(label.clone()),
        }
    }
    if labels.len() < 3 {
        return Err(Error::InsufficientOverlap {
            needed: 3,
            found: labels.len(),
        });
    }
    Ok(SourceCorrelation {
        report: correlate(&distances, &values, &labels)?,
        missing,
    })
}
