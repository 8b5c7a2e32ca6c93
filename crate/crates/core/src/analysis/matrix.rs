use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::LinkageKind;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::svg::write_atomic;

/// Which dataset distance a matrix holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    Wasserstein,
    Euclidean,
    Dtw,
    Linkage(LinkageKind),
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::Wasserstein,
        Metric::Euclidean,
        Metric::Dtw,
        Metric::Linkage(LinkageKind::Min),
        Metric::Linkage(LinkageKind::Avg),
        Metric::Linkage(LinkageKind::Max),
    ];

    /// Linkage metrics need every window, not just the fitted sketch.
    pub fn needs_raw_data(self) -> bool {
        matches!(self, Metric::Linkage(_))
    }

    /// Whether the diagonal is zero by definition.
    pub fn has_zero_diagonal(self) -> bool {
        !matches!(self, Metric::Linkage(_))
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Wasserstein => "wasserstein",
            Metric::Euclidean => "euclidean",
            Metric::Dtw => "dtw",
            Metric::Linkage(LinkageKind::Min) => "link-min",
            Metric::Linkage(LinkageKind::Avg) => "link-avg",
            Metric::Linkage(LinkageKind::Max) => "link-max",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::UnknownMetric(s.to_string()))
    }
}

/// Symmetric `M × M` matrix of dataset distances with labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    labels: Vec<String>,
    values: Matrix,
    metric: Option<Metric>,
}

impl DistanceMatrix {
    /// Validates shape, unique labels, exact symmetry and finite
    /// non-negative entries.
    pub fn new(labels: Vec<String>, values: Matrix, metric: Option<Metric>) -> Result<Self> {
        if !values.is_square() {
            return Err(Error::NotSquare {
                rows: values.rows(),
                cols: values.cols(),
            });
        }
        if labels.len() != values.rows() {
            return Err(Error::LabelMismatch(format!(
                "{} labels for a {}x{} matrix",
                labels.len(),
                values.rows(),
                values.cols()
            )));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = labels.iter().find(|l| !seen.insert(l.as_str())) {
            return Err(Error::LabelMismatch(format!("duplicate label '{dup}'")));
        }
        let m = values.rows();
        for i in 0..m {
            for j in 0..m {
                let v = values[(i, j)];
                if v < 0.0 {
                    return Err(Error::InvalidMatrix(format!(
                        "negative distance at ({}, {})",
                        labels[i], labels[j]
                    )));
                }
                if v.to_bits() != values[(j, i)].to_bits() {
                    return Err(Error::InvalidMatrix(format!(
                        "not symmetric at ({}, {})",
                        labels[i], labels[j]
                    )));
                }
            }
        }
        Ok(DistanceMatrix {
            labels,
            values,
            metric,
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn metric(&self) -> Option<Metric> {
        self.metric
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.values.row(i)
    }

    /// Copy with every entry passed through `f`.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Result<DistanceMatrix> {
        let m = self.len();
        let values = Matrix::new(m, m, self.values.as_slice().iter().map(|&v| f(v)).collect())?;
        DistanceMatrix::new(self.labels.clone(), values, self.metric)
    }

    /// Reorders rows and columns so that new index `k` is old index `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<DistanceMatrix> {
        let m = self.len();
        let mut check = perm.to_vec();
        check.sort_unstable();
        if check != (0..m).collect::<Vec<_>>() {
            return Err(Error::InvalidConfig("not a permutation".into()));
        }
        let mut values = Matrix::zeros(m, m);
        for (i, &pi) in perm.iter().enumerate() {
            for (j, &pj) in perm.iter().enumerate() {
                values[(i, j)] = self.values[(pi, pj)];
            }
        }
        let labels = perm.iter().map(|&p| self.labels[p].clone()).collect();
        DistanceMatrix::new(labels, values, self.metric)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Csv,
    Json,
}

impl MatrixFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(MatrixFormat::Csv),
            "json" => Some(MatrixFormat::Json),
            _ => None,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct MatrixJson {
    metric: Option<String>,
    labels: Vec<String>,
    values: Vec<Vec<f64>>,
}

/// Serializes to CSV (`label,<l1>,<l2>,...` header, one row per dataset) or
/// JSON (`{"metric", "labels", "values"}`). Floats use the shortest
/// representation that parses back to the same bits.
pub fn matrix_to_string(m: &DistanceMatrix, format: MatrixFormat) -> Result<String> {
    match format {
        MatrixFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut header = vec!["label".to_string()];
            header.extend(m.labels.iter().cloned());
            write_csv_record(&mut w, &header)?;
            for (i, label) in m.labels.iter().enumerate() {
                let mut rec = vec![label.clone()];
                rec.extend(m.row(i).iter().map(|v| v.to_string()));
                write_csv_record(&mut w, &rec)?;
            }
            let bytes = w
                .into_inner()
                .map_err(|e| Error::InvalidMatrix(e.to_string()))?;
            String::from_utf8(bytes).map_err(|e| Error::InvalidMatrix(e.to_string()))
        }
        MatrixFormat::Json => {
            let doc = MatrixJson {
                metric: m.metric.map(|x| x.name().to_string()),
                labels: m.labels.clone(),
                values: (0..m.len()).map(|i| m.row(i).to_vec()).collect(),
            };
            let mut s = serde_json::to_string_pretty(&doc)?;
            s.push('\n');
            Ok(s)
        }
    }
}

fn write_csv_record(w: &mut csv::Writer<Vec<u8>>, rec: &[String]) -> Result<()> {
    w.write_record(rec)
        .map_err(|e| Error::InvalidMatrix(e.to_string()))
}

pub fn export_matrix(m: &DistanceMatrix, path: impl AsRef<Path>, format: MatrixFormat) -> Result<()> {
    let text = matrix_to_string(m, format)?;
    write_atomic(path.as_ref(), text.as_bytes())
}

pub fn matrix_from_str(text: &str, format: MatrixFormat, source: &Path) -> Result<DistanceMatrix> {
    match format {
        MatrixFormat::Json => {
            let doc: MatrixJson = serde_json::from_str(text).map_err(|e| Error::json(source, e))?;
            let metric = doc.metric.as_deref().map(str::parse).transpose()?;
            let m = doc.labels.len();
            if doc.values.len() != m {
                return Err(Error::LabelMismatch(format!(
                    "{m} labels but {} rows",
                    doc.values.len()
                )));
            }
            let values = Matrix::from_rows(&doc.values)?;
            DistanceMatrix::new(doc.labels, values, metric)
        }
        MatrixFormat::Csv => {
            let mut reader = csv::ReaderBuilder::new()
                .has_headers(true)
                .from_reader(text.as_bytes());
            let parse_err = |line: usize, message: String| Error::Parse {
                path: source.into(),
                line,
                message,
            };
            let header = reader
                .headers()
                .map_err(|e| parse_err(1, e.to_string()))?
                .clone();
            if header.get(0) != Some("label") {
                return Err(parse_err(1, "first header cell must be 'label'".into()));
            }
            let labels: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
            let mut rows = Vec::with_capacity(labels.len());
            for (idx, rec) in reader.records().enumerate() {
                let line = idx + 2;
                let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
                if rec.get(0) != labels.get(idx).map(String::as_str) {
                    return Err(parse_err(line, "row label does not match header order".into()));
                }
                let row = rec
                    .iter()
                    .skip(1)
                    .map(|c| {
                        c.parse::<f64>()
                            .map_err(|_| parse_err(line, format!("invalid number '{c}'")))
                    })
                    .collect::<Result<Vec<f64>>>()?;
                rows.push(row);
            }
            if rows.len() != labels.len() {
                return Err(Error::LabelMismatch(format!(
                    "{} labels but {} rows",
                    labels.len(),
                    rows.len()
                )));
            }
            let values = Matrix::from_rows(&rows)?;
            DistanceMatrix::new(labels, values, None)
        }
    }
}

/// Loads a matrix; the format follows the file extension.
pub fn load_matrix(path: impl AsRef<Path>) -> Result<DistanceMatrix> {
    let path = path.as_ref();
    let format = MatrixFormat::from_path(path).ok_or_else(|| Error::Parse {
        path: path.into(),
        line: 0,
        message: "matrix files must end in .csv or .json".into(),
    })?;
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    matrix_from_str(&text, format, path)
}
