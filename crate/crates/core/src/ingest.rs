//! Loading raw datasets, global min-max normalization, and seeded window
//! sampling into an `N × L` [`SampleMatrix`].

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub id: String,
    pub values: Vec<f64>,
}

/// A named collection of variable-length univariate series.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    name: String,
    series: Vec<Series>,
}

impl TimeSeriesDataset {
    pub fn new(name: impl Into<String>, series: Vec<Series>) -> Result<Self> {
        let name = name.into();
        if series.is_empty() {
            return Err(Error::EmptyDataset(name));
        }
        let mut seen = HashMap::with_capacity(series.len());
        for s in &series {
            if s.values.is_empty() {
                return Err(Error::InvalidDataset(format!("series '{}' is empty", s.id)));
            }
            if s.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidDataset(format!(
                    "series '{}' has a non-finite value",
                    s.id
                )));
            }
            if seen.insert(s.id.as_str(), ()).is_some() {
                return Err(Error::InvalidDataset(format!("duplicate series id '{}'", s.id)));
            }
        }
        Ok(TimeSeriesDataset { name, series })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn series(&self) -> &[Series] {
        &self.series
    }

    fn value_range(&self) -> (f64, f64) {
        self.series
            .iter()
            .flat_map(|s| s.values.iter())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    /// One `{"id": ..., "values": [...]}` object per line.
    Jsonl,
    /// `series_id,t,value` with a header row.
    CsvLong,
}

impl DatasetFormat {
    /// Guesses the format from a file extension (`.jsonl`/`.json` or `.csv`).
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "jsonl" | "ndjson" | "json" => Some(DatasetFormat::Jsonl),
            "csv" => Some(DatasetFormat::CsvLong),
            _ => None,
        }
    }
}

/// Loads a dataset named after the file stem.
pub fn load_dataset(path: impl AsRef<Path>, format: DatasetFormat) -> Result<TimeSeriesDataset> {
    let path = path.as_ref();
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset")
        .to_string();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let series = match format {
        DatasetFormat::Jsonl => read_jsonl(path, BufReader::new(file))?,
        DatasetFormat::CsvLong => read_csv_long(path, file)?,
    };
    if series.is_empty() {
        return Err(Error::EmptyDataset(name));
    }
    TimeSeriesDataset::new(name, series)
}

#[derive(Deserialize)]
struct JsonlRecord {
    id: String,
    values: Vec<Option<f64>>,
}

fn read_jsonl(path: &Path, reader: impl BufRead) -> Result<Vec<Series>> {
    let mut out: Vec<Series> = Vec::new();
    let mut ids = HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: JsonlRecord = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(err) => {
                // JSON has no NaN/Infinity literals; a line that parses once
                // they are nulled out is a non-finite value, not a syntax error.
                let patched = line
                    .replace("-Infinity", "null")
                    .replace("Infinity", "null")
                    .replace("NaN", "null");
                if patched != line && serde_json::from_str::<JsonlRecord>(&patched).is_ok() {
                    return Err(Error::NonFiniteValue {
                        path: path.into(),
                        line: lineno,
                    });
                }
                return Err(Error::Parse {
                    path: path.into(),
                    line: lineno,
                    message: err.to_string(),
                });
            }
        };
        let mut values = Vec::with_capacity(record.values.len());
        for v in record.values {
            match v {
                Some(v) if v.is_finite() => values.push(v),
                _ => {
                    return Err(Error::NonFiniteValue {
                        path: path.into(),
                        line: lineno,
                    })
                }
            }
        }
        if values.is_empty() {
            return Err(Error::Parse {
                path: path.into(),
                line: lineno,
                message: format!("series '{}' has no values", record.id),
            });
        }
        if ids.insert(record.id.clone(), ()).is_some() {
            return Err(Error::Parse {
                path: path.into(),
                line: lineno,
                message: format!("duplicate series id '{}'", record.id),
            });
        }
        out.push(Series {
            id: record.id,
            values,
        });
    }
    Ok(out)
}

fn read_csv_long(path: &Path, file: File) -> Result<Vec<Series>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let header_err = |message: String| Error::Parse {
        path: path.into(),
        line: 1,
        message,
    };
    let headers = reader
        .headers()
        .map_err(|e| header_err(e.to_string()))?
        .clone();
    let expected = ["series_id", "t", "value"];
    if headers.len() != 3 || headers.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(header_err(format!(
            "expected header 'series_id,t,value', found '{}'",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }

    let mut order: Vec<String> = Vec::new();
    let mut points: HashMap<String, Vec<(i64, f64, usize)>> = HashMap::new();
    for (idx, record) in reader.records().enumerate() {
        let lineno = idx + 2;
        let parse_err = |message: String| Error::Parse {
            path: path.into(),
            line: lineno,
            message,
        };
        let record = record.map_err(|e| parse_err(e.to_string()))?;
        if record.len() != 3 {
            return Err(parse_err(format!("expected 3 fields, found {}", record.len())));
        }
        let id = record[0].to_string();
        let t: i64 = record[1]
            .parse()
            .map_err(|_| parse_err(format!("invalid integer time index '{}'", &record[1])))?;
        let value: f64 = record[2]
            .parse()
            .map_err(|_| parse_err(format!("invalid value '{}'", &record[2])))?;
        if !value.is_finite() {
            return Err(Error::NonFiniteValue {
                path: path.into(),
                line: lineno,
            });
        }
        let entry = points.entry(id.clone()).or_insert_with(|| {
            order.push(id);
            Vec::new()
        });
        entry.push((t, value, lineno));
    }

    let mut out = Vec::with_capacity(order.len());
    for id in order {
        let mut pts = points.remove(&id).unwrap_or_default();
        pts.sort_by_key(|&(t, _, _)| t);
        if let Some(w) = pts.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::Parse {
                path: path.into(),
                line: w[1].2,
                message: format!("duplicate t={} in series '{id}'", w[1].0),
            });
        }
        out.push(Series {
            id,
            values: pts.into_iter().map(|(_, v, _)| v).collect(),
        });
    }
    Ok(out)
}

/// Maps every value through `(v - min) / (max - min)` using the min and max
/// over the whole dataset.
pub fn minmax_normalize(ds: &TimeSeriesDataset) -> Result<TimeSeriesDataset> {
    let (lo, hi) = ds.value_range();
    if hi <= lo {
        return Err(Error::DegenerateRange(ds.name.clone()));
    }
    let span = hi - lo;
    let series = ds
        .series
        .iter()
        .map(|s| Series {
            id: s.id.clone(),
            values: s
                .values
                .iter()
                .map(|&v| ((v - lo) / span).clamp(0.0, 1.0))
                .collect(),
        })
        .collect();
    Ok(TimeSeriesDataset {
        name: ds.name.clone(),
        series,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub window_length: usize,
    pub sample_count: usize,
    pub seed: u64,
    pub max_resample_attempts: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            window_length: 48,
            sample_count: 20_000,
            seed: 42,
            max_resample_attempts: 1000,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_length < 2 {
            return Err(Error::InvalidConfig(format!(
                "window length must be >= 2, got {}",
                self.window_length
            )));
        }
        if self.sample_count < self.window_length {
            return Err(Error::InvalidConfig(format!(
                "sample count {} must be >= window length {}",
                self.sample_count, self.window_length
            )));
        }
        if self.max_resample_attempts == 0 {
            return Err(Error::InvalidConfig(
                "max_resample_attempts must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// `N × L` normalized windows drawn from one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    dataset_name: String,
    data: Matrix,
    config: SamplingConfig,
}

impl SampleMatrix {
    /// Checks that every entry lies in `[0, 1]`, no row is constant, and the
    /// shape agrees with `config`.
    pub fn new(dataset_name: impl Into<String>, data: Matrix, config: SamplingConfig) -> Result<Self> {
        if data.rows() != config.sample_count || data.cols() != config.window_length {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} samples for N={}, L={}",
                data.rows(),
                data.cols(),
                config.sample_count,
                config.window_length
            )));
        }
        for (i, row) in data.row_iter().enumerate() {
            if row.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::InvalidDataset(format!("row {i} leaves [0, 1]")));
            }
            if is_constant(row) {
                return Err(Error::InvalidDataset(format!("row {i} is constant")));
            }
        }
        Ok(SampleMatrix {
            dataset_name: dataset_name.into(),
            data,
            config,
        })
    }

    pub fn dataset_name(&self) -> &str {
        &self.dataset_name
    }

    pub fn data(&self) -> &Matrix {
        &self.data
    }

    pub fn config(&self) -> &SamplingConfig {
        &self.config
    }

    pub fn window_length(&self) -> usize {
        self.data.cols()
    }

    pub fn sample_count(&self) -> usize {
        self.data.rows()
    }
}

fn is_constant(row: &[f64]) -> bool {
    row.iter().all(|&v| v == row[0])
}

/// 64-bit FNV-1a, used to derive a per-dataset stream id from its name.
fn stream_id(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Generator for one dataset: seeded by `seed`, on the stream selected by the
/// dataset name, so results do not depend on the order datasets are processed.
pub fn dataset_rng(seed: u64, dataset_name: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(dataset_name));
    rng
}

/// Draws `N` windows of length `L` uniformly over all valid `(series, offset)`
/// pairs, with replacement. Constant windows are redrawn; hitting
/// `max_resample_attempts` consecutive constant draws is an error.
pub fn sample_windows(ds: &TimeSeriesDataset, cfg: &SamplingConfig) -> Result<SampleMatrix> {
    cfg.validate()?;
    let l = cfg.window_length;

    // (series index, cumulative window count up to and including it)
    let mut pool: Vec<(usize, u64)> = Vec::new();
    let mut total: u64 = 0;
    for (i, s) in ds.series.iter().enumerate() {
        if s.values.len() >= l {
            total += (s.values.len() - l + 1) as u64;
            pool.push((i, total));
        } else {
            log::warn!(
                "dataset '{}': series '{}' (length {}) is shorter than the window length {}, skipped",
                ds.name,
                s.id,
                s.values.len(),
                l
            );
        }
    }
    if pool.is_empty() {
        return Err(Error::NoValidWindow {
            dataset: ds.name.clone(),
            window_length: l,
        });
    }

    let mut rng = dataset_rng(cfg.seed, &ds.name);
    let mut data = Vec::with_capacity(cfg.sample_count * l);
    let mut failures = 0usize;
    let mut drawn = 0usize;
    while drawn < cfg.sample_count {
        let k = rng.gen_range(0..total);
        let slot = pool.partition_point(|&(_, cum)| cum <= k);
        let (series_idx, cum) = pool[slot];
        let before = if slot == 0 { 0 } else { pool[slot - 1].1 };
        debug_assert!(k < cum);
        let offset = (k - before) as usize;
        let window = &ds.series[series_idx].values[offset..offset + l];
        if is_constant(window) {
            failures += 1;
            if failures >= cfg.max_resample_attempts {
                return Err(Error::ResampleExhausted {
                    dataset: ds.name.clone(),
                    attempts: failures,
                });
            }
            continue;
        }
        failures = 0;
        data.extend_from_slice(window);
        drawn += 1;
    }
    let data = Matrix::new(cfg.sample_count, l, data)?;
    SampleMatrix::new(ds.name.clone(), data, *cfg)
}

/// Loads a dataset file (format from its extension), normalizes it and
/// draws its sample matrix.
pub fn load_samples(path: impl AsRef<Path>, cfg: &SamplingConfig) -> Result<SampleMatrix> {
    let path = path.as_ref();
    let format = DatasetFormat::from_path(path).ok_or_else(|| {
        Error::InvalidDataset(format!(
            "{}: unknown dataset format, expected .jsonl or .csv",
            path.display()
        ))
    })?;
    let ds = load_dataset(path, format)?;
    sample_windows(&minmax_normalize(&ds)?, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn series(id: &str, values: &[f64]) -> Series {
        Series {
            id: id.into(),
            values: values.to_vec(),
        }
    }

    fn write_tmp(suffix: &str, body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(suffix).tempfile().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    fn cfg(l: usize, n: usize) -> SamplingConfig {
        SamplingConfig {
            window_length: l,
            sample_count: n,
            ..SamplingConfig::default()
        }
    }

    #[test]
    fn loads_jsonl() {
        let f = write_tmp(
            ".jsonl",
            "{\"id\":\"a\",\"values\":[1,2,3]}\n\n{\"id\":\"b\",\"values\":[4.5]}\n",
        );
        let ds = load_dataset(f.path(), DatasetFormat::Jsonl).unwrap();
        assert_eq!(ds.series().len(), 2);
        assert_eq!(ds.series()[0], series("a", &[1.0, 2.0, 3.0]));
        assert_eq!(ds.series()[1], series("b", &[4.5]));
    }

    #[test]
    fn loads_csv_long_sorted_by_t() {
        let f = write_tmp(
            ".csv",
            "series_id,t,value\ns,3,30\ns,1,10\ns,0,0\ns,4,40\ns,2,20\n",
        );
        let ds = load_dataset(f.path(), DatasetFormat::CsvLong).unwrap();
        assert_eq!(ds.series(), &[series("s", &[0.0, 10.0, 20.0, 30.0, 40.0])]);
    }

    #[test]
    fn csv_keeps_first_seen_series_order() {
        let f = write_tmp(".csv", "series_id,t,value\nz,0,1\na,0,2\nz,1,3\n");
        let ds = load_dataset(f.path(), DatasetFormat::CsvLong).unwrap();
        let ids: Vec<_> = ds.series().iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids, ["z", "a"]);
    }

    #[test]
    fn rejects_nan() {
        let f = write_tmp(".jsonl", "{\"id\":\"a\",\"values\":[1,2]}\n{\"id\":\"b\",\"values\":[1,NaN]}\n");
        match load_dataset(f.path(), DatasetFormat::Jsonl) {
            Err(Error::NonFiniteValue { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let f = write_tmp(".csv", "series_id,t,value\na,0,1\na,1,NaN\n");
        match load_dataset(f.path(), DatasetFormat::CsvLong) {
            Err(Error::NonFiniteValue { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let f = write_tmp(".csv", "series_id,t,value\na,0,inf\n");
        assert!(matches!(
            load_dataset(f.path(), DatasetFormat::CsvLong),
            Err(Error::NonFiniteValue { .. })
        ));
    }

    #[test]
    fn parse_errors_carry_line() {
        let f = write_tmp(".jsonl", "{\"id\":\"a\",\"values\":[1]}\n{oops\n");
        match load_dataset(f.path(), DatasetFormat::Jsonl) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let f = write_tmp(".csv", "series_id,t,value\na,zero,1\n");
        match load_dataset(f.path(), DatasetFormat::CsvLong) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let f = write_tmp(".csv", "id,time,v\na,0,1\n");
        assert!(matches!(
            load_dataset(f.path(), DatasetFormat::CsvLong),
            Err(Error::Parse { line: 1, .. })
        ));
        let f = write_tmp(".jsonl", "{\"id\":\"a\",\"values\":[1]}\n{\"id\":\"a\",\"values\":[2]}\n");
        assert!(matches!(
            load_dataset(f.path(), DatasetFormat::Jsonl),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn empty_and_missing_files() {
        let f = write_tmp(".jsonl", "\n");
        assert!(matches!(
            load_dataset(f.path(), DatasetFormat::Jsonl),
            Err(Error::EmptyDataset(_))
        ));
        assert!(matches!(
            load_dataset("/nonexistent/file.jsonl", DatasetFormat::Jsonl),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn format_detection() {
        assert_eq!(DatasetFormat::from_path(Path::new("x.JSONL")), Some(DatasetFormat::Jsonl));
        assert_eq!(DatasetFormat::from_path(Path::new("x.csv")), Some(DatasetFormat::CsvLong));
        assert_eq!(DatasetFormat::from_path(Path::new("x.txt")), None);
    }

    #[test]
    fn normalize_examples() {
        let unit = TimeSeriesDataset::new("u", vec![series("a", &[0.0, 0.25, 1.0])]).unwrap();
        assert_eq!(minmax_normalize(&unit).unwrap(), unit);

        let ds = TimeSeriesDataset::new("d", vec![series("a", &[2.0, 4.0, 6.0])]).unwrap();
        assert_eq!(minmax_normalize(&ds).unwrap().series()[0].values, vec![0.0, 0.5, 1.0]);

        let ds = TimeSeriesDataset::new(
            "g",
            vec![series("a", &[0.0, 10.0]), series("b", &[5.0, 5.0])],
        )
        .unwrap();
        let n = minmax_normalize(&ds).unwrap();
        assert_eq!(n.series()[0].values, vec![0.0, 1.0]);
        assert_eq!(n.series()[1].values, vec![0.5, 0.5]);

        let flat = TimeSeriesDataset::new("f", vec![series("a", &[3.0, 3.0])]).unwrap();
        assert!(matches!(minmax_normalize(&flat), Err(Error::DegenerateRange(_))));
    }

    #[test]
    fn sample_tiny_series() {
        let ds = TimeSeriesDataset::new("t", vec![series("a", &[0.0, 0.5, 1.0])]).unwrap();
        let sm = sample_windows(&ds, &cfg(2, 3)).unwrap();
        assert_eq!((sm.sample_count(), sm.window_length()), (3, 2));
        for row in sm.data().row_iter() {
            assert!(row == [0.0, 0.5] || row == [0.5, 1.0], "{row:?}");
        }
    }

    #[test]
    fn constant_series_exhausts() {
        let ds = TimeSeriesDataset::new("c", vec![series("a", &[0.5; 100])]).unwrap();
        assert!(matches!(
            sample_windows(&ds, &cfg(48, 48)),
            Err(Error::ResampleExhausted { attempts: 1000, .. })
        ));
    }

    #[test]
    fn short_series_excluded() {
        let long: Vec<f64> = (0..100).map(|i| i as f64 / 99.0).collect();
        let short: Vec<f64> = (0..10).map(|i| 0.05 + i as f64 / 1000.0).collect();
        let ds = TimeSeriesDataset::new("s", vec![series("long", &long), series("short", &short)])
            .unwrap();
        let sm = sample_windows(&ds, &cfg(48, 200)).unwrap();
        for row in sm.data().row_iter() {
            // every window of the long ramp starts at a multiple of 1/99
            let start = (row[0] * 99.0).round() as usize;
            assert_eq!(row, &long[start..start + 48]);
        }

        let only_short = TimeSeriesDataset::new("s", vec![series("short", &short)]).unwrap();
        assert!(matches!(
            sample_windows(&only_short, &cfg(48, 48)),
            Err(Error::NoValidWindow { .. })
        ));
    }

    #[test]
    fn invalid_config() {
        let ds = TimeSeriesDataset::new("t", vec![series("a", &[0.0, 1.0])]).unwrap();
        assert!(matches!(sample_windows(&ds, &cfg(1, 5)), Err(Error::InvalidConfig(_))));
        assert!(matches!(sample_windows(&ds, &cfg(4, 3)), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn deterministic_and_name_keyed() {
        let vals: Vec<f64> = (0..500).map(|i| ((i * 37) % 101) as f64 / 100.0).collect();
        let a = TimeSeriesDataset::new("alpha", vec![series("x", &vals)]).unwrap();
        let b = TimeSeriesDataset::new("beta", vec![series("x", &vals)]).unwrap();
        let c = cfg(8, 64);
        assert_eq!(sample_windows(&a, &c).unwrap(), sample_windows(&a, &c).unwrap());
        assert_ne!(
            sample_windows(&a, &c).unwrap().data(),
            sample_windows(&b, &c).unwrap().data()
        );
    }

    #[test]
    fn sample_matrix_invariants() {
        let c = cfg(2, 2);
        let ok = Matrix::from_rows(&[[0.0, 1.0], [0.2, 0.1]]).unwrap();
        assert!(SampleMatrix::new("x", ok, c).is_ok());
        let constant = Matrix::from_rows(&[[0.3, 0.3], [0.2, 0.1]]).unwrap();
        assert!(SampleMatrix::new("x", constant, c).is_err());
        let out_of_range = Matrix::from_rows(&[[0.0, 1.5], [0.2, 0.1]]).unwrap();
        assert!(SampleMatrix::new("x", out_of_range, c).is_err());
        let wrong_shape = Matrix::from_rows(&[[0.0, 1.0]]).unwrap();
        assert!(SampleMatrix::new("x", wrong_shape, c).is_err());
    }
}
