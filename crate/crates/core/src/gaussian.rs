//! Multivariate normal sketches of datasets and the closed-form 2-Wasserstein
//! distance between them.

use std::cmp::Ordering;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::SampleMatrix;
use crate::linalg::{self, Matrix};

/// Tolerance on `|Σ_ij - Σ_ji|` accepted when building parameters.
pub const COV_SYMMETRY_TOLERANCE: f64 = 1e-10;

/// Fitted mean and covariance of one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MvnJson", into = "MvnJson")]
pub struct MvnParams {
    dataset_name: String,
    mean: Vec<f64>,
    cov: Matrix,
    sample_count: usize,
}

/// On-disk sketch layout: covariance flattened row-major.
#[derive(Serialize, Deserialize)]
struct MvnJson {
    name: String,
    sample_count: usize,
    mean: Vec<f64>,
    cov: Vec<f64>,
}

impl TryFrom<MvnJson> for MvnParams {
    type Error = Error;

    fn try_from(raw: MvnJson) -> Result<Self> {
        let l = raw.mean.len();
        if l == 0 {
            return Err(Error::InvalidParams("empty mean vector".into()));
        }
        if raw.cov.len() != l * l {
            return Err(Error::InvalidParams(format!(
                "covariance has {} entries, expected {}",
                raw.cov.len(),
                l * l
            )));
        }
        let cov = Matrix::new(l, l, raw.cov)?;
        MvnParams::new(raw.name, raw.mean, cov, raw.sample_count)
    }
}

impl From<MvnParams> for MvnJson {
    fn from(p: MvnParams) -> Self {
        MvnJson {
            name: p.dataset_name,
            sample_count: p.sample_count,
            mean: p.mean,
            cov: p.cov.into_vec(),
        }
    }
}

impl MvnParams {
    /// Validates shapes, finiteness, covariance symmetry (within
    /// [`COV_SYMMETRY_TOLERANCE`]) and non-negative variances. The covariance
    /// is stored exactly symmetrized.
    pub fn new(
        dataset_name: impl Into<String>,
        mean: Vec<f64>,
        cov: Matrix,
        sample_count: usize,
    ) -> Result<Self> {
        let l = mean.len();
        if l == 0 {
            return Err(Error::InvalidParams("empty mean vector".into()));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("non-finite mean entry".into()));
        }
        if cov.rows() != l || cov.cols() != l {
            return Err(Error::DimensionMismatch {
                left: l,
                right: cov.rows(),
            });
        }
        let asym = cov.max_asymmetry()?;
        if asym > COV_SYMMETRY_TOLERANCE {
            return Err(Error::InvalidParams(format!(
                "covariance asymmetry {asym:e} exceeds tolerance"
            )));
        }
        if cov.diagonal().iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidParams("negative variance".into()));
        }
        let cov = cov.symmetrized()?;
        Ok(MvnParams {
            dataset_name: dataset_name.into(),
            mean,
            cov,
            sample_count,
        })
    }

    /// Maximum-likelihood fit over the rows of `rows`: column means and
    /// `(1/N)·(X - μ)ᵀ(X - μ)`.
    pub fn fit_rows(dataset_name: impl Into<String>, rows: &Matrix) -> Result<Self> {
        let n = rows.rows();
        let l = rows.cols();
        if n < 2 {
            return Err(Error::TooFewSamples(n));
        }
        let inv_n = 1.0 / n as f64;

        let mut mean = vec![0.0; l];
        for row in rows.row_iter() {
            for (m, &x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        for m in mean.iter_mut() {
            *m *= inv_n;
        }

        // upper triangle, one rank-1 update per centered row
        let mut acc = vec![0.0; l * l];
        let mut centered = vec![0.0; l];
        for row in rows.row_iter() {
            for ((c, &x), &m) in centered.iter_mut().zip(row).zip(&mean) {
                *c = x - m;
            }
            for i in 0..l {
                let ci = centered[i];
                let dst = &mut acc[i * l + i..(i + 1) * l];
                for (a, &cj) in dst.iter_mut().zip(&centered[i..]) {
                    *a += ci * cj;
                }
            }
        }
        for i in 0..l {
            for j in i..l {
                let v = acc[i * l + j] * inv_n;
                acc[i * l + j] = v;
                acc[j * l + i] = v;
            }
        }
        let cov = Matrix::new(l, l, acc)?;
        MvnParams::new(dataset_name, mean, cov, n)
    }

    pub fn dataset_name(&self) -> &str {
        &self.dataset_name
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> &Matrix {
        &self.cov
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Copy with every float passed through `f` (used for export rounding).
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Result<MvnParams> {
        let cov = Matrix::new(
            self.dim(),
            self.dim(),
            self.cov.as_slice().iter().map(|&v| f(v)).collect(),
        )?;
        MvnParams::new(
            self.dataset_name.clone(),
            self.mean.iter().map(|&v| f(v)).collect(),
            cov,
            self.sample_count,
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    /// Total order used to fix the evaluation order of symmetric functions.
    fn canonical_cmp(&self, other: &MvnParams) -> Ordering {
        let lhs = self.mean.iter().chain(self.cov.as_slice());
        let rhs = other.mean.iter().chain(other.cov.as_slice());
        for (a, b) in lhs.zip(rhs) {
            match a.total_cmp(b) {
                Ordering::Equal => continue,
                ord => return ord,
            }
        }
        Ordering::Equal
    }
}

/// Fits the MVN sketch of a sample matrix.
pub fn fit_mvn(samples: &SampleMatrix) -> Result<MvnParams> {
    MvnParams::fit_rows(samples.dataset_name(), samples.data())
}

/// Below this fraction of `tr Σ_a + tr Σ_b`, the covariance term is
/// re-evaluated as a sum of squares rather than as a difference of traces.
const REFINE_BELOW: f64 = 1e-6;

/// Parameters plus a square-root factor `W = V·Λ^{1/2}` of the covariance
/// (so `W·Wᵀ = Σ`), computed once and reused across many distances. The
/// factor is stored transposed: row `j` is `√λⱼ·vⱼ`.
#[derive(Debug, Clone)]
pub struct PreparedMvn {
    params: MvnParams,
    factor_rows: Matrix,
    factor_trace: f64,
}

impl PreparedMvn {
    pub fn new(params: MvnParams) -> Result<Self> {
        let mut eig = linalg::sym_eigen_ql(params.cov())?;
        linalg::clamp_psd_eigenvalues(&mut eig.eigenvalues)?;
        let l = params.dim();
        let mut factor_rows = eig.eigenvectors.transpose();
        for j in 0..l {
            let s = eig.eigenvalues[j].sqrt();
            for i in 0..l {
                factor_rows[(j, i)] *= s;
            }
        }
        let factor_trace = eig.eigenvalues.iter().sum();
        Ok(PreparedMvn {
            params,
            factor_rows,
            factor_trace,
        })
    }

    pub fn params(&self) -> &MvnParams {
        &self.params
    }
}

/// Covariance part of the squared distance.
///
/// `tr(Σ_a^{1/2} Σ_b Σ_a^{1/2})^{1/2}` is the nuclear norm of `K = W_aᵀ W_b`,
/// so the term is `tr Σ_a + tr Σ_b − 2·Σ σᵢ(K)`. When that difference is tiny
/// relative to the traces it is recomputed as `‖W_a U − W_b V‖²_F` with
/// `K = U·S·Vᵀ`, which has no cancellation and is exactly zero for equal inputs.
fn covariance_term(a: &PreparedMvn, b: &PreparedMvn) -> Result<f64> {
    let k = linalg::mul_transposed(&a.factor_rows, &b.factor_rows)?;
    let traces = a.factor_trace + b.factor_trace;
    let nuclear: f64 = linalg::singular_values(&k)?.iter().sum();
    let direct = traces - 2.0 * nuclear;
    if direct > REFINE_BELOW * traces {
        return Ok(direct);
    }
    let svd = linalg::svd_jacobi(&k)?;
    // ‖W_a U − W_b V‖ = ‖Uᵀ W_aᵀ − Vᵀ W_bᵀ‖
    let left = linalg::matmul(&svd.u.transpose(), &a.factor_rows)?;
    let right = linalg::matmul(&svd.v.transpose(), &b.factor_rows)?;
    Ok(left
        .as_slice()
        .iter()
        .zip(right.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum())
}

fn squared_mean_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_dims(a: &MvnParams, b: &MvnParams) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    Ok(())
}

/// 2-Wasserstein distance between `N(μ_a, Σ_a)` and `N(μ_b, Σ_b)`:
///
/// ```text
/// d² = ‖μ_a − μ_b‖² + tr(Σ_a + Σ_b − 2·(Σ_a^{1/2} Σ_b Σ_a^{1/2})^{1/2})
/// ```
///
/// Arguments are put in a canonical order before evaluation, so
/// `wasserstein_distance(a, b) == wasserstein_distance(b, a)` bit for bit.
pub fn wasserstein_distance(a: &MvnParams, b: &MvnParams) -> Result<f64> {
    check_dims(a, b)?;
    let (first, second) = if a.canonical_cmp(b) == Ordering::Greater {
        (b, a)
    } else {
        (a, b)
    };
    let first = PreparedMvn::new(first.clone())?;
    let second = PreparedMvn::new(second.clone())?;
    wasserstein_ordered(&first, &second)
}

/// Same value as [`wasserstein_distance`], reusing precomputed factors.
pub fn wasserstein_prepared(a: &PreparedMvn, b: &PreparedMvn) -> Result<f64> {
    check_dims(&a.params, &b.params)?;
    if a.params.canonical_cmp(&b.params) == Ordering::Greater {
        wasserstein_ordered(b, a)
    } else {
        wasserstein_ordered(a, b)
    }
}

fn wasserstein_ordered(first: &PreparedMvn, second: &PreparedMvn) -> Result<f64> {
    let gap = squared_mean_gap(first.params.mean(), second.params.mean());
    let cov = covariance_term(first, second)?;
    Ok((gap + cov).max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::SamplingConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mvn(mean: &[f64], cov: &[&[f64]]) -> MvnParams {
        MvnParams::new("t", mean.to_vec(), Matrix::from_rows(cov).unwrap(), 10).unwrap()
    }

    fn random_rows(n: usize, l: usize, rng: &mut ChaCha8Rng) -> Matrix {
        let data = (0..n * l).map(|_| rng.gen_range(0.0..1.0)).collect();
        Matrix::new(n, l, data).unwrap()
    }

    #[test]
    fn fit_two_rows() {
        let rows = Matrix::from_rows(&[[0.0, 0.0], [1.0, 1.0]]).unwrap();
        let cfg = SamplingConfig {
            window_length: 2,
            sample_count: 2,
            ..Default::default()
        };
        // rows [0,0] and [1,1] are constant, so build through fit_rows directly
        let p = MvnParams::fit_rows("x", &rows).unwrap();
        assert_eq!(p.mean(), &[0.5, 0.5]);
        assert_eq!(p.cov().as_slice(), &[0.25, 0.25, 0.25, 0.25]);
        assert_eq!(p.sample_count(), 2);

        let sm = SampleMatrix::new(
            "y",
            Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap(),
            cfg,
        )
        .unwrap();
        let q = fit_mvn(&sm).unwrap();
        assert_eq!(q.dataset_name(), "y");
        assert_eq!(q.cov().as_slice(), &[0.25, -0.25, -0.25, 0.25]);
    }

    #[test]
    fn fit_is_duplication_invariant() {
        let r1 = [0.1, 0.7, 0.3];
        let r2 = [0.9, 0.2, 0.4];
        let once = MvnParams::fit_rows("a", &Matrix::from_rows(&[r1, r2]).unwrap()).unwrap();
        let twice =
            MvnParams::fit_rows("a", &Matrix::from_rows(&[r1, r1, r2, r2]).unwrap()).unwrap();
        assert!(once.cov().max_abs_diff(twice.cov()).unwrap() < 1e-15);
        for (x, y) in once.mean().iter().zip(twice.mean()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn fit_standard_basis() {
        let l = 5;
        let rows = Matrix::identity(l);
        let p = MvnParams::fit_rows("e", &rows).unwrap();
        let lf = l as f64;
        for i in 0..l {
            assert!((p.mean()[i] - 1.0 / lf).abs() < 1e-15);
            for j in 0..l {
                let delta = if i == j { 1.0 / lf } else { 0.0 };
                let expect = delta - 1.0 / (lf * lf);
                assert!((p.cov()[(i, j)] - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn fit_needs_two_rows() {
        let one = Matrix::from_rows(&[[0.1, 0.2]]).unwrap();
        assert!(matches!(
            MvnParams::fit_rows("x", &one),
            Err(Error::TooFewSamples(1))
        ));
    }

    #[test]
    fn params_validation() {
        let asym = Matrix::from_rows(&[[1.0, 0.5], [0.4, 1.0]]).unwrap();
        assert!(MvnParams::new("x", vec![0.0, 0.0], asym, 2).is_err());
        let neg = Matrix::from_rows(&[[-1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert!(MvnParams::new("x", vec![0.0, 0.0], neg, 2).is_err());
        assert!(matches!(
            MvnParams::new("x", vec![0.0], Matrix::identity(2), 2),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn one_dimensional_closed_form() {
        let a = mvn(&[0.0], &[&[1.0]]);
        let b = mvn(&[1.0], &[&[4.0]]);
        let d = wasserstein_distance(&a, &b).unwrap();
        assert!((d - 2f64.sqrt()).abs() < 1e-12, "{d}");
    }

    #[test]
    fn self_distance_and_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for l in [2, 8, 48] {
            let a = MvnParams::fit_rows("a", &random_rows(4 * l, l, &mut rng)).unwrap();
            let b = MvnParams::fit_rows("b", &random_rows(4 * l, l, &mut rng)).unwrap();
            assert!(wasserstein_distance(&a, &a).unwrap() <= 1e-7);
            let ab = wasserstein_distance(&a, &b).unwrap();
            let ba = wasserstein_distance(&b, &a).unwrap();
            assert_eq!(ab.to_bits(), ba.to_bits());
            let pa = PreparedMvn::new(a.clone()).unwrap();
            let pb = PreparedMvn::new(b.clone()).unwrap();
            assert_eq!(wasserstein_prepared(&pa, &pb).unwrap().to_bits(), ab.to_bits());
            assert_eq!(wasserstein_prepared(&pb, &pa).unwrap().to_bits(), ab.to_bits());
        }
    }

    #[test]
    fn dimension_mismatch() {
        let a = mvn(&[0.0], &[&[1.0]]);
        let b = mvn(&[0.0, 0.0], &[&[1.0, 0.0], &[0.0, 1.0]]);
        assert!(matches!(
            wasserstein_distance(&a, &b),
            Err(Error::DimensionMismatch { left: 1, right: 2 })
        ));
    }

    #[test]
    fn json_round_trip() {
        let p = mvn(&[0.25, 0.5], &[&[0.1, 0.02], &[0.02, 0.3]]);
        let back = MvnParams::from_json(&p.to_json().unwrap()).unwrap();
        assert_eq!(back, p);
        let v: serde_json::Value = serde_json::from_str(&p.to_json().unwrap()).unwrap();
        assert_eq!(v["cov"].as_array().unwrap().len(), 4);
        assert_eq!(v["name"], "t");
        assert!(MvnParams::from_json(r#"{"name":"x","sample_count":2,"mean":[0,0],"cov":[1,0,0]}"#).is_err());
    }
}
