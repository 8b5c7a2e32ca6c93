//! Dense row-major matrices and the symmetric eigen machinery behind the
//! covariance square roots.
//!
//! [`sym_eigen`] is cyclic Jacobi. [`sym_eigen_ql`] (Householder
//! tridiagonalization and implicit QL) gives the same decomposition faster at
//! larger sizes, and [`sym_eigenvalues`] runs the same reduction without
//! vectors. Singular values come from [`singular_values`] (bidiagonalization
//! and implicit QR, values only) or, with both factors, from the two-sided
//! Jacobi [`svd_jacobi`].

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum tolerated `|a_ij - a_ji|` for inputs to the symmetric routines.
pub const SYMMETRY_TOLERANCE: f64 = 1e-8;
/// Cap on full Jacobi sweeps.
pub const MAX_JACOBI_SWEEPS: usize = 100;
/// Relative negative-eigenvalue tolerance below which a matrix is not PSD.
pub const PSD_CLAMP: f64 = 1e-8;

const JACOBI_TOLERANCE: f64 = 1e-12;
const MAX_QL_ITERATIONS: usize = 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix", into = "RawMatrix")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<RawMatrix> for Matrix {
    type Error = Error;

    fn try_from(raw: RawMatrix) -> Result<Self> {
        Matrix::new(raw.rows, raw.cols, raw.data)
    }
}

impl From<Matrix> for RawMatrix {
    fn from(m: Matrix) -> Self {
        RawMatrix {
            rows: m.rows,
            cols: m.cols,
            data: m.data,
        }
    }
}

impl Matrix {
    /// Builds a matrix from row-major entries, rejecting empty shapes and
    /// non-finite values.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidMatrix(format!(
                "shape {rows}x{cols} has a zero dimension"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidMatrix(format!(
                "non-finite entry at ({}, {})",
                k / cols,
                k % cols
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(n * m);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != m {
                return Err(Error::ShapeMismatch(format!(
                    "row {i} has {} columns, expected {m}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Matrix::new(n, m, data)
    }

    /// # Panics
    /// If either dimension is zero.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::InvalidMatrix("empty diagonal".into()));
        }
        let mut m = Matrix::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        Matrix::new(m.rows, m.cols, m.data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// Largest `|a_ij - a_ji|`; requires a square matrix.
    pub fn max_asymmetry(&self) -> Result<f64> {
        self.require_square()?;
        let n = self.rows;
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        Ok(worst)
    }

    /// `(A + Aᵀ) / 2`.
    pub fn symmetrized(&self) -> Result<Matrix> {
        self.require_square()?;
        let mut s = self.clone();
        s.symmetrize_in_place();
        Ok(s)
    }

    pub(crate) fn symmetrize_in_place(&mut self) {
        let n = self.rows;
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                self[(i, j)] = v;
                self[(j, i)] = v;
            }
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Largest absolute entry of `self - other`.
    pub fn max_abs_diff(&self, other: &Matrix) -> Result<f64> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())))
    }

    pub fn scaled(&self, c: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    fn require_square(&self) -> Result<()> {
        if self.is_square() {
            Ok(())
        } else {
            Err(Error::NotSquare {
                rows: self.rows,
                cols: self.cols,
            })
        }
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Eigenvalues in descending order and the matching orthonormal eigenvectors
/// stored as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Matrix,
}

impl EigenDecomposition {
    /// `V · diag(f(λ)) · Vᵀ`, symmetrized.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let n = self.eigenvalues.len();
        let v = &self.eigenvectors;
        let mapped: Vec<f64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += v[(i, k)] * mapped[k] * v[(j, k)];
                }
                out[(i, j)] = acc;
                out[(j, i)] = acc;
            }
        }
        out
    }

    pub fn reconstruct(&self) -> Matrix {
        self.reconstruct_with(|l| l)
    }
}

fn symmetric_input(a: &Matrix) -> Result<Matrix> {
    let asym = a.max_asymmetry()?;
    if asym > SYMMETRY_TOLERANCE {
        return Err(Error::AsymmetryTooLarge(asym));
    }
    a.symmetrized()
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// The input is symmetrized as `(A + Aᵀ)/2` first. Iteration stops once the
/// off-diagonal Frobenius norm drops to `1e-12 · max(‖A‖_F, 1)`; more than
/// [`MAX_JACOBI_SWEEPS`] sweeps yields [`Error::NoConvergence`].
///
/// Eigenvalues come back in descending order, and each eigenvector is signed
/// so that its first non-negligible component is positive.
pub fn sym_eigen(a: &Matrix) -> Result<EigenDecomposition> {
    let mut a = symmetric_input(a)?;
    let n = a.rows();
    // rows of `vt` are the eigenvectors
    let mut vt = Matrix::identity(n);
    let threshold = JACOBI_TOLERANCE * a.frobenius_norm().max(1.0);

    let mut converged = false;
    for _sweep in 0..=MAX_JACOBI_SWEEPS {
        if off_diagonal_norm(&a) <= threshold {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                jacobi_rotate(&mut a, &mut vt, p, q);
            }
        }
    }
    if !converged {
        return Err(Error::NoConvergence(MAX_JACOBI_SWEEPS));
    }

    Ok(ordered_eigen(&a.diagonal(), &vt))
}

/// Sorts eigenpairs into descending order. `vt` holds one eigenvector per
/// row; each is signed so that its first entry of magnitude above 1e-12 is
/// positive.
fn ordered_eigen(values: &[f64], vt: &Matrix) -> EigenDecomposition {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
    let eigenvalues = order.iter().map(|&k| values[k]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let lead = vt.row(src).iter().copied().find(|x| x.abs() > 1e-12).unwrap_or(1.0);
        let sign = if lead < 0.0 { -1.0 } else { 1.0 };
        for r in 0..n {
            vectors[(r, dst)] = sign * vt[(src, r)];
        }
    }
    EigenDecomposition {
        eigenvalues,
        eigenvectors: vectors,
    }
}

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            s += a[(i, j)] * a[(i, j)];
        }
    }
    (2.0 * s).sqrt()
}

/// Annihilates `a[p][q]` with one plane rotation, accumulating it into the
/// rows of `vt`. Rows p and q are rotated in place, then mirrored into the
/// matching columns.
fn jacobi_rotate(a: &mut Matrix, vt: &mut Matrix, p: usize, q: usize) {
    let apq = a[(p, q)];
    if apq == 0.0 {
        return;
    }
    let n = a.rows();
    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
    let t = if theta.abs() > 1e150 {
        0.5 / theta
    } else {
        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    let app = a[(p, p)] - t * apq;
    let aqq = a[(q, q)] + t * apq;
    rotate_rows(a, p, q, c, -s);
    a[(p, p)] = app;
    a[(q, q)] = aqq;
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;
    for r in 0..n {
        if r != p && r != q {
            a[(r, p)] = a[(p, r)];
            a[(r, q)] = a[(q, r)];
        }
    }
    rotate_rows(vt, p, q, c, -s);
}

/// Eigenvalues only, in descending order, via Householder reduction to
/// tridiagonal form and implicit QL with Wilkinson-style shifts.
pub fn sym_eigenvalues(a: &Matrix) -> Result<Vec<f64>> {
    let mut a = symmetric_input(a)?;
    let (mut d, mut e) = tridiagonalize(&mut a);
    tridiagonal_ql(&mut d, &mut e, None)?;
    d.sort_by(|x, y| y.total_cmp(x));
    Ok(d)
}

/// Same contract as [`sym_eigen`], computed by Householder reduction to
/// tridiagonal form and implicit QL. Several times cheaper than Jacobi once
/// the dimension reaches a few dozen, with errors of order `ε·‖A‖`.
pub fn sym_eigen_ql(a: &Matrix) -> Result<EigenDecomposition> {
    let mut a = symmetric_input(a)?;
    let n = a.rows();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    // accumulates Qᵀ, then the eigenvectors, one per row
    let mut qt = Matrix::identity(n);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut row_mix = vec![0.0; n];
    for k in 0..n.saturating_sub(1) {
        let len = n - k - 1;
        let v = &mut v[..len];
        v.copy_from_slice(&a.data[k * n + k + 1..(k + 1) * n]);
        if len == 1 {
            e[k + 1] = v[0];
            continue;
        }
        let (beta, alpha) = householder(v);
        e[k + 1] = alpha;
        if beta == 0.0 {
            continue;
        }
        // trailing block S ← H·S·H with H = I − β·v·vᵀ
        let off = k + 1;
        let p = &mut p[..len];
        for (i, pi) in p.iter_mut().enumerate() {
            let r = (off + i) * n;
            *pi = beta * dot(&a.data[r + off..r + n], v);
        }
        let half = 0.5 * beta * dot(v, p);
        let w = &mut w[..len];
        for i in 0..len {
            w[i] = p[i] - half * v[i];
        }
        for i in 0..len {
            let r = (off + i) * n;
            let row = &mut a.data[r + off..r + n];
            axpy(-v[i], w, row);
            axpy(-w[i], v, row);
        }
        // Qᵀ ← H·Qᵀ
        row_mix.fill(0.0);
        for (i, &vi) in v.iter().enumerate() {
            axpy(vi, qt.row(off + i), &mut row_mix);
        }
        for (i, &vi) in v.iter().enumerate() {
            let r = (off + i) * n;
            axpy(-beta * vi, &row_mix, &mut qt.data[r..r + n]);
        }
    }
    for (i, di) in d.iter_mut().enumerate() {
        *di = a[(i, i)];
    }
    tridiagonal_ql(&mut d, &mut e, Some(&mut qt))?;
    Ok(ordered_eigen(&d, &qt))
}

/// Reduces a symmetric matrix (overwritten) to tridiagonal form, returning the
/// diagonal and the sub-diagonal (`e[i]` couples `i-1` and `i`, `e[0] = 0`).
fn tridiagonalize(a: &mut Matrix) -> (Vec<f64>, Vec<f64>) {
    let n = a.rows();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = 0.0;
        if l > 0 {
            let scale: f64 = (0..=l).map(|k| a[(i, k)].abs()).sum();
            if scale == 0.0 {
                e[i] = a[(i, l)];
            } else {
                for k in 0..=l {
                    a[(i, k)] /= scale;
                    h += a[(i, k)] * a[(i, k)];
                }
                let f = a[(i, l)];
                let g = if f >= 0.0 { -h.sqrt() } else { h.sqrt() };
                e[i] = scale * g;
                h -= f * g;
                a[(i, l)] = f - g;
                let mut f = 0.0;
                for j in 0..=l {
                    let mut g = 0.0;
                    for k in 0..=j {
                        g += a[(j, k)] * a[(i, k)];
                    }
                    for k in (j + 1)..=l {
                        g += a[(k, j)] * a[(i, k)];
                    }
                    e[j] = g / h;
                    f += e[j] * a[(i, j)];
                }
                let hh = f / (h + h);
                for j in 0..=l {
                    let f = a[(i, j)];
                    let g = e[j] - hh * f;
                    e[j] = g;
                    for k in 0..=j {
                        a[(j, k)] -= f * e[k] + g * a[(i, k)];
                    }
                }
            }
        } else {
            e[i] = a[(i, l)];
        }
        d[i] = h;
    }
    for (i, di) in d.iter_mut().enumerate() {
        *di = a[(i, i)];
    }
    (d, e)
}

/// Implicit QL on the tridiagonal `(d, e)`. When `rows` is given, the same
/// rotations are applied to its row pairs.
fn tridiagonal_ql(d: &mut [f64], e: &mut [f64], mut rows: Option<&mut Matrix>) -> Result<()> {
    let n = d.len();
    if n == 1 {
        return Ok(());
    }
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    // absolute floor so that clusters of zero eigenvalues still deflate
    let norm = d.iter().zip(e.iter()).map(|(x, y)| x.abs() + y.abs()).fold(0.0, f64::max);
    let floor = f64::EPSILON * f64::EPSILON * norm;

    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m < n - 1 {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd || e[m].abs() <= floor {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > MAX_QL_ITERATIONS {
                return Err(Error::NoConvergence(MAX_QL_ITERATIONS));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            for i in (l..m).rev() {
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                if let Some(m) = rows.as_deref_mut() {
                    rotate_rows(m, i, i + 1, c, -s);
                }
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// Replaces eigenvalues in `[-PSD_CLAMP·λ_max, 0)` with zero and rejects
/// anything more negative.
pub fn clamp_psd_eigenvalues(eigenvalues: &mut [f64]) -> Result<()> {
    let largest = eigenvalues.iter().fold(0.0_f64, |m, &v| m.max(v));
    let floor = -PSD_CLAMP * largest;
    for l in eigenvalues.iter_mut() {
        if *l < 0.0 {
            if *l < floor {
                return Err(Error::NotPsd {
                    eigenvalue: *l,
                    largest,
                });
            }
            *l = 0.0;
        }
    }
    Ok(())
}

/// Symmetric PSD square root `S` with `S·S = A`.
pub fn psd_sqrt(a: &Matrix) -> Result<Matrix> {
    let mut eig = sym_eigen(a)?;
    clamp_psd_eigenvalues(&mut eig.eigenvalues)?;
    Ok(eig.reconstruct_with(f64::sqrt))
}

pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::ShapeMismatch(format!(
            "cannot multiply {}x{} by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for k in 0..a.cols {
            let aik = a[(i, k)];
            if aik == 0.0 {
                continue;
            }
            for (o, &bkj) in out_row.iter_mut().zip(b.row(k)) {
                *o += aik * bkj;
            }
        }
    }
    if out.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidMatrix("product overflowed".into()));
    }
    Ok(out)
}

/// `Bᵀ · A · B` for symmetric `A`, returned exactly symmetric.
/// Dot product over four interleaved partial sums, combined in a fixed order.
#[inline]
pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len());
    let (x, y) = (&x[..n], &y[..n]);
    let mut acc = [0.0f64; 4];
    let mut xs = x.chunks_exact(4);
    let mut ys = y.chunks_exact(4);
    for (a, b) in (&mut xs).zip(&mut ys) {
        for k in 0..4 {
            acc[k] += a[k] * b[k];
        }
    }
    let mut tail = 0.0;
    for (a, b) in xs.remainder().iter().zip(ys.remainder()) {
        tail += a * b;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Dot products of two rows of `x` with two rows of `y`, ordered
/// `(x0·y0, x0·y1, x1·y0, x1·y1)`. Each is bitwise equal to [`dot`].
#[inline]
fn dot_2x2(x0: &[f64], x1: &[f64], y0: &[f64], y1: &[f64]) -> [f64; 4] {
    let mut acc = [[0.0f64; 4]; 4];
    let chunks = x0
        .chunks_exact(4)
        .zip(x1.chunks_exact(4))
        .zip(y0.chunks_exact(4).zip(y1.chunks_exact(4)));
    for ((a0, a1), (b0, b1)) in chunks {
        for k in 0..4 {
            acc[0][k] += a0[k] * b0[k];
            acc[1][k] += a0[k] * b1[k];
            acc[2][k] += a1[k] * b0[k];
            acc[3][k] += a1[k] * b1[k];
        }
    }
    let mut tail = [0.0f64; 4];
    for c in (x0.len() / 4 * 4)..x0.len() {
        tail[0] += x0[c] * y0[c];
        tail[1] += x0[c] * y1[c];
        tail[2] += x1[c] * y0[c];
        tail[3] += x1[c] * y1[c];
    }
    std::array::from_fn(|e| (acc[e][0] + acc[e][1]) + (acc[e][2] + acc[e][3]) + tail[e])
}

/// `X·Yᵀ`. Entry `(i, j)` is exactly `dot(X_i, Y_j)`, so `X·Xᵀ` comes out
/// bitwise symmetric.
pub(crate) fn mul_transposed(x: &Matrix, y: &Matrix) -> Result<Matrix> {
    if x.cols != y.cols {
        return Err(Error::ShapeMismatch(format!(
            "cannot form X·Yᵀ with {} and {} columns",
            x.cols, y.cols
        )));
    }
    let (m, n) = (x.rows, y.rows);
    let mut out = Matrix::zeros(m, n);
    let mut i = 0;
    while i + 1 < m {
        let (x0, x1) = (x.row(i), x.row(i + 1));
        let mut j = 0;
        while j + 1 < n {
            let d = dot_2x2(x0, x1, y.row(j), y.row(j + 1));
            out.data[i * n + j] = d[0];
            out.data[i * n + j + 1] = d[1];
            out.data[(i + 1) * n + j] = d[2];
            out.data[(i + 1) * n + j + 1] = d[3];
            j += 2;
        }
        if j < n {
            out.data[i * n + j] = dot(x0, y.row(j));
            out.data[(i + 1) * n + j] = dot(x1, y.row(j));
        }
        i += 2;
    }
    if i < m {
        for j in 0..n {
            out.data[i * n + j] = dot(x.row(i), y.row(j));
        }
    }
    Ok(out)
}

/// `y += alpha · x`.
#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Overwrites `x` with a Householder vector `v` and returns `(beta, alpha)`
/// such that `(I − beta·v·vᵀ)·x = alpha·e₁`.
fn householder(x: &mut [f64]) -> (f64, f64) {
    let sigma = dot(x, x).sqrt();
    if sigma == 0.0 {
        return (0.0, 0.0);
    }
    let x0 = x[0];
    let alpha = if x0 >= 0.0 { -sigma } else { sigma };
    x[0] = x0 - alpha;
    (1.0 / (sigma * (sigma + x0.abs())), alpha)
}

/// Householder reduction of an `m×n` matrix (`m ≥ n`, overwritten) to upper
/// bidiagonal form. Returns the diagonal and the superdiagonal.
fn bidiagonalize(a: &mut Matrix) -> (Vec<f64>, Vec<f64>) {
    let (m, n) = (a.rows, a.cols);
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n.saturating_sub(1)];
    let mut v = vec![0.0; m];
    let mut w = vec![0.0; n];
    let mut u = vec![0.0; n];
    for j in 0..n {
        let len = m - j;
        for i in 0..len {
            v[i] = a.data[(j + i) * n + j];
        }
        let (beta, alpha) = householder(&mut v[..len]);
        d[j] = alpha;
        if j + 1 == n {
            break;
        }
        if beta != 0.0 {
            let w = &mut w[..n - j - 1];
            w.fill(0.0);
            for (i, &vi) in v[..len].iter().enumerate() {
                let r = (j + i) * n;
                axpy(vi, &a.data[r + j + 1..r + n], w);
            }
            for (i, &vi) in v[..len].iter().enumerate() {
                let r = (j + i) * n;
                axpy(-beta * vi, w, &mut a.data[r + j + 1..r + n]);
            }
        }
        let u = &mut u[..n - j - 1];
        u.copy_from_slice(&a.data[j * n + j + 1..(j + 1) * n]);
        let (gamma, alpha) = householder(u);
        e[j] = alpha;
        if gamma != 0.0 {
            for i in (j + 1)..m {
                let row = &mut a.data[i * n + j + 1..(i + 1) * n];
                let s = dot(row, u);
                axpy(-gamma * s, u, row);
            }
        }
    }
    (d, e)
}

/// Rotation `(c, s, r)` with `c·f + s·g = r` and `−s·f + c·g = 0`.
fn givens(f: f64, g: f64) -> (f64, f64, f64) {
    if g == 0.0 {
        (1.0, 0.0, f)
    } else if f == 0.0 {
        (0.0, 1.0, g)
    } else {
        let sq = f * f + g * g;
        let r = if sq > f64::MIN_POSITIVE && sq.is_finite() { sq.sqrt() } else { f.hypot(g) };
        (f / r, g / r, r)
    }
}

/// Smaller singular value of the upper triangular `[[f, g], [0, h]]`.
fn smaller_singular_value(f: f64, g: f64, h: f64) -> f64 {
    let (fa, ga, ha) = (f.abs(), g.abs(), h.abs());
    let (lo, hi) = (fa.min(ha), fa.max(ha));
    if lo == 0.0 {
        return 0.0;
    }
    if ga < hi {
        let a = 1.0 + lo / hi;
        let t = (hi - lo) / hi;
        let u = (ga / hi) * (ga / hi);
        lo * (2.0 / ((a * a + u).sqrt() + (t * t + u).sqrt()))
    } else {
        let u = hi / ga;
        if u == 0.0 {
            return lo * hi / ga;
        }
        let a = 1.0 + lo / hi;
        let t = (hi - lo) / hi;
        let c = 1.0 / ((1.0 + (a * u) * (a * u)).sqrt() + (1.0 + (t * u) * (t * u)).sqrt());
        2.0 * lo * c * u
    }
}

/// Singular values of the upper bidiagonal matrix with diagonal `d` and
/// superdiagonal `e`, left unordered in `d`.
///
/// Implicit shifted QR sweeps on unreduced blocks. Entries below `ε·‖B‖` are
/// treated as zero, so the error is of order `ε·‖B‖` in absolute terms.
fn bidiagonal_qr(d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    if n <= 1 {
        return Ok(());
    }
    let norm = (0..n)
        .map(|i| d[i].abs() + e.get(i).map_or(0.0, |x| x.abs()))
        .fold(0.0, f64::max);
    let floor = f64::EPSILON * norm;
    let budget = MAX_QL_ITERATIONS * n;
    let mut sweeps = 0;
    let mut hi = n - 1;
    while hi > 0 {
        for i in 0..hi {
            if e[i].abs() <= floor || e[i].abs() <= f64::EPSILON * (d[i].abs() + d[i + 1].abs()) {
                e[i] = 0.0;
            }
        }
        while hi > 0 && e[hi - 1] == 0.0 {
            hi -= 1;
        }
        if hi == 0 {
            break;
        }
        let mut lo = hi - 1;
        while lo > 0 && e[lo - 1] != 0.0 {
            lo -= 1;
        }
        sweeps += 1;
        if sweeps > budget {
            return Err(Error::NoConvergence(budget));
        }

        // a negligible diagonal entry splits the block once its row or
        // column is rotated away
        if let Some(k) = (lo..=hi).find(|&k| d[k].abs() <= floor) {
            d[k] = 0.0;
            if k < hi {
                let mut f = e[k];
                e[k] = 0.0;
                for j in (k + 1)..=hi {
                    let (c, s, r) = givens(d[j], f);
                    d[j] = r;
                    if j < hi {
                        f = -s * e[j];
                        e[j] *= c;
                    }
                }
            } else {
                let mut f = e[hi - 1];
                e[hi - 1] = 0.0;
                for j in (lo..hi).rev() {
                    let (c, s, r) = givens(d[j], f);
                    d[j] = r;
                    if j > lo {
                        f = -s * e[j - 1];
                        e[j - 1] *= c;
                    }
                }
            }
            continue;
        }

        let mut shift = smaller_singular_value(d[hi - 1], e[hi - 1], d[hi]);
        if (shift / d[lo]).powi(2) < f64::EPSILON {
            shift = 0.0;
        }
        let mut f = (d[lo].abs() - shift) * (d[lo].signum() + shift / d[lo]);
        let mut g = e[lo];
        for i in lo..hi {
            let (cr, sr, r) = givens(f, g);
            if i > lo {
                e[i - 1] = r;
            }
            f = cr * d[i] + sr * e[i];
            e[i] = cr * e[i] - sr * d[i];
            g = sr * d[i + 1];
            d[i + 1] *= cr;
            let (cl, sl, r) = givens(f, g);
            d[i] = r;
            f = cl * e[i] + sl * d[i + 1];
            d[i + 1] = cl * d[i + 1] - sl * e[i];
            if i + 1 < hi {
                g = sl * e[i + 1];
                e[i + 1] *= cl;
            }
        }
        e[hi - 1] = f;
    }
    Ok(())
}

/// Singular values in descending order: Householder bidiagonalization, then
/// implicit QR on the bidiagonal. Absolute error is of order `ε·‖A‖`.
pub fn singular_values(a: &Matrix) -> Result<Vec<f64>> {
    let mut work = if a.rows >= a.cols { a.clone() } else { a.transpose() };
    let (mut d, mut e) = bidiagonalize(&mut work);
    bidiagonal_qr(&mut d, &mut e)?;
    let mut s: Vec<f64> = d.iter().map(|x| x.abs()).collect();
    s.sort_by(|x, y| y.total_cmp(x));
    Ok(s)
}

/// `A = U·diag(s)·Vᵀ` with orthogonal `U`, `V` and descending `s ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Svd {
    pub u: Matrix,
    pub singular_values: Vec<f64>,
    pub v: Matrix,
}

/// Row-pair rotation `rows p, q ← (c·p + s·q, −s·p + c·q)` of a row-major matrix.
fn rotate_rows(m: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let n = m.cols;
    let (head, tail) = m.data.split_at_mut(q * n);
    let rp = &mut head[p * n..(p + 1) * n];
    let rq = &mut tail[..n];
    for (x, y) in rp.iter_mut().zip(rq.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a + s * b;
        *y = c * b - s * a;
    }
}

/// Two-sided (Kogbetliantz) Jacobi SVD of a square matrix.
///
/// Each step makes a 2×2 block symmetric with one rotation and diagonalizes it
/// with a second, so `U` and `V` are products of plane rotations and stay
/// orthogonal to working precision whatever the rank. A bitwise symmetric
/// input keeps both rotation sequences identical, giving `U = V` exactly.
pub fn svd_jacobi(a: &Matrix) -> Result<Svd> {
    a.require_square()?;
    let n = a.rows;
    // rows of `ut`/`vt` are the columns of U/V
    let mut b = a.clone();
    let mut ut = Matrix::identity(n);
    let mut vt = Matrix::identity(n);
    let threshold = JACOBI_TOLERANCE * b.frobenius_norm();

    let mut converged = false;
    for _sweep in 0..=MAX_JACOBI_SWEEPS {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += b[(i, j)] * b[(i, j)];
                }
            }
        }
        if off.sqrt() <= threshold {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let (bpp, bpq, bqp, bqq) = (b[(p, p)], b[(p, q)], b[(q, p)], b[(q, q)]);
                if bpq == 0.0 && bqp == 0.0 {
                    continue;
                }
                // left rotation making the block symmetric
                let (c1, s1) = if bqp == bpq {
                    (1.0, 0.0)
                } else {
                    let t = (bqp - bpq).atan2(bpp + bqq);
                    (t.cos(), t.sin())
                };
                let x = c1 * bpp + s1 * bqp;
                let y = c1 * bpq + s1 * bqq;
                let z = c1 * bqq - s1 * bpq;
                // symmetric Jacobi rotation on [[x, y], [y, z]]
                let (c2, s2) = if y == 0.0 {
                    (1.0, 0.0)
                } else {
                    let theta = (z - x) / (2.0 * y);
                    let t = if theta.abs() > 1e150 {
                        0.5 / theta
                    } else {
                        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                    };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    (c, t * c)
                };
                let cg = c1 * c2 + s1 * s2;
                let sg = s1 * c2 - c1 * s2;
                rotate_rows(&mut b, p, q, cg, sg);
                for i in 0..n {
                    let (bp, bq) = (b[(i, p)], b[(i, q)]);
                    b[(i, p)] = c2 * bp - s2 * bq;
                    b[(i, q)] = s2 * bp + c2 * bq;
                }
                b[(p, q)] = 0.0;
                b[(q, p)] = 0.0;
                rotate_rows(&mut ut, p, q, cg, sg);
                rotate_rows(&mut vt, p, q, c2, -s2);
            }
        }
    }
    if !converged {
        return Err(Error::NoConvergence(MAX_JACOBI_SWEEPS));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| b[(j, j)].abs().total_cmp(&b[(i, i)].abs()));
    let mut u = Matrix::zeros(n, n);
    let mut v = Matrix::zeros(n, n);
    let mut singular_values = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        let value = b[(src, src)];
        let sign = if value < 0.0 { -1.0 } else { 1.0 };
        singular_values.push(value.abs());
        for r in 0..n {
            u[(r, dst)] = sign * ut[(src, r)];
            v[(r, dst)] = vt[(src, r)];
        }
    }
    Ok(Svd {
        u,
        singular_values,
        v,
    })
}

pub fn trace(a: &Matrix) -> Result<f64> {
    a.require_square()?;
    Ok(a.diagonal().iter().sum())
}
