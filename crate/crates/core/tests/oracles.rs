//! Library results checked against independent, deliberately naive oracles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tsdist::baselines::{dtw_distance, linkage_summary};
use tsdist::linalg::{matmul, psd_sqrt, sym_eigen, trace, Matrix};
use tsdist::{wasserstein_distance, MvnParams};

/// Minimal cost over every monotone warping path, by plain recursion.
fn brute_force_dtw(x: &[f64], y: &[f64]) -> f64 {
    fn walk(x: &[f64], y: &[f64], i: usize, j: usize) -> f64 {
        let here = (x[i] - y[j]).abs();
        if i + 1 == x.len() && j + 1 == y.len() {
            return here;
        }
        let mut best = f64::INFINITY;
        if i + 1 < x.len() && j + 1 < y.len() {
            best = best.min(walk(x, y, i + 1, j + 1));
        }
        if i + 1 < x.len() {
            best = best.min(walk(x, y, i + 1, j));
        }
        if j + 1 < y.len() {
            best = best.min(walk(x, y, i, j + 1));
        }
        here + best
    }
    walk(x, y, 0, 0)
}

#[test]
fn dtw_matches_path_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..300 {
        let n = rng.gen_range(1..=7);
        let m = rng.gen_range(1..=7);
        let (x, y): (Vec<f64>, Vec<f64>) = if case % 2 == 0 {
            (
                (0..n).map(|_| rng.gen_range(-5..=5) as f64).collect(),
                (0..m).map(|_| rng.gen_range(-5..=5) as f64).collect(),
            )
        } else {
            (
                (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            )
        };
        let got = dtw_distance(&x, &y).unwrap();
        let want = brute_force_dtw(&x, &y);
        if case % 2 == 0 {
            assert_eq!(got, want, "{x:?} {y:?}");
        } else {
            assert!((got - want).abs() <= 1e-12, "{x:?} {y:?}: {got} vs {want}");
        }
        assert_eq!(got, dtw_distance(&y, &x).unwrap());
    }
}

fn random_rows(rng: &mut ChaCha8Rng, n: usize, l: usize) -> Matrix {
    Matrix::new(n, l, (0..n * l).map(|_| rng.gen::<f64>()).collect()).unwrap()
}

#[test]
fn linkage_matches_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..12 {
        let l = rng.gen_range(1..6);
        let (na, nb) = (rng.gen_range(1..150), rng.gen_range(1..150));
        let a = random_rows(&mut rng, na, l);
        let b = random_rows(&mut rng, nb, l);
        let (mut lo, mut hi, mut sum) = (f64::INFINITY, 0.0f64, 0.0);
        for x in a.row_iter() {
            for y in b.row_iter() {
                let d = x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
                lo = lo.min(d);
                hi = hi.max(d);
                sum += d;
            }
        }
        let avg = sum / (a.rows() * b.rows()) as f64;
        let s = linkage_summary(&a, &b).unwrap();
        assert_eq!(s.min, lo);
        assert_eq!(s.max, hi);
        assert!((s.avg - avg).abs() <= 1e-9 * avg);
        assert!(s.min <= s.avg && s.avg <= s.max);
    }
}

fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = rng.gen_range(-1.0..1.0);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    sym_eigen(&a).unwrap().eigenvectors
}

fn with_basis(q: &Matrix, diag: &[f64]) -> Matrix {
    let d = Matrix::from_diagonal(diag).unwrap();
    matmul(&matmul(q, &d).unwrap(), &q.transpose()).unwrap().symmetrized().unwrap()
}

#[test]
fn commuting_covariances_match_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..40 {
        let l = rng.gen_range(1..10);
        let q = random_orthogonal(&mut rng, l);
        let la: Vec<f64> = (0..l).map(|_| rng.gen_range(0.0..2.0)).collect();
        let lb: Vec<f64> = (0..l).map(|_| rng.gen_range(0.0..2.0)).collect();
        let ma: Vec<f64> = (0..l).map(|_| rng.gen::<f64>()).collect();
        let mb: Vec<f64> = (0..l).map(|_| rng.gen::<f64>()).collect();
        let a = MvnParams::new("a", ma.clone(), with_basis(&q, &la), 10).unwrap();
        let b = MvnParams::new("b", mb.clone(), with_basis(&q, &lb), 10).unwrap();
        let mean_part: f64 = ma.iter().zip(&mb).map(|(x, y)| (x - y) * (x - y)).sum();
        let cov_part: f64 = la.iter().zip(&lb).map(|(x, y)| (x.sqrt() - y.sqrt()).powi(2)).sum();
        let want = (mean_part + cov_part).sqrt();
        let got = wasserstein_distance(&a, &b).unwrap();
        assert!((got - want).abs() <= 1e-7, "{got} vs {want}");
    }
}

/// For 2x2 PSD `M`, `tr √M = √(tr M + 2√det M)`. With `M = √A B √A`,
/// `tr M = tr(AB)` and `det M = det A · det B`.
fn two_by_two_distance(ma: &[f64], a: &Matrix, mb: &[f64], b: &Matrix) -> f64 {
    let det = |m: &Matrix| m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let tr_ab = a[(0, 0)] * b[(0, 0)] + 2.0 * a[(0, 1)] * b[(0, 1)] + a[(1, 1)] * b[(1, 1)];
    let cross = (tr_ab + 2.0 * (det(a) * det(b)).max(0.0).sqrt()).sqrt();
    let mean: f64 = ma.iter().zip(mb).map(|(x, y)| (x - y) * (x - y)).sum();
    let tr = a[(0, 0)] + a[(1, 1)] + b[(0, 0)] + b[(1, 1)];
    (mean + tr - 2.0 * cross).max(0.0).sqrt()
}

#[test]
fn non_commuting_two_by_two() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let mut cov = || {
            let x: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
            let g = Matrix::new(2, 2, x.to_vec()).unwrap();
            matmul(&g, &g.transpose()).unwrap().symmetrized().unwrap()
        };
        let (a, b) = (cov(), cov());
        let ma = [rng.gen::<f64>(), rng.gen::<f64>()];
        let mb = [rng.gen::<f64>(), rng.gen::<f64>()];
        let pa = MvnParams::new("a", ma.to_vec(), a.clone(), 10).unwrap();
        let pb = MvnParams::new("b", mb.to_vec(), b.clone(), 10).unwrap();
        let got = wasserstein_distance(&pa, &pb).unwrap();
        let want = two_by_two_distance(&ma, &a, &mb, &b);
        assert!((got - want).abs() <= 1e-7, "{got} vs {want}");
    }
}

#[test]
fn translation_only_moves_the_mean_term() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let l = 6;
    let rows_a = random_rows(&mut rng, 300, l);
    let rows_b = random_rows(&mut rng, 300, l);
    let shift: Vec<f64> = (0..l).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let shifted: Vec<f64> = rows_a
        .row_iter()
        .flat_map(|r| r.iter().zip(&shift).map(|(v, c)| v + c).collect::<Vec<_>>())
        .collect();
    let rows_a2 = Matrix::new(300, l, shifted).unwrap();

    let a = MvnParams::fit_rows("a", &rows_a).unwrap();
    let a2 = MvnParams::fit_rows("a2", &rows_a2).unwrap();
    let b = MvnParams::fit_rows("b", &rows_b).unwrap();
    let d_old = wasserstein_distance(&a, &b).unwrap();
    let d_new = wasserstein_distance(&a2, &b).unwrap();
    let sq = |m1: &[f64], m2: &[f64]| m1.iter().zip(m2).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let moved: Vec<f64> = a.mean().iter().zip(&shift).map(|(m, c)| m + c).collect();
    let want = sq(&moved, b.mean()) - sq(a.mean(), b.mean());
    assert!((d_new * d_new - d_old * d_old - want).abs() <= 1e-7);

    // same covariance, so only the means separate them
    let d_self = wasserstein_distance(&a, &a2).unwrap();
    let norm = shift.iter().map(|c| c * c).sum::<f64>().sqrt();
    assert!((d_self - norm).abs() <= 1e-7, "{d_self} vs {norm}");
}

/// The textbook formula with Jacobi square roots, fine for well-conditioned
/// covariances.
fn via_matrix_roots(a: &MvnParams, b: &MvnParams) -> f64 {
    let s = psd_sqrt(a.cov()).unwrap();
    let m = matmul(&matmul(&s, b.cov()).unwrap(), &s).unwrap().symmetrized().unwrap();
    let cross = trace(&psd_sqrt(&m).unwrap()).unwrap();
    let mean: f64 = a.mean().iter().zip(b.mean()).map(|(x, y)| (x - y) * (x - y)).sum();
    let tr = trace(a.cov()).unwrap() + trace(b.cov()).unwrap();
    (mean + tr - 2.0 * cross).max(0.0).sqrt()
}

#[test]
fn full_covariances_match_matrix_roots() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..60 {
        let l = rng.gen_range(2..30);
        let mut spd = || {
            let g = random_rows(&mut rng, l + 5, l);
            let mut c = matmul(&g.transpose(), &g).unwrap().scaled(1.0 / (l + 5) as f64);
            for i in 0..l {
                c[(i, i)] += 0.05;
            }
            c.symmetrized().unwrap()
        };
        let (ca, cb) = (spd(), spd());
        let ma: Vec<f64> = (0..l).map(|_| rng.gen::<f64>()).collect();
        let mb: Vec<f64> = (0..l).map(|_| rng.gen::<f64>()).collect();
        let a = MvnParams::new("a", ma, ca, 10).unwrap();
        let b = MvnParams::new("b", mb, cb, 10).unwrap();
        let got = wasserstein_distance(&a, &b).unwrap();
        let want = via_matrix_roots(&a, &b);
        assert!((got - want).abs() <= 1e-9, "L={l}: {got} vs {want}");
    }
}
