use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tsdist::analysis::{pairwise_matrix, PairwiseOptions};
use tsdist::ingest::{sample_windows, Series};
use tsdist::linalg::{sym_eigen, trace, Matrix};
use tsdist::svg::{colormap_level, level_for};
use tsdist::{
    kamada_kawai_layout, wasserstein_distance, DistanceMatrix, Metric, MvnParams, SampleMatrix,
    SamplingConfig, TimeSeriesDataset,
};

fn symmetric(n: usize, entries: &[f64]) -> Matrix {
    let mut a = Matrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in 0..=i {
            a[(i, j)] = entries[k];
            a[(j, i)] = entries[k];
            k += 1;
        }
    }
    a
}

fn dataset(name: &str, series: Vec<Vec<f64>>) -> TimeSeriesDataset {
    let series = series
        .into_iter()
        .enumerate()
        .map(|(i, values)| Series {
            id: format!("s{i}"),
            values,
        })
        .collect();
    TimeSeriesDataset::new(name, series).unwrap()
}

fn config(l: usize, n: usize, seed: u64) -> SamplingConfig {
    SamplingConfig {
        window_length: l,
        sample_count: n,
        seed,
        ..SamplingConfig::default()
    }
}

/// A synthetic sample matrix whose rows are random walks clipped to [0, 1].
fn synthetic(name: &str, l: usize, n: usize, rng: &mut ChaCha8Rng) -> SampleMatrix {
    let drift = rng.gen_range(-0.05..0.05);
    let mut data = Vec::with_capacity(n * l);
    for _ in 0..n {
        let mut v: f64 = rng.gen_range(0.2..0.8);
        for _ in 0..l {
            data.push(v.clamp(0.0, 1.0));
            v += drift + rng.gen_range(-0.1..0.1);
        }
    }
    SampleMatrix::new(name, Matrix::new(n, l, data).unwrap(), config(l, n, 0)).unwrap()
}

#[test]
fn start_offsets_are_uniform() {
    let (l, k, draws) = (8, 5, 100_000usize);
    let values: Vec<f64> = (0..l + k).map(|i| i as f64 / (l + k - 1) as f64).collect();
    let ds = dataset("uniform", vec![values.clone()]);
    let s = sample_windows(&ds, &config(l, draws, 42)).unwrap();
    let offsets = k + 1;
    let mut counts = vec![0usize; offsets];
    for row in s.data().row_iter() {
        let start = values.iter().position(|&v| v == row[0]).unwrap();
        assert_eq!(row, &values[start..start + l]);
        counts[start] += 1;
    }
    let p = 1.0 / offsets as f64;
    let expected = draws as f64 * p;
    let se = (draws as f64 * p * (1.0 - p)).sqrt();
    for (offset, &c) in counts.iter().enumerate() {
        assert!(
            (c as f64 - expected).abs() <= 3.0 * se,
            "offset {offset}: {c} draws, expected {expected} ± {}",
            3.0 * se
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eigen_trace_and_reconstruction(
        n in 1usize..9,
        entries in proptest::collection::vec(-10.0f64..10.0, 45),
    ) {
        let a = symmetric(n, &entries);
        let e = sym_eigen(&a).unwrap();
        let tr = trace(&a).unwrap();
        let sum: f64 = e.eigenvalues.iter().sum();
        prop_assert!((tr - sum).abs() <= 1e-9 * tr.abs().max(1.0));
        prop_assert!(e.reconstruct().max_abs_diff(&a).unwrap() <= 1e-8);
    }

    #[test]
    fn windows_are_verbatim_and_deterministic(
        lengths in proptest::collection::vec(1usize..40, 1..5),
        l in 2usize..10,
        seed in any::<u64>(),
    ) {
        prop_assume!(lengths.iter().any(|&n| n >= l));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let series: Vec<Vec<f64>> = lengths
            .iter()
            .map(|&n| (0..n).map(|_| rng.gen::<f64>()).collect())
            .collect();
        let ds = dataset("p", series.clone());
        let cfg = config(l, 30, seed);
        let a = sample_windows(&ds, &cfg).unwrap();
        let b = sample_windows(&ds, &cfg).unwrap();
        prop_assert_eq!(a.data(), b.data());
        for row in a.data().row_iter() {
            let found = series.iter().any(|s| s.windows(l).any(|w| w == row));
            prop_assert!(found);
        }
    }

    #[test]
    fn fitted_mvns_satisfy_metric_axioms(seed in any::<u64>(), l in 2usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fits: Vec<MvnParams> = ["a", "b", "c"]
            .iter()
            .map(|name| MvnParams::fit_rows(*name, synthetic(name, l, 60, &mut rng).data()).unwrap())
            .collect();
        let d = |i: usize, j: usize| wasserstein_distance(&fits[i], &fits[j]).unwrap();
        for i in 0..3 {
            prop_assert!(d(i, i) <= 1e-7);
            for j in 0..3 {
                prop_assert_eq!(d(i, j).to_bits(), d(j, i).to_bits());
                for k in 0..3 {
                    prop_assert!(d(i, k) <= d(i, j) + d(j, k) + 1e-6);
                }
            }
        }
    }

    #[test]
    fn heatmap_levels_are_monotone(a in 0.0f64..10.0, b in 0.0f64..10.0, lo in 0.0f64..1.0, span in 0.1f64..20.0) {
        let hi = lo + span;
        let (x, y) = if a <= b { (a, b) } else { (b, a) };
        let (lx, ly) = (level_for(x, lo, hi), level_for(y, lo, hi));
        prop_assert!(lx <= ly);
        let lum = |(r, g, b): (u8, u8, u8)| u32::from(r) + u32::from(g) + u32::from(b);
        prop_assert!(lum(colormap_level(lx)) <= lum(colormap_level(ly)));
    }

    #[test]
    fn embeddable_triangles_reach_zero_stress(
        p in proptest::collection::vec(-5.0f64..5.0, 6),
        seed in any::<u64>(),
    ) {
        let pts = [[p[0], p[1]], [p[2], p[3]], [p[4], p[5]]];
        let dist = |i: usize, j: usize| ((pts[i][0] - pts[j][0]).powi(2) + (pts[i][1] - pts[j][1]).powi(2)).sqrt();
        let (dmin, dmax) = (dist(0, 1).min(dist(0, 2)).min(dist(1, 2)), dist(0, 1).max(dist(0, 2)).max(dist(1, 2)));
        prop_assume!(dmin > 0.05 * dmax && dmax > 0.1);
        let mut v = Matrix::zeros(3, 3);
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    v[(i, j)] = dist(i.min(j), i.max(j));
                }
            }
        }
        let m = DistanceMatrix::new(vec!["a".into(), "b".into(), "c".into()], v, None).unwrap();
        let lc = kamada_kawai_layout(&m, seed).unwrap();
        prop_assert!(lc.final_stress <= 1e-6, "stress {}", lc.final_stress);
        prop_assert!(lc.stress_history.windows(2).all(|w| w[1] <= w[0]));
        for i in 0..3 {
            for j in (i + 1)..3 {
                prop_assert!((lc.distance(i, j) - m.get(i, j)).abs() <= 1e-3);
            }
        }
    }
}

#[test]
fn wasserstein_matrix_obeys_triangle_inequality() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let sets: Vec<SampleMatrix> = (0..7)
        .map(|i| synthetic(&format!("d{i}"), 12, 400, &mut rng))
        .collect();
    let m = pairwise_matrix(&sets, Metric::Wasserstein, &PairwiseOptions::default()).unwrap();
    for i in 0..m.len() {
        assert_eq!(m.get(i, i), 0.0);
        for j in 0..m.len() {
            for k in 0..m.len() {
                assert!(m.get(i, k) <= m.get(i, j) + m.get(j, k) + 1e-6);
            }
        }
    }
}
