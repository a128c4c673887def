use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use sfgraph::omp::reconstruct;
use sfgraph::sfg::AngleReport;
use sfgraph::synth::{generate, SynthSpec};
use sfgraph::{
    build_sfg, find_lcs, omp, reduce_matrix, select_representatives, AngleRule, FeatureMatrix,
    OmpConfig, SparseFeatureGraph,
};

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn least_squares(columns: &[&[f64]], target: &[f64]) -> Vec<f64> {
    let n = target.len();
    let a = DMatrix::from_fn(n, columns.len(), |i, k| columns[k][i]);
    let x = a
        .svd(true, true)
        .solve(&DVector::from_column_slice(target), 1e-14)
        .unwrap();
    x.iter().copied().collect()
}

#[test]
fn planted_three_sparse_reconstruction() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..50 {
        let cols: Vec<Vec<f64>> = (0..30).map(|_| unit(gaussian(&mut rng, 20))).collect();
        let dict = FeatureMatrix::from_columns(&cols).unwrap();
        let planted = rand::seq::index::sample(&mut rng, 30, 3).into_vec();
        let mut target = vec![0.0; 20];
        for &j in &planted {
            let c = rng.random_range(0.5..1.5) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            target
                .iter_mut()
                .zip(&cols[j])
                .for_each(|(t, a)| *t += c * a);
        }
        let target = unit(target);
        let rep = omp(&dict, &target, &OmpConfig::new(1e-8).unwrap()).unwrap();
        let mut support = rep.support.clone();
        support.sort_unstable();
        let mut want = planted.clone();
        want.sort_unstable();
        if support != want {
            continue;
        }
        let fit = reconstruct(&rep, &dict).unwrap();
        for (f, t) in fit.iter().zip(&target) {
            assert!((f - t).abs() <= 1e-8);
        }
        let oracle = least_squares(
            &rep.support
                .iter()
                .map(|&s| cols[s].as_slice())
                .collect::<Vec<_>>(),
            &target,
        );
        for (c, o) in rep.coefficients.iter().zip(&oracle) {
            assert!((c - o).abs() <= 1e-8);
        }
    }
}

#[test]
fn planted_two_mix_row() {
    let n = 40;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut cols: Vec<Vec<f64>> = (0..9).map(|_| unit(gaussian(&mut rng, n))).collect();
    let mix: Vec<f64> = (0..n)
        .map(|i| 0.5 * cols[0][i] + 0.5 * cols[1][i] + 1e-9 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    cols.push(mix);
    let features = FeatureMatrix::from_columns(&cols)
        .unwrap()
        .normalize_features()
        .matrix;
    let graph = build_sfg(&features, &OmpConfig::default()).unwrap();
    let row = graph.out_edges(9);
    assert!(
        row.iter().any(|e| e.0 == 0) && row.iter().any(|e| e.0 == 1),
        "{row:?}"
    );

    let oracle = least_squares(
        &[features.column(0), features.column(1)],
        features.column(9),
    );
    assert!((graph.weight(9, 0) - oracle[0]).abs() <= 1e-6);
    assert!((graph.weight(9, 1) - oracle[1]).abs() <= 1e-6);
    let angle = graph.representation_angle(&features, 9).unwrap();
    assert!(angle <= 1e-3, "angle {angle}");
}

#[test]
fn duplicate_angle_is_zero_and_empty_row_is_undefined() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = gaussian(&mut rng, 12);
    let b = gaussian(&mut rng, 12);
    let features = FeatureMatrix::from_columns(&[a.clone(), b, a])
        .unwrap()
        .normalize_features()
        .matrix;
    let graph = build_sfg(&features, &OmpConfig::default()).unwrap();
    assert!(graph.representation_angle(&features, 0).unwrap().abs() <= 1e-6);
    assert!(graph.representation_angle(&features, 2).unwrap().abs() <= 1e-6);

    let empty = SparseFeatureGraph::from_rows(3, vec![vec![]; 3], []).unwrap();
    assert_eq!(empty.representation_angle(&features, 1), None);
    let filtered = empty
        .filter_failed(&features, 0.1, AngleRule::FailAbove)
        .unwrap();
    assert_eq!(filtered.failed_nodes().len(), 3);
    let hist = empty.angle_histogram(&features, 6).unwrap();
    assert_eq!(hist.overflow, 3);
    assert!(hist.counts.iter().all(|&c| c == 0));
}

#[test]
fn all_duplicate_features_survive_a_tight_filter() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let base = gaussian(&mut rng, 15);
    let cols: Vec<Vec<f64>> = (1..=4)
        .map(|k| base.iter().map(|v| v * f64::from(k)).collect())
        .collect();
    let features = FeatureMatrix::from_columns(&cols)
        .unwrap()
        .normalize_features()
        .matrix;
    let graph = build_sfg(&features, &OmpConfig::default()).unwrap();
    let filtered = graph
        .filter_failed(&features, 0.1, AngleRule::FailAbove)
        .unwrap();
    assert!(filtered.failed_nodes().is_empty());
    assert_eq!(filtered.edge_count(), graph.edge_count());
}

#[test]
fn orthogonal_features_are_all_filtered() {
    let d = 5;
    let cols: Vec<Vec<f64>> = (0..d)
        .map(|j| (0..8).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let features = FeatureMatrix::from_columns(&cols).unwrap();
    let graph = build_sfg(&features, &OmpConfig::default()).unwrap();
    let filtered = graph
        .filter_failed(&features, 0.1, AngleRule::FailAbove)
        .unwrap();
    assert_eq!(filtered.failed_nodes().len(), d);
    assert_eq!(filtered.edge_count(), 0);
}

#[test]
fn filter_removes_exactly_the_noise_features() {
    for seed in 0..3 {
        let data = generate(&SynthSpec {
            n: 200,
            base_features: 10,
            duplicate_pairs: 10,
            noise_features: 10,
            seed,
            ..SynthSpec::default()
        })
        .unwrap();
        let features = data.matrix.normalize_features().matrix;
        let graph = build_sfg(&features, &OmpConfig::default()).unwrap();
        let filtered = graph
            .filter_failed(&features, 15f64.to_radians(), AngleRule::FailAbove)
            .unwrap();
        let failed: Vec<usize> = filtered.failed_nodes().iter().copied().collect();
        assert_eq!(failed, data.truth.noise, "seed {seed}");
    }
}

#[test]
fn uniform_angles_bin_like_a_direct_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let angles: Vec<Option<f64>> = (0..1000)
        .map(|_| Some(rng.random_range(0.0..std::f64::consts::FRAC_PI_2)))
        .collect();
    let report = AngleReport::new(angles.clone(), 10).unwrap();
    let mut direct = [0usize; 10];
    for a in angles.iter().flatten() {
        let k = (0..10).find(|&k| *a < report.bin_edges[k + 1]).unwrap_or(9);
        direct[k] += 1;
    }
    assert_eq!(report.counts, direct);
    assert_eq!(report.overflow, 0);
}

#[test]
fn planted_duplicate_pairs_keep_forty() {
    for seed in 0..3 {
        let data = generate(&SynthSpec {
            n: 200,
            base_features: 40,
            duplicate_pairs: 10,
            seed,
            ..SynthSpec::default()
        })
        .unwrap();
        assert_eq!(data.matrix.d(), 50);
        let features = data.matrix.normalize_features().matrix;
        let graph = build_sfg(&features, &OmpConfig::default())
            .unwrap()
            .filter_failed(&features, 15f64.to_radians(), AngleRule::FailAbove)
            .unwrap();
        let partition = find_lcs(&graph, 0.5).unwrap();
        let reduced = select_representatives(&partition, &graph, false);
        assert_eq!(reduced.kept.len(), 40, "seed {seed}");
        for dup in &data.truth.duplicates {
            let kept = [dup.column, dup.source]
                .iter()
                .filter(|v| reduced.kept.contains(v))
                .count();
            assert_eq!(kept, 1);
        }

        // canonical set: one member of each pair plus every unduplicated base
        let matrix = reduce_matrix(&data.matrix, &reduced).unwrap();
        assert_eq!(matrix.d(), 40);
        let mut canonical: Vec<Vec<f64>> =
            (0..40).map(|j| data.matrix.column(j).to_vec()).collect();
        let mut got: Vec<Vec<f64>> = matrix.columns().map(<[f64]>::to_vec).collect();
        canonical.sort_by(|a, b| a.partial_cmp(b).unwrap());
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got, canonical);
    }
}
