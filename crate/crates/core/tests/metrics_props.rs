mod oracles;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sgcvq_core::metrics::{davies_bouldin, label_agreement, semantic_uniqueness, silhouette_score};
use sgcvq_core::{
    compute_level_weights, quantize, AggregationMode, BatchShape, Codebook, FeatureBatch, LevelPartition,
};

fn labeled_points() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<usize>)> {
    (2usize..50, 1usize..5, 2usize..5).prop_flat_map(|(m, dim, classes)| {
        (
            prop::collection::vec(prop::collection::vec(-3.0f64..3.0, dim), m),
            prop::collection::vec(0..classes, m),
        )
    })
}

fn flat(points: &[Vec<f64>]) -> Vec<f64> {
    points.iter().flatten().copied().collect()
}

fn two_classes(labels: &[usize]) -> bool {
    labels.iter().any(|&l| l != labels[0])
}

proptest! {
    #[test]
    fn silhouette_matches_oracle((points, labels) in labeled_points()) {
        prop_assume!(two_classes(&labels));
        let got = silhouette_score(&flat(&points), points[0].len(), &labels).unwrap();
        let want = oracles::silhouette(&points, &labels);
        prop_assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        prop_assert!((-1.0..=1.0).contains(&got));
    }

    #[test]
    fn dbi_matches_oracle((points, labels) in labeled_points()) {
        prop_assume!(two_classes(&labels));
        let got = davies_bouldin(&flat(&points), points[0].len(), &labels).unwrap();
        let want = oracles::davies_bouldin(&points, &labels);
        prop_assert!((got - want).abs() < 1e-9 * want.max(1.0), "{got} vs {want}");
        prop_assert!(got >= 0.0);
    }

    #[test]
    fn uniqueness_is_non_increasing(hits in prop::collection::vec(0u64..20, 4 * 6)) {
        let thresholds: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
        let u = semantic_uniqueness(&hits, 4, &thresholds);
        for w in u.windows(2) {
            prop_assert!(w[1].1 <= w[0].1);
        }
        prop_assert!(u.iter().all(|&(_, r)| (0.0..=1.0).contains(&r)));
    }

    #[test]
    fn level_weights_match_direct_evaluation(alpha in 0.01f64..5.0, n in 2usize..8) {
        let got = compute_level_weights(alpha, n);
        let want = oracles::level_weights(alpha, n);
        for (g, w) in got.as_slice().iter().zip(&want) {
            prop_assert!((g - w).abs() < 1e-9);
        }
        prop_assert!((got.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert_eq!(got.get(n - 1), 0.0);
        prop_assert!(got.as_slice().windows(2).all(|w| w[0] >= w[1]));
    }
}

#[test]
fn duplicated_separated_centroids_score_perfectly() {
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for c in 0..5 {
        let mut v = vec![0.0; 6];
        v[c] = 10.0;
        for _ in 0..4 {
            points.push(v.clone());
            labels.push(c);
        }
    }
    let ss = silhouette_score(&flat(&points), 6, &labels).unwrap();
    let dbi = davies_bouldin(&flat(&points), 6, &labels).unwrap();
    assert!(ss > 0.9, "{ss}");
    assert!(dbi < 0.1, "{dbi}");
}

fn agreement_setup(rng: &mut ChaCha8Rng, classes: usize, positions: usize) -> (Codebook, FeatureBatch, LevelPartition) {
    let k = 3 * classes;
    let dim = 4;
    let entries: Vec<f64> = (0..k * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut cb = Codebook::from_entries(k, dim, entries).unwrap();
    for (i, c) in cb.entry_class.iter_mut().enumerate() {
        *c = Some(i % classes);
    }
    let feats: Vec<f64> = (0..positions * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let labels = (0..positions).map(|_| Some(rng.random_range(0..classes))).collect();
    let batch = FeatureBatch::new(BatchShape::new(1, 1, positions), dim, feats, labels).unwrap();
    (cb, batch, LevelPartition::new(&[2, 2], 1.0, 0.5))
}

#[test]
fn agreement_is_scale_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let (cb, batch, p) = agreement_setup(&mut rng, 4, 64);
        let r = quantize(&batch, &cb, &p, 1.0, 0.25, AggregationMode::Concat).unwrap();
        let base = label_agreement(&r, &batch, &cb).unwrap();
        for scale in [0.01, 3.0, 1e4] {
            let mut sc = cb.clone();
            sc.entries.iter_mut().for_each(|x| *x *= scale);
            let mut sb = batch.clone();
            sb.features.iter_mut().for_each(|x| *x *= scale);
            let r2 = quantize(&sb, &sc, &p, 1.0, 0.25, AggregationMode::Concat).unwrap();
            assert_eq!(label_agreement(&r2, &sb, &sc).unwrap(), base);
        }
    }
}

#[test]
fn agreement_under_permuted_labels_is_chance() {
    let classes = 5;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (cb, mut batch, p) = agreement_setup(&mut rng, classes, 20_000);
    let r = quantize(&batch, &cb, &p, 1.0, 0.25, AggregationMode::Concat).unwrap();
    batch.labels.shuffle(&mut rng);
    let a = label_agreement(&r, &batch, &cb).unwrap();
    assert!((a - 1.0 / classes as f64).abs() < 0.02, "{a}");
}
