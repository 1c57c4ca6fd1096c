//! Nearest-entry assignment under the multi-level distance, quantization loss terms,
//! and level aggregation.

use crate::config::{AggregationMode, LevelPartition};
use crate::error::{Error, Result};
use crate::types::{dist, dot, Codebook, FeatureBatch};

/// Floor applied to the unguided level's weight in linear aggregation, which would
/// otherwise drop it entirely.
pub const LINEAR_FLOOR: f64 = 1e-6;

/// Per-level guidance weights: strictly decreasing, summing to one, last level zero.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelWeights(Vec<f64>);

impl LevelWeights {
    /// Arbitrary weights, for ablations. No invariant is enforced.
    pub fn from_vec(w: Vec<f64>) -> LevelWeights {
        LevelWeights(w)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, l: usize) -> f64 {
        self.0[l]
    }
}

/// `w(l) = (e^{-αl} - e^{-αN}) / Σ_{j<N} (e^{-αj} - e^{-αN})` for levels `l = 1..N`.
///
/// Panics unless `alpha > 0` and `num_levels >= 2`.
pub fn compute_level_weights(alpha: f64, num_levels: usize) -> LevelWeights {
    assert!(alpha > 0.0, "alpha must be positive");
    assert!(num_levels >= 2, "need at least two levels");
    let n = num_levels as f64;
    // e^{-αl} - e^{-αN} = e^{-αN} * expm1(α(N - l)), exact even for tiny α.
    let tail = (-alpha * n).exp();
    let raw: Vec<f64> = (1..num_levels)
        .map(|l| tail * (alpha * (n - l as f64)).exp_m1())
        .collect();
    let total: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|x| x / total).collect();
    w.push(0.0);
    LevelWeights(w)
}

#[inline]
pub(crate) fn split_distance(e: &[f64], c: &[f64], beta: f64, high_dim: usize) -> f64 {
    let low = dist(&e[high_dim..], &c[high_dim..]);
    let high = dist(&e[..high_dim], &c[..high_dim]);
    low + beta * high
}

/// `‖ẽ - c̃‖ + β‖ê - ĉ‖` with plain (non-squared) Euclidean norms over the low and high slices.
pub fn multi_level_distance(e: &[f64], c: &[f64], beta: f64, partition: &LevelPartition) -> Result<f64> {
    let d = partition.code_dim();
    for v in [e, c] {
        if v.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: v.len(),
            });
        }
    }
    Ok(split_distance(e, c, beta, partition.high_dim()))
}

/// Output of [`quantize`].
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizationResult {
    pub indices: Vec<usize>,
    pub min_distance: Vec<f64>,
    /// Selected code vectors, P x D.
    pub quantized: Vec<f64>,
    /// Aggregated decoder input, P x `aggregated_dim`.
    pub aggregated: Vec<f64>,
    pub aggregated_dim: usize,
    /// `mean_p ‖sg[e_p] - c_{idx(p)}‖²`.
    pub codebook_loss: f64,
    /// `gamma_commit * mean_p ‖e_p - sg[c_{idx(p)}]‖²`.
    ///
    /// As values the two terms differ only by the weight; a host training framework
    /// routes the codebook term's gradient to the codes and the commitment term's gradient
    /// to the encoder, and copies the decoder gradient straight through the quantizer.
    pub commit_loss: f64,
}

impl QuantizationResult {
    pub fn hit_counts(&self, size: usize) -> Vec<u64> {
        let mut counts = vec![0u64; size];
        for &k in &self.indices {
            counts[k] += 1;
        }
        counts
    }
}

/// Index of the entry nearest to `e`; ties go to the lowest index.
#[inline]
pub(crate) fn nearest(e: &[f64], codebook: &Codebook, beta: f64, high_dim: usize) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for k in 0..codebook.size() {
        let d = split_distance(e, codebook.row(k), beta, high_dim);
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    (best, best_d)
}

pub fn quantize(
    batch: &FeatureBatch,
    codebook: &Codebook,
    partition: &LevelPartition,
    beta: f64,
    gamma_commit: f64,
    mode: AggregationMode,
) -> Result<QuantizationResult> {
    let d = partition.code_dim();
    if batch.dim != d || codebook.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: if batch.dim != d { batch.dim } else { codebook.dim() },
        });
    }
    let p_count = batch.positions();
    if p_count == 0 {
        return Err(Error::EmptyBatch);
    }
    if batch.features.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("features"));
    }
    let agg_dim = aggregated_dim(mode, partition)?;

    let mut indices = Vec::with_capacity(p_count);
    let mut min_distance = Vec::with_capacity(p_count);
    let mut quantized = Vec::with_capacity(p_count * d);
    let mut aggregated = Vec::with_capacity(p_count * agg_dim);
    let mut sq_err = 0.0;
    for p in 0..p_count {
        let e = batch.feature(p);
        let (k, md) = nearest(e, codebook, beta, partition.high_dim());
        let c = codebook.row(k);
        sq_err += e.iter().zip(c).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        indices.push(k);
        min_distance.push(md);
        quantized.extend_from_slice(c);
        aggregated.extend(aggregate(c, mode, partition)?);
    }
    let codebook_loss = sq_err / p_count as f64;
    Ok(QuantizationResult {
        indices,
        min_distance,
        quantized,
        aggregated,
        aggregated_dim: agg_dim,
        codebook_loss,
        commit_loss: gamma_commit * codebook_loss,
    })
}

/// Output width of `mode` for this partition.
pub fn aggregated_dim(mode: AggregationMode, partition: &LevelPartition) -> Result<usize> {
    match mode {
        AggregationMode::Concat => Ok(partition.code_dim()),
        AggregationMode::HighOnly => Ok(partition.high_dim()),
        AggregationMode::LowOnly => Ok(partition.code_dim() - partition.high_dim()),
        AggregationMode::Linear | AggregationMode::CrossAttention => {
            if partition.equal_levels() {
                Ok(partition.level(0).len())
            } else {
                Err(Error::UnequalLevels(mode.name()))
            }
        }
    }
}

/// Weights used by linear aggregation: the level weights with the last one floored, renormalized.
pub fn linear_weights(partition: &LevelPartition) -> Vec<f64> {
    let mut w = partition.weights().as_slice().to_vec();
    let last = w.len() - 1;
    w[last] = w[last].max(LINEAR_FLOOR);
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

/// Merges the level slices of one code vector.
pub fn aggregate(v: &[f64], mode: AggregationMode, partition: &LevelPartition) -> Result<Vec<f64>> {
    if v.len() != partition.code_dim() {
        return Err(Error::DimensionMismatch {
            expected: partition.code_dim(),
            actual: v.len(),
        });
    }
    let h = partition.high_dim();
    match mode {
        AggregationMode::Concat => Ok(v.to_vec()),
        AggregationMode::HighOnly => Ok(v[..h].to_vec()),
        AggregationMode::LowOnly => Ok(v[h..].to_vec()),
        AggregationMode::Linear => {
            let width = aggregated_dim(mode, partition)?;
            let mut out = vec![0.0; width];
            for (r, w) in partition.ranges().iter().zip(linear_weights(partition)) {
                for (o, x) in out.iter_mut().zip(&v[r.clone()]) {
                    *o += w * x;
                }
            }
            Ok(out)
        }
        AggregationMode::CrossAttention => {
            let width = aggregated_dim(mode, partition)?;
            let n = partition.num_levels();
            // Parameter-free attention over levels: the unguided level queries the others.
            let query = &v[partition.level(n - 1)];
            let scale = (width as f64).sqrt();
            let scores: Vec<f64> = (0..n - 1).map(|l| dot(query, &v[partition.level(l)]) / scale).collect();
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            let mut out = vec![0.0; width];
            for (l, e) in exps.iter().enumerate() {
                for (o, x) in out.iter_mut().zip(&v[partition.level(l)]) {
                    *o += e / z * x;
                }
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::types::BatchShape;

    fn partition(dims: &[usize]) -> LevelPartition {
        LevelPartition::new(dims, 1.0, 0.5)
    }

    fn batch_of(rows: &[Vec<f64>]) -> FeatureBatch {
        let dim = rows[0].len();
        let features = rows.iter().flatten().copied().collect();
        FeatureBatch::new(BatchShape::new(1, 1, rows.len()), dim, features, vec![None; rows.len()]).unwrap()
    }

    #[test]
    fn two_levels_give_all_weight_to_the_first() {
        for alpha in [0.1, 1.0, 7.5] {
            assert_eq!(compute_level_weights(alpha, 2).as_slice(), &[1.0, 0.0]);
        }
    }

    #[test]
    fn weights_at_alpha_one_four_levels() {
        // Frozen from a direct evaluation of the weight formula in exact arithmetic:
        // (e^-1 - e^-4, e^-2 - e^-4, e^-3 - e^-4) / their sum.
        let expected = [0.701_858_006_1, 0.234_953_315_3, 0.063_188_678_6, 0.0];
        let w = compute_level_weights(1.0, 4);
        for (a, b) in w.as_slice().iter().zip(expected) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        assert_eq!(w.get(3), 0.0);
        let p = partition(&[8, 8, 8, 8]);
        assert_eq!(p.num_high_levels(), 1);
        assert_eq!(p.high_dim() * 4, p.code_dim());
    }

    #[test]
    fn distance_cases() {
        let p = partition(&[2, 2]);
        let e = [1.0, 0.0, 1.0, 0.0];
        assert_eq!(multi_level_distance(&e, &e, 1.0, &p).unwrap(), 0.0);
        // first slice is high: 2 * 1 + 1
        assert_eq!(multi_level_distance(&e, &[0.0; 4], 2.0, &p).unwrap(), 3.0);
        let c = [5.0, 5.0, 1.0, 3.0];
        assert_eq!(multi_level_distance(&e, &c, 0.0, &p).unwrap(), 3.0);
        assert!(matches!(
            multi_level_distance(&e, &[0.0; 3], 1.0, &p),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn exact_rows_map_to_themselves() {
        let p = partition(&[2, 2]);
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|k| vec![k as f64, -(k as f64), 0.5 * k as f64, 1.0])
            .collect();
        let cb = Codebook::from_entries(5, 4, rows.iter().flatten().copied().collect()).unwrap();
        let r = quantize(&batch_of(&rows), &cb, &p, 1.0, 0.25, AggregationMode::Concat).unwrap();
        assert_eq!(r.indices, vec![0, 1, 2, 3, 4]);
        assert_eq!(r.codebook_loss, 0.0);
        assert_eq!(r.commit_loss, 0.0);
        assert_eq!(r.aggregated, r.quantized);
    }

    #[test]
    fn ties_go_to_the_lowest_index() {
        let p = partition(&[1, 1]);
        let cb = Codebook::from_entries(3, 2, vec![9.0, 9.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
        let r = quantize(
            &batch_of(&[vec![0.3, -2.0]]),
            &cb,
            &p,
            1.0,
            0.25,
            AggregationMode::Concat,
        )
        .unwrap();
        assert_eq!(r.indices, vec![1]);
    }

    #[test]
    fn rejects_bad_batches() {
        let p = partition(&[1, 1]);
        let cb = Codebook::from_entries(1, 2, vec![0.0, 0.0]).unwrap();
        let empty = FeatureBatch::new(BatchShape::new(0, 4, 4), 2, vec![], vec![]).unwrap();
        assert!(matches!(
            quantize(&empty, &cb, &p, 1.0, 0.25, AggregationMode::Concat),
            Err(Error::EmptyBatch)
        ));
        let nan = batch_of(&[vec![f64::NAN, 0.0]]);
        assert!(matches!(
            quantize(&nan, &cb, &p, 1.0, 0.25, AggregationMode::Concat),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn aggregation_modes() {
        let p = partition(&[2, 2, 2, 2]);
        let v: Vec<f64> = (0..8).map(|x| x as f64).collect();
        assert_eq!(aggregate(&v, AggregationMode::Concat, &p).unwrap(), v);
        assert_eq!(aggregate(&v, AggregationMode::HighOnly, &p).unwrap(), vec![0.0, 1.0]);
        assert_eq!(aggregate(&v, AggregationMode::LowOnly, &p).unwrap(), v[2..].to_vec());

        let same = [0.5, -2.0].repeat(4);
        let lin = aggregate(&same, AggregationMode::Linear, &p).unwrap();
        assert!((lin[0] - 0.5).abs() < 1e-15 && (lin[1] + 2.0).abs() < 1e-15);
        let w = linear_weights(&p);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(w[3] > 0.0);

        let mut attn_in = [1.0, 2.0].repeat(3);
        attn_in.extend([7.0, -3.0]);
        let att = aggregate(&attn_in, AggregationMode::CrossAttention, &p).unwrap();
        assert!((att[0] - 1.0).abs() < 1e-15 && (att[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn cross_attention_weights_follow_similarity() {
        let p = partition(&[1, 1, 1]);
        // query 1.0; keys 4 and -4: softmax(4, -4) ≈ (1, 0) -> output ≈ 4
        let out = aggregate(&[4.0, -4.0, 1.0], AggregationMode::CrossAttention, &p).unwrap();
        let e = (8.0f64).exp();
        let expected = (4.0 * e - 4.0) / (e + 1.0);
        assert!((out[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn unequal_levels_reject_width_preserving_modes() {
        let p = partition(&[3, 1]);
        let v = [0.0; 4];
        assert!(matches!(
            aggregate(&v, AggregationMode::Linear, &p),
            Err(Error::UnequalLevels("linear"))
        ));
        assert!(aggregate(&v, AggregationMode::CrossAttention, &p).is_err());
        assert!(aggregate(&v, AggregationMode::Concat, &p).is_ok());
    }

    fn brute_force(features: &[Vec<f64>], entries: &[Vec<f64>], beta: f64, high: usize) -> Vec<usize> {
        features
            .iter()
            .map(|e| {
                let dists: Vec<f64> = entries
                    .iter()
                    .map(|c| {
                        let mut lo = 0.0;
                        let mut hi = 0.0;
                        for i in 0..e.len() {
                            let s = (e[i] - c[i]).powi(2);
                            if i < high {
                                hi += s
                            } else {
                                lo += s
                            }
                        }
                        lo.sqrt() + beta * hi.sqrt()
                    })
                    .collect();
                let min = dists.iter().cloned().fold(f64::INFINITY, f64::min);
                dists.iter().position(|&d| d == min).unwrap()
            })
            .collect()
    }

    fn instance() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<Vec<f64>>, f64)> {
        (1usize..=16, 1usize..=64, 0.0f64..3.0).prop_flat_map(|(k, m, beta)| {
            (
                prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 4), m),
                prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 4), k),
                Just(beta),
            )
        })
    }

    proptest! {
        #[test]
        fn matches_exhaustive_search((feats, entries, beta) in instance()) {
            let p = partition(&[2, 2]);
            let cb = Codebook::from_entries(entries.len(), 4, entries.iter().flatten().copied().collect()).unwrap();
            let r = quantize(&batch_of(&feats), &cb, &p, beta, 0.25, AggregationMode::Concat).unwrap();
            prop_assert_eq!(r.indices, brute_force(&feats, &entries, beta, p.high_dim()));
        }

        #[test]
        fn argmin_is_scale_invariant((feats, entries, beta) in instance(), scale in 0.1f64..10.0) {
            let p = partition(&[2, 2]);
            let cb = Codebook::from_entries(entries.len(), 4, entries.iter().flatten().copied().collect()).unwrap();
            let scaled_cb = Codebook::from_entries(entries.len(), 4, cb.entries.iter().map(|x| x * scale).collect()).unwrap();
            let b = batch_of(&feats);
            let mut sb = b.clone();
            sb.features.iter_mut().for_each(|x| *x *= scale);
            let r1 = quantize(&b, &cb, &p, beta, 0.25, AggregationMode::Concat).unwrap();
            let r2 = quantize(&sb, &scaled_cb, &p, beta, 0.25, AggregationMode::Concat).unwrap();
            // Rounding can flip a near-tie; require agreement wherever the margin is clear.
            for (i, (a, b)) in r1.indices.iter().zip(&r2.indices).enumerate() {
                if a != b {
                    let da = multi_level_distance(b_feat(&feats, i), cb.row(*a), beta, &p).unwrap();
                    let db = multi_level_distance(b_feat(&feats, i), cb.row(*b), beta, &p).unwrap();
                    prop_assert!((da - db).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn zero_loss_iff_exact((feats, entries, beta) in instance()) {
            let p = partition(&[2, 2]);
            let cb = Codebook::from_entries(entries.len(), 4, entries.iter().flatten().copied().collect()).unwrap();
            let r = quantize(&batch_of(&feats), &cb, &p, beta, 0.25, AggregationMode::Concat).unwrap();
            let exact = r.quantized == batch_of(&feats).features;
            prop_assert_eq!(r.codebook_loss == 0.0, exact);
        }
    }

    fn b_feat(feats: &[Vec<f64>], i: usize) -> &[f64] {
        &feats[i]
    }
}
