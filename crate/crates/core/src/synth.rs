//! Deterministic labeled "encoded features".
//!
//! Class centroids live only in the guided coordinates; the unguided last level carries
//! class-independent detail noise. Every batch is a pure function of the spec, the batch
//! shape and a counter, so runs can be replayed and compared variant by variant.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::LevelPartition;
use crate::error::{Error, Result};
use crate::rng::{stream, StreamRng, DOMAIN_BATCH, DOMAIN_CENTROIDS, DOMAIN_DRIFT};
use crate::types::{norm, BatchShape, FeatureBatch};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureSpec {
    pub num_classes: usize,
    /// Empty means uniform.
    #[serde(default)]
    pub class_weights: Vec<f64>,
    /// Norm of each class centroid in the guided subspace.
    pub separation: f64,
    /// Isotropic noise std in the guided coordinates.
    pub within_spread: f64,
    /// Noise std in the unguided coordinates.
    pub detail_spread: f64,
    #[serde(default)]
    pub unlabeled_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

impl MixtureSpec {
    pub fn uniform(
        num_classes: usize,
        separation: f64,
        within_spread: f64,
        detail_spread: f64,
        seed: u64,
    ) -> MixtureSpec {
        MixtureSpec {
            num_classes,
            class_weights: Vec::new(),
            separation,
            within_spread,
            detail_spread,
            unlabeled_fraction: 0.0,
            seed,
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        if self.class_weights.is_empty() {
            vec![1.0 / self.num_classes as f64; self.num_classes]
        } else {
            self.class_weights.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 {
            return Err(Error::Spec("num_classes positive"));
        }
        let w = self.weights();
        if w.len() != self.num_classes {
            return Err(Error::Spec("class_weights length"));
        }
        if w.iter().any(|x| x.is_nan() || *x < 0.0) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::Spec("class_weights sum"));
        }
        if !(self.separation.is_finite() && self.separation > 0.0) {
            return Err(Error::Spec("separation positive"));
        }
        if !(self.within_spread >= 0.0 && self.within_spread.is_finite()) {
            return Err(Error::Spec("within_spread non-negative"));
        }
        if !(self.detail_spread >= 0.0 && self.detail_spread.is_finite()) {
            return Err(Error::Spec("detail_spread non-negative"));
        }
        if !(self.unlabeled_fraction >= 0.0 && self.unlabeled_fraction < 1.0) {
            return Err(Error::Spec("unlabeled_fraction range"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceSpec {
    pub mixture: MixtureSpec,
    pub frames: usize,
    /// Length of each centroid's random-walk step per frame.
    pub drift_rate: f64,
}

impl SequenceSpec {
    pub fn validate(&self) -> Result<()> {
        self.mixture.validate()?;
        if self.frames == 0 {
            return Err(Error::Spec("frames >= 1"));
        }
        if !(self.drift_rate >= 0.0 && self.drift_rate.is_finite()) {
            return Err(Error::Spec("drift_rate non-negative"));
        }
        Ok(())
    }
}

fn unit_vector(rng: &mut StreamRng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&v);
        if n > 0.0 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Sampler bound to a spec and a level partition.
#[derive(Debug, Clone)]
pub struct MixtureSampler {
    spec: MixtureSpec,
    cumulative: Vec<f64>,
    guided_dim: usize,
    code_dim: usize,
    base: Vec<f64>,
}

impl MixtureSampler {
    pub fn new(spec: &MixtureSpec, partition: &LevelPartition) -> Result<MixtureSampler> {
        spec.validate()?;
        let guided_dim = partition.guided_dim();
        let mut rng = stream(spec.seed, DOMAIN_CENTROIDS, 0);
        let mut base = Vec::with_capacity(spec.num_classes * guided_dim);
        for _ in 0..spec.num_classes {
            base.extend(
                unit_vector(&mut rng, guided_dim)
                    .into_iter()
                    .map(|x| x * spec.separation),
            );
        }
        let cumulative = spec
            .weights()
            .iter()
            .scan(0.0, |acc, w| {
                *acc += w;
                Some(*acc)
            })
            .collect();
        Ok(MixtureSampler {
            spec: spec.clone(),
            cumulative,
            guided_dim,
            code_dim: partition.code_dim(),
            base,
        })
    }

    pub fn spec(&self) -> &MixtureSpec {
        &self.spec
    }

    pub fn guided_dim(&self) -> usize {
        self.guided_dim
    }

    /// C x G centroids of the stationary mixture.
    pub fn centroids(&self) -> &[f64] {
        &self.base
    }

    /// Centroids after `frame` random-walk steps of length `drift_rate`.
    pub fn drifted_centroids(&self, frame: usize, drift_rate: f64) -> Vec<f64> {
        let mut c = self.base.clone();
        if drift_rate == 0.0 {
            return c;
        }
        for t in 1..=frame {
            let mut rng = stream(self.spec.seed, DOMAIN_DRIFT, t as u64);
            for row in c.chunks_mut(self.guided_dim) {
                for (x, u) in row.iter_mut().zip(unit_vector(&mut rng, self.guided_dim)) {
                    *x += drift_rate * u;
                }
            }
        }
        c
    }

    fn draw_class(&self, u: f64) -> usize {
        self.cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.spec.num_classes - 1)
    }

    /// Batch number `counter` drawn around `centroids` (C x G).
    pub fn sample_with(&self, shape: BatchShape, counter: u64, centroids: &[f64]) -> FeatureBatch {
        let mut rng = stream(self.spec.seed, DOMAIN_BATCH, counter);
        let p = shape.positions();
        let mut features = Vec::with_capacity(p * self.code_dim);
        let mut labels = Vec::with_capacity(p);
        for _ in 0..p {
            let class = self.draw_class(rng.random::<f64>());
            let mu = &centroids[class * self.guided_dim..(class + 1) * self.guided_dim];
            for m in mu {
                let z: f64 = rng.sample(StandardNormal);
                features.push(m + self.spec.within_spread * z);
            }
            for _ in self.guided_dim..self.code_dim {
                let z: f64 = rng.sample(StandardNormal);
                features.push(self.spec.detail_spread * z);
            }
            let unlabeled = rng.random::<f64>() < self.spec.unlabeled_fraction;
            labels.push(if unlabeled { None } else { Some(class) });
        }
        FeatureBatch {
            shape,
            dim: self.code_dim,
            features,
            labels,
            frame_index: None,
        }
    }

    pub fn sample(&self, shape: BatchShape, counter: u64) -> FeatureBatch {
        self.sample_with(shape, counter, &self.base)
    }
}

pub fn sample_batch(
    spec: &MixtureSpec,
    shape: BatchShape,
    partition: &LevelPartition,
    counter: u64,
) -> Result<FeatureBatch> {
    Ok(MixtureSampler::new(spec, partition)?.sample(shape, counter))
}

/// Frames `0..T`; frame `t` is batch counter `t` drawn around the centroids after `t` drift steps.
pub fn sample_sequence(
    spec: &SequenceSpec,
    shape: BatchShape,
    partition: &LevelPartition,
) -> Result<Vec<FeatureBatch>> {
    spec.validate()?;
    let sampler = MixtureSampler::new(&spec.mixture, partition)?;
    Ok((0..spec.frames)
        .map(|t| {
            let centroids = sampler.drifted_centroids(t, spec.drift_rate);
            let mut b = sampler.sample_with(shape, t as u64, &centroids);
            b.frame_index = Some(vec![t; shape.batch]);
            b
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn part() -> LevelPartition {
        LevelPartition::new(&[4, 4, 4, 4], 1.0, 0.5)
    }

    #[test]
    fn zero_noise_samples_sit_on_centroids() {
        let spec = MixtureSpec::uniform(3, 5.0, 0.0, 0.0, 11);
        let s = MixtureSampler::new(&spec, &part()).unwrap();
        let b = s.sample(BatchShape::new(2, 3, 3), 0);
        for p in 0..b.positions() {
            let c = b.labels[p].unwrap();
            assert_eq!(&b.feature(p)[..12], &s.centroids()[c * 12..(c + 1) * 12]);
            assert!(b.feature(p)[12..].iter().all(|&x| x == 0.0));
        }
        for c in 0..3 {
            assert!((norm(&s.centroids()[c * 12..(c + 1) * 12]) - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn class_frequencies_follow_weights() {
        let mut spec = MixtureSpec::uniform(3, 5.0, 1.0, 1.0, 3);
        spec.class_weights = vec![0.5, 0.3, 0.2];
        let b = sample_batch(&spec, BatchShape::new(1, 100, 100), &part(), 9).unwrap();
        for (c, w) in spec.class_weights.iter().enumerate() {
            let f = b.labels.iter().filter(|&&l| l == Some(c)).count() as f64 / 1e4;
            assert!((f - w).abs() < 0.02, "class {c}: {f}");
        }
    }

    #[test]
    fn same_seed_same_batch() {
        let spec = MixtureSpec::uniform(4, 5.0, 1.0, 2.0, 42);
        let a = sample_batch(&spec, BatchShape::new(2, 4, 4), &part(), 5).unwrap();
        let b = sample_batch(&spec, BatchShape::new(2, 4, 4), &part(), 5).unwrap();
        assert_eq!(a, b);
        let c = sample_batch(&spec, BatchShape::new(2, 4, 4), &part(), 6).unwrap();
        assert_ne!(a.features, c.features);
    }

    #[test]
    fn unlabeled_fraction_is_respected() {
        let mut spec = MixtureSpec::uniform(2, 5.0, 1.0, 1.0, 1);
        spec.unlabeled_fraction = 0.25;
        let b = sample_batch(&spec, BatchShape::new(1, 100, 100), &part(), 0).unwrap();
        let f = b.labels.iter().filter(|l| l.is_none()).count() as f64 / 1e4;
        assert!((f - 0.25).abs() < 0.02);
    }

    #[test]
    fn invalid_specs() {
        let mut spec = MixtureSpec::uniform(3, 5.0, 1.0, 1.0, 0);
        spec.class_weights = vec![0.5, 0.5, 0.5];
        assert!(matches!(spec.validate(), Err(Error::Spec("class_weights sum"))));
        spec.class_weights.clear();
        spec.within_spread = -1.0;
        assert!(spec.validate().is_err());
        let seq = SequenceSpec {
            mixture: MixtureSpec::uniform(3, 5.0, 1.0, 1.0, 0),
            frames: 0,
            drift_rate: 0.1,
        };
        assert!(matches!(seq.validate(), Err(Error::Spec("frames >= 1"))));
    }

    #[test]
    fn sequence_edge_cases() {
        let mixture = MixtureSpec::uniform(3, 5.0, 1.0, 1.0, 8);
        let shape = BatchShape::new(2, 2, 2);
        let one = sample_sequence(
            &SequenceSpec {
                mixture: mixture.clone(),
                frames: 1,
                drift_rate: 0.7,
            },
            shape,
            &part(),
        )
        .unwrap();
        let plain = sample_batch(&mixture, shape, &part(), 0).unwrap();
        assert_eq!(one[0].features, plain.features);
        assert_eq!(one[0].labels, plain.labels);
        assert_eq!(one[0].frame_index, Some(vec![0, 0]));

        let still = sample_sequence(
            &SequenceSpec {
                mixture,
                frames: 4,
                drift_rate: 0.0,
            },
            shape,
            &part(),
        )
        .unwrap();
        for (t, b) in still.iter().enumerate() {
            let reference = sample_batch(&MixtureSpec::uniform(3, 5.0, 1.0, 1.0, 8), shape, &part(), t as u64).unwrap();
            assert_eq!(b.features, reference.features);
        }
    }

    #[test]
    fn drift_grows_like_a_random_walk() {
        // E|X_T - X_0|^2 = T r^2 for T independent unit steps of length r.
        let p = part();
        let (frames, rate, seeds) = (64usize, 0.5, 200u64);
        let mut sq = 0.0;
        for seed in 0..seeds {
            let s = MixtureSampler::new(&MixtureSpec::uniform(1, 5.0, 1.0, 1.0, seed), &p).unwrap();
            let end = s.drifted_centroids(frames, rate);
            sq += end
                .iter()
                .zip(s.centroids())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
        let mean_sq = sq / seeds as f64;
        let expected = frames as f64 * rate * rate;
        assert!((mean_sq / expected - 1.0).abs() < 0.1, "{mean_sq} vs {expected}");
    }

    #[test]
    fn nearest_centroid_is_nearly_perfect_when_separated() {
        let p = part();
        let spec = MixtureSpec::uniform(8, 10.0, 0.5, 3.0, 2);
        let s = MixtureSampler::new(&spec, &p).unwrap();
        let held_out = s.sample(BatchShape::new(1, 50, 50), 1_000);
        let g = s.guided_dim();
        let mut correct = 0;
        for i in 0..held_out.positions() {
            let e = &held_out.feature(i)[..g];
            let best = (0..8)
                .min_by(|&a, &b| {
                    let da = crate::types::dist(e, &s.centroids()[a * g..(a + 1) * g]);
                    let db = crate::types::dist(e, &s.centroids()[b * g..(b + 1) * g]);
                    da.total_cmp(&db)
                })
                .unwrap();
            if Some(best) == held_out.labels[i] {
                correct += 1;
            }
        }
        assert!(correct as f64 / held_out.positions() as f64 > 0.99);
    }
}
