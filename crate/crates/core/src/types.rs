//! Shared state: codebook, feature batches, semantic embeddings and usage statistics.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// A semantic class id, or `None` for unlabeled.
pub type Label = Option<usize>;

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// K x D code vectors, row-major, with per-entry class and an update counter.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    size: usize,
    dim: usize,
    pub entries: Vec<f64>,
    pub entry_class: Vec<Label>,
    version: u64,
}

impl Codebook {
    pub fn from_entries(size: usize, dim: usize, entries: Vec<f64>) -> Result<Codebook> {
        if entries.len() != size * dim {
            return Err(Error::DimensionMismatch {
                expected: size * dim,
                actual: entries.len(),
            });
        }
        Ok(Codebook {
            size,
            dim,
            entries,
            entry_class: vec![None; size],
            version: 0,
        })
    }

    /// Entries drawn from U(-bound, bound), the customary VQ-GAN initialization with bound 1/K.
    pub fn uniform<R: Rng>(size: usize, dim: usize, bound: f64, rng: &mut R) -> Codebook {
        let entries = (0..size * dim).map(|_| rng.random_range(-bound..=bound)).collect();
        Codebook {
            size,
            dim,
            entries,
            entry_class: vec![None; size],
            version: 0,
        }
    }

    pub(crate) fn from_parts(
        size: usize,
        dim: usize,
        entries: Vec<f64>,
        entry_class: Vec<Label>,
        version: u64,
    ) -> Codebook {
        Codebook {
            size,
            dim,
            entries,
            entry_class,
            version,
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub(crate) fn bump_version(&mut self) {
        self.version += 1;
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.entries[k * self.dim..(k + 1) * self.dim]
    }

    pub fn row_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.entries[k * self.dim..(k + 1) * self.dim]
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|x| x.is_finite())
    }
}

/// Shape of a batch of feature maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct BatchShape {
    pub batch: usize,
    pub height: usize,
    pub width: usize,
}

impl BatchShape {
    pub fn new(batch: usize, height: usize, width: usize) -> BatchShape {
        BatchShape { batch, height, width }
    }

    pub fn positions(&self) -> usize {
        self.batch * self.height * self.width
    }

    pub fn positions_per_item(&self) -> usize {
        self.height * self.width
    }
}

/// B x h x w encoded feature vectors with per-position semantic labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBatch {
    pub shape: BatchShape,
    pub dim: usize,
    pub features: Vec<f64>,
    pub labels: Vec<Label>,
    /// Temporal position of each batch item, when the batch comes from a sequence.
    pub frame_index: Option<Vec<usize>>,
}

impl FeatureBatch {
    pub fn new(shape: BatchShape, dim: usize, features: Vec<f64>, labels: Vec<Label>) -> Result<FeatureBatch> {
        let p = shape.positions();
        if features.len() != p * dim {
            return Err(Error::DimensionMismatch {
                expected: p * dim,
                actual: features.len(),
            });
        }
        if labels.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                actual: labels.len(),
            });
        }
        Ok(FeatureBatch {
            shape,
            dim,
            features,
            labels,
            frame_index: None,
        })
    }

    pub fn positions(&self) -> usize {
        self.shape.positions()
    }

    pub fn feature(&self, p: usize) -> &[f64] {
        &self.features[p * self.dim..(p + 1) * self.dim]
    }

    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if self.positions() == 0 {
            return Err(Error::EmptyBatch);
        }
        if self.features.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("features"));
        }
        if let Some(class) = self.labels.iter().flatten().find(|&&c| c >= num_classes) {
            return Err(Error::ClassOutOfRange {
                class: *class,
                num_classes,
            });
        }
        Ok(())
    }
}

/// C unit-norm class embeddings over the guided subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticEmbeddingBank {
    num_classes: usize,
    dim: usize,
    pub weights: Vec<f64>,
}

impl SemanticEmbeddingBank {
    /// Rows drawn from a standard normal, then normalized.
    pub fn random<R: Rng>(num_classes: usize, dim: usize, rng: &mut R) -> SemanticEmbeddingBank {
        let weights = (0..num_classes * dim)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let mut bank = SemanticEmbeddingBank {
            num_classes,
            dim,
            weights,
        };
        bank.normalize_rows();
        bank
    }

    pub fn from_rows(num_classes: usize, dim: usize, weights: Vec<f64>) -> Result<SemanticEmbeddingBank> {
        if weights.len() != num_classes * dim {
            return Err(Error::DimensionMismatch {
                expected: num_classes * dim,
                actual: weights.len(),
            });
        }
        Ok(SemanticEmbeddingBank {
            num_classes,
            dim,
            weights,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, c: usize) -> &[f64] {
        &self.weights[c * self.dim..(c + 1) * self.dim]
    }

    pub fn row_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.weights[c * self.dim..(c + 1) * self.dim]
    }

    /// Zero rows are left as they are.
    pub fn normalize_rows(&mut self) {
        for c in 0..self.num_classes {
            let row = self.row_mut(c);
            let n = norm(row);
            if n > 0.0 {
                row.iter_mut().for_each(|x| *x /= n);
            }
        }
    }
}

/// Per-entry usage EMA, decayed class histograms and lifetime hit counts.
#[derive(Debug, Clone, PartialEq)]
pub struct UsageTracker {
    num_classes: usize,
    pub ema_usage: Vec<f64>,
    /// K x C, decayed with the usage EMA.
    pub class_hist: Vec<f64>,
    /// K x C, lifetime counts of labeled hits.
    pub raw_hits: Vec<u64>,
}

impl UsageTracker {
    pub fn new(size: usize, num_classes: usize) -> UsageTracker {
        UsageTracker {
            num_classes,
            ema_usage: vec![0.0; size],
            class_hist: vec![0.0; size * num_classes],
            raw_hits: vec![0; size * num_classes],
        }
    }

    pub(crate) fn from_parts(
        num_classes: usize,
        ema_usage: Vec<f64>,
        class_hist: Vec<f64>,
        raw_hits: Vec<u64>,
    ) -> UsageTracker {
        UsageTracker {
            num_classes,
            ema_usage,
            class_hist,
            raw_hits,
        }
    }

    pub fn size(&self) -> usize {
        self.ema_usage.len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn hist(&self, k: usize) -> &[f64] {
        &self.class_hist[k * self.num_classes..(k + 1) * self.num_classes]
    }

    pub fn hits(&self, k: usize) -> &[u64] {
        &self.raw_hits[k * self.num_classes..(k + 1) * self.num_classes]
    }
}
