//! Online clustering of the codebook: usage EMAs, decay factors, anchors, entry classes
//! and the low/high-level entry updates.

use crate::config::LevelPartition;
use crate::error::{Error, Result};
use crate::quantizer::split_distance;
use crate::types::{Codebook, FeatureBatch, Label, SemanticEmbeddingBank, UsageTracker};

/// Hits of one batch, per entry and per (entry, class).
#[derive(Debug, Clone, PartialEq)]
pub struct BatchHits {
    pub num_classes: usize,
    pub per_entry: Vec<u64>,
    /// K x C; unlabeled positions are not counted here.
    pub per_class: Vec<u64>,
}

impl BatchHits {
    pub fn tally(indices: &[usize], labels: &[Label], size: usize, num_classes: usize) -> BatchHits {
        let mut per_entry = vec![0u64; size];
        let mut per_class = vec![0u64; size * num_classes];
        for (&k, label) in indices.iter().zip(labels) {
            per_entry[k] += 1;
            if let Some(c) = *label {
                per_class[k * num_classes + c] += 1;
            }
        }
        BatchHits {
            num_classes,
            per_entry,
            per_class,
        }
    }

    pub fn total(&self) -> u64 {
        self.per_entry.iter().sum()
    }
}

/// `N_k <- γ N_k + (1 - γ) n_k / Bhw`; class histograms decay the same way, raw hits accumulate.
pub fn update_usage(tracker: &mut UsageTracker, hits: &BatchHits, positions: usize, gamma: f64) -> Result<()> {
    if hits.total() != positions as u64 || hits.per_entry.len() != tracker.size() {
        return Err(Error::CountMismatch {
            hits: hits.total(),
            positions,
        });
    }
    let p = positions as f64;
    for (n_k, &hit) in tracker.ema_usage.iter_mut().zip(&hits.per_entry) {
        *n_k = *n_k * gamma + (hit as f64 / p) * (1.0 - gamma);
    }
    for (h, &hit) in tracker.class_hist.iter_mut().zip(&hits.per_class) {
        *h = *h * gamma + (hit as f64 / p) * (1.0 - gamma);
    }
    for (r, &hit) in tracker.raw_hits.iter_mut().zip(&hits.per_class) {
        *r += hit;
    }
    Ok(())
}

/// Per-entry reset strength in (0, 1): near one for dead entries, near zero for busy ones.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayFactors(pub Vec<f64>);

/// `a_k = exp(-N_k K 10 / (1 - γ) - ε)`.
pub fn decay_factors(tracker: &UsageTracker, gamma: f64, epsilon: f64) -> DecayFactors {
    let k = tracker.size() as f64;
    DecayFactors(
        tracker
            .ema_usage
            .iter()
            .map(|n| (-n * k * 10.0 / (1.0 - gamma) - epsilon).exp())
            .collect(),
    )
}

/// For every entry, the batch feature closest to it.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    pub dim: usize,
    /// K x D copies of the anchor features.
    pub features: Vec<f64>,
    pub labels: Vec<Label>,
    pub source_position: Vec<usize>,
    pub distance: Vec<f64>,
}

impl AnchorSet {
    pub fn feature(&self, k: usize) -> &[f64] {
        &self.features[k * self.dim..(k + 1) * self.dim]
    }
}

/// Anchors under the multi-level distance; ties go to the earliest position.
/// Several entries may share an anchor.
pub fn select_anchors(
    batch: &FeatureBatch,
    codebook: &Codebook,
    beta: f64,
    partition: &LevelPartition,
) -> Result<AnchorSet> {
    let p_count = batch.positions();
    if p_count == 0 {
        return Err(Error::EmptyBatch);
    }
    if batch.dim != codebook.dim() || batch.dim != partition.code_dim() {
        return Err(Error::DimensionMismatch {
            expected: codebook.dim(),
            actual: batch.dim,
        });
    }
    let size = codebook.size();
    let h = partition.high_dim();
    let mut best = vec![0usize; size];
    let mut best_d = vec![f64::INFINITY; size];
    for p in 0..p_count {
        let e = batch.feature(p);
        for k in 0..size {
            let d = split_distance(e, codebook.row(k), beta, h);
            if d < best_d[k] {
                best_d[k] = d;
                best[k] = p;
            }
        }
    }
    let mut features = Vec::with_capacity(size * batch.dim);
    for &p in &best {
        features.extend_from_slice(batch.feature(p));
    }
    Ok(AnchorSet {
        dim: batch.dim,
        features,
        labels: best.iter().map(|&p| batch.labels[p]).collect(),
        source_position: best,
        distance: best_d,
    })
}

/// Sets each entry's class to the argmax of its class histogram (lowest id on ties),
/// or unlabeled when the histogram carries no mass.
pub fn assign_entry_classes(tracker: &UsageTracker, codebook: &mut Codebook) {
    for k in 0..codebook.size() {
        let hist = tracker.hist(k);
        let mut class = None;
        let mut best = 0.0;
        for (c, &m) in hist.iter().enumerate() {
            if m > best {
                best = m;
                class = Some(c);
            }
        }
        codebook.entry_class[k] = class;
    }
}

fn check_shapes(codebook: &Codebook, anchors: &AnchorSet, decays: &DecayFactors) -> Result<()> {
    if anchors.labels.len() != codebook.size() || decays.0.len() != codebook.size() {
        return Err(Error::DimensionMismatch {
            expected: codebook.size(),
            actual: anchors.labels.len().min(decays.0.len()),
        });
    }
    if anchors.dim != codebook.dim() {
        return Err(Error::DimensionMismatch {
            expected: codebook.dim(),
            actual: anchors.dim,
        });
    }
    if anchors.features.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("anchor"));
    }
    Ok(())
}

/// `c̃_k <- c̃_k (1 - a_k) + ẽ_k a_k` over the low-level coordinates.
pub fn apply_low_update(
    codebook: &mut Codebook,
    anchors: &AnchorSet,
    decays: &DecayFactors,
    partition: &LevelPartition,
) -> Result<()> {
    check_shapes(codebook, anchors, decays)?;
    let h = partition.high_dim();
    for k in 0..codebook.size() {
        let a = decays.0[k];
        let anchor = anchors.feature(k);
        for (c, e) in codebook.row_mut(k)[h..].iter_mut().zip(&anchor[h..]) {
            *c = *c * (1.0 - a) + e * a;
        }
    }
    Ok(())
}

/// High-level update.
///
/// With a bank and a labeled anchor of class `y`:
/// `ĉ_k <- ĉ_k (1 - a_k) + (ê_k a_k + W_y (1 - a_k)) a_k`, where `W_y` is restricted to the
/// high-level coordinates. Without a bank, or for an unlabeled anchor, the semantic term is
/// dropped and the update is the plain `ĉ_k (1 - a_k) + ê_k a_k`.
pub fn apply_high_update(
    codebook: &mut Codebook,
    anchors: &AnchorSet,
    decays: &DecayFactors,
    bank: Option<&SemanticEmbeddingBank>,
    partition: &LevelPartition,
) -> Result<()> {
    check_shapes(codebook, anchors, decays)?;
    let h = partition.high_dim();
    if let Some(bank) = bank {
        if let Some(&class) = anchors.labels.iter().flatten().find(|&&y| y >= bank.num_classes()) {
            return Err(Error::ClassOutOfRange {
                class,
                num_classes: bank.num_classes(),
            });
        }
        if bank.dim() < h {
            return Err(Error::DimensionMismatch {
                expected: h,
                actual: bank.dim(),
            });
        }
    }
    for k in 0..codebook.size() {
        let a = decays.0[k];
        let anchor = anchors.feature(k);
        let semantic = bank.zip(anchors.labels[k]).map(|(b, y)| &b.row(y)[..h]);
        let row = &mut codebook.row_mut(k)[..h];
        match semantic {
            Some(w) => {
                for ((c, e), w) in row.iter_mut().zip(&anchor[..h]).zip(w) {
                    *c = *c * (1.0 - a) + (e * a + w * (1.0 - a)) * a;
                }
            }
            None => {
                for (c, e) in row.iter_mut().zip(&anchor[..h]) {
                    *c = *c * (1.0 - a) + e * a;
                }
            }
        }
    }
    Ok(())
}
