//! Codebook health and clustering quality.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantizer::QuantizationResult;
use crate::types::{dist, Codebook, FeatureBatch, Label};

/// Uniqueness thresholds reported in every metrics row.
pub const UNIQUENESS_THRESHOLDS: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub step_index: u64,
    pub active_fraction: f64,
    pub perplexity: f64,
    /// `(threshold, ratio)` pairs in increasing threshold order.
    pub uniqueness: Vec<(f64, f64)>,
    /// `None` when fewer than two classes are present among labeled entries.
    pub silhouette: Option<f64>,
    pub dbi: Option<f64>,
    pub recon_mse: f64,
    pub recon_psnr_db: f64,
    pub label_agreement: Option<f64>,
}

fn group(labels: &[usize]) -> BTreeMap<usize, Vec<usize>> {
    let mut clusters: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        clusters.entry(l).or_default().push(i);
    }
    clusters
}

fn check_points(points: &[f64], dim: usize, labels: &[usize]) -> Result<()> {
    if dim == 0 || points.len() != labels.len() * dim {
        return Err(Error::DimensionMismatch {
            expected: labels.len() * dim,
            actual: points.len(),
        });
    }
    Ok(())
}

/// Mean silhouette `(b - a) / max(a, b)` over row-major `points`.
///
/// Points in singleton clusters, and points with `a = b = 0`, score 0.
pub fn silhouette_score(points: &[f64], dim: usize, labels: &[usize]) -> Result<f64> {
    check_points(points, dim, labels)?;
    let clusters = group(labels);
    if clusters.len() < 2 {
        return Err(Error::TooFewClusters);
    }
    let m = labels.len();
    let row = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut total = 0.0;
    for i in 0..m {
        let own = &clusters[&labels[i]];
        if own.len() == 1 {
            continue;
        }
        let a = own
            .iter()
            .filter(|&&j| j != i)
            .map(|&j| dist(row(i), row(j)))
            .sum::<f64>()
            / (own.len() - 1) as f64;
        let b = clusters
            .iter()
            .filter(|(&c, _)| c != labels[i])
            .map(|(_, members)| members.iter().map(|&j| dist(row(i), row(j))).sum::<f64>() / members.len() as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / m as f64)
}

/// Davies-Bouldin index: mean over clusters of `max_{j≠i} (S_i + S_j) / M_ij`, with `S` the
/// mean distance to the centroid and `M` the centroid distance. Coincident centroids
/// contribute 0, as in scikit-learn.
pub fn davies_bouldin(points: &[f64], dim: usize, labels: &[usize]) -> Result<f64> {
    check_points(points, dim, labels)?;
    let clusters = group(labels);
    if clusters.len() < 2 {
        return Err(Error::TooFewClusters);
    }
    let row = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut centroids = Vec::with_capacity(clusters.len());
    let mut scatter = Vec::with_capacity(clusters.len());
    for members in clusters.values() {
        let mut c = vec![0.0; dim];
        for &j in members {
            for (ci, x) in c.iter_mut().zip(row(j)) {
                *ci += x;
            }
        }
        c.iter_mut().for_each(|x| *x /= members.len() as f64);
        scatter.push(members.iter().map(|&j| dist(row(j), &c)).sum::<f64>() / members.len() as f64);
        centroids.push(c);
    }
    let n = centroids.len();
    let mut total = 0.0;
    for i in 0..n {
        let mut worst: f64 = 0.0;
        for j in 0..n {
            if i == j {
                continue;
            }
            let sep = dist(&centroids[i], &centroids[j]);
            if sep > 0.0 {
                worst = worst.max((scatter[i] + scatter[j]) / sep);
            }
        }
        total += worst;
    }
    Ok(total / n as f64)
}

/// Labeled codebook entries as `(points, labels)`, for the clustering scores.
pub fn labeled_entries(codebook: &Codebook) -> (Vec<f64>, Vec<usize>) {
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for k in 0..codebook.size() {
        if let Some(c) = codebook.entry_class[k] {
            points.extend_from_slice(codebook.row(k));
            labels.push(c);
        }
    }
    (points, labels)
}

/// Fraction of all K entries whose dominant-class share of lifetime hits exceeds each
/// threshold (strictly). Entries without hits count as non-unique.
pub fn semantic_uniqueness(raw_hits: &[u64], num_classes: usize, thresholds: &[f64]) -> Vec<(f64, f64)> {
    let size = raw_hits.len() / num_classes;
    let purity: Vec<f64> = raw_hits
        .chunks(num_classes)
        .map(|h| {
            let total: u64 = h.iter().sum();
            if total == 0 {
                0.0
            } else {
                *h.iter().max().unwrap() as f64 / total as f64
            }
        })
        .collect();
    thresholds
        .iter()
        .map(|&t| {
            let n = purity.iter().filter(|&&p| p > t).count();
            (t, n as f64 / size as f64)
        })
        .collect()
}

/// Per-entry hit counts of the most recent steps.
#[derive(Debug, Clone, PartialEq)]
pub struct HitWindow {
    capacity: usize,
    size: usize,
    steps: VecDeque<Vec<u64>>,
}

impl HitWindow {
    pub fn new(size: usize, capacity: usize) -> HitWindow {
        HitWindow {
            capacity: capacity.max(1),
            size,
            steps: VecDeque::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, hits: Vec<u64>) {
        debug_assert_eq!(hits.len(), self.size);
        if self.steps.len() == self.capacity {
            self.steps.pop_front();
        }
        self.steps.push_back(hits);
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn totals(&self) -> Vec<u64> {
        let mut t = vec![0u64; self.size];
        for s in &self.steps {
            for (a, b) in t.iter_mut().zip(s) {
                *a += b;
            }
        }
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UsageStats {
    pub active_fraction: f64,
    pub perplexity: f64,
}

/// Active fraction and `exp(-Σ p log p)` of the window's hit distribution.
pub fn usage_report(window: &HitWindow) -> Result<UsageStats> {
    let totals = window.totals();
    let sum: u64 = totals.iter().sum();
    if window.is_empty() || sum == 0 {
        return Err(Error::EmptyWindow);
    }
    let active = totals.iter().filter(|&&h| h > 0).count();
    let entropy: f64 = totals
        .iter()
        .filter(|&&h| h > 0)
        .map(|&h| {
            let p = h as f64 / sum as f64;
            -p * p.ln()
        })
        .sum();
    Ok(UsageStats {
        active_fraction: active as f64 / totals.len() as f64,
        perplexity: entropy.exp(),
    })
}

/// Fraction of labeled positions whose assigned entry carries the same class.
/// Positions with an unlabeled feature or an unlabeled entry are ignored.
pub fn label_agreement(result: &QuantizationResult, batch: &FeatureBatch, codebook: &Codebook) -> Result<f64> {
    agreement(&result.indices, &batch.labels, &codebook.entry_class)
}

pub(crate) fn agreement(indices: &[usize], labels: &[Label], entry_class: &[Label]) -> Result<f64> {
    let mut eligible = 0usize;
    let mut agree = 0usize;
    for (&k, &label) in indices.iter().zip(labels) {
        if let (Some(y), Some(c)) = (label, entry_class[k]) {
            eligible += 1;
            if y == c {
                agree += 1;
            }
        }
    }
    if eligible == 0 {
        return Err(Error::NoEligiblePositions);
    }
    Ok(agree as f64 / eligible as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reconstruction {
    pub mse: f64,
    /// `+inf` when the error is zero, `-inf` for a constant input with non-zero error.
    pub psnr_db: f64,
}

/// Mean squared error and PSNR with peak = max - min over the input values.
pub fn reconstruction_metrics(input: &[f64], output: &[f64]) -> Result<Reconstruction> {
    if input.len() != output.len() || input.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: input.len(),
            actual: output.len(),
        });
    }
    let mse = input.iter().zip(output).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / input.len() as f64;
    let (lo, hi) = input.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
        (lo.min(x), hi.max(x))
    });
    let peak = hi - lo;
    let psnr_db = if mse == 0.0 {
        f64::INFINITY
    } else if peak == 0.0 {
        f64::NEG_INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    };
    Ok(Reconstruction { mse, psnr_db })
}
