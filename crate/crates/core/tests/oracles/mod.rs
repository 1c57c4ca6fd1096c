//! Brute-force reference implementations written straight from the definitions.
#![allow(dead_code)]

use sgcvq_core::semantic::cosface_loss;
use sgcvq_core::{Codebook, LevelPartition, SemanticEmbeddingBank};

pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `(e^{-αl} - e^{-αN}) / Σ_{j<N} (e^{-αj} - e^{-αN})` evaluated naively, levels 1-based.
pub fn level_weights(alpha: f64, n: usize) -> Vec<f64> {
    let tail = (-alpha * n as f64).exp();
    let raw: Vec<f64> = (1..=n).map(|l| (-alpha * l as f64).exp() - tail).collect();
    let z: f64 = raw[..n - 1].iter().sum();
    raw.iter().map(|r| r / z).collect()
}

/// Split distance: the first `high_dim` coordinates are weighted by `beta`.
pub fn distance(e: &[f64], c: &[f64], beta: f64, high_dim: usize) -> f64 {
    euclid(&e[high_dim..], &c[high_dim..]) + beta * euclid(&e[..high_dim], &c[..high_dim])
}

/// Index of the closest entry, first one on ties.
pub fn nearest(e: &[f64], entries: &[Vec<f64>], beta: f64, high_dim: usize) -> usize {
    let mut best = 0;
    for k in 1..entries.len() {
        if distance(e, &entries[k], beta, high_dim) < distance(e, &entries[best], beta, high_dim) {
            best = k;
        }
    }
    best
}

/// For each entry, the position of the closest feature, first one on ties.
pub fn anchors(features: &[Vec<f64>], entries: &[Vec<f64>], beta: f64, high_dim: usize) -> Vec<usize> {
    entries
        .iter()
        .map(|c| {
            let mut best = 0;
            for i in 1..features.len() {
                if distance(&features[i], c, beta, high_dim) < distance(&features[best], c, beta, high_dim) {
                    best = i;
                }
            }
            best
        })
        .collect()
}

pub fn silhouette(points: &[Vec<f64>], labels: &[usize]) -> f64 {
    let m = points.len();
    let mut total = 0.0;
    for i in 0..m {
        let same: Vec<usize> = (0..m).filter(|&j| j != i && labels[j] == labels[i]).collect();
        if same.is_empty() {
            continue;
        }
        let a = same.iter().map(|&j| euclid(&points[i], &points[j])).sum::<f64>() / same.len() as f64;
        let mut b = f64::INFINITY;
        let mut others: Vec<usize> = labels.iter().copied().filter(|&l| l != labels[i]).collect();
        others.sort_unstable();
        others.dedup();
        for c in others {
            let members: Vec<usize> = (0..m).filter(|&j| labels[j] == c).collect();
            let mean = members.iter().map(|&j| euclid(&points[i], &points[j])).sum::<f64>() / members.len() as f64;
            b = b.min(mean);
        }
        if a.max(b) > 0.0 {
            total += (b - a) / a.max(b);
        }
    }
    total / m as f64
}

pub fn davies_bouldin(points: &[Vec<f64>], labels: &[usize]) -> f64 {
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let dim = points[0].len();
    let stats: Vec<(Vec<f64>, f64)> = classes
        .iter()
        .map(|&c| {
            let members: Vec<&Vec<f64>> = points
                .iter()
                .zip(labels)
                .filter(|(_, &l)| l == c)
                .map(|(p, _)| p)
                .collect();
            let centroid: Vec<f64> = (0..dim)
                .map(|d| members.iter().map(|p| p[d]).sum::<f64>() / members.len() as f64)
                .collect();
            let scatter = members.iter().map(|p| euclid(p, &centroid)).sum::<f64>() / members.len() as f64;
            (centroid, scatter)
        })
        .collect();
    let n = stats.len();
    let mut total = 0.0;
    for i in 0..n {
        let mut worst = 0.0f64;
        for j in (0..n).filter(|&j| j != i) {
            let sep = euclid(&stats[i].0, &stats[j].0);
            if sep > 0.0 {
                worst = worst.max((stats[i].1 + stats[j].1) / sep);
            }
        }
        total += worst;
    }
    total / n as f64
}

/// Central finite differences of the angular loss: `(d/dW, d/d guided slice of each labeled entry)`.
pub fn fd_gradients(
    codebook: &Codebook,
    bank: &SemanticEmbeddingBank,
    partition: &LevelPartition,
    s: f64,
    m: f64,
    h: f64,
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let w = partition.weights();
    let loss = |cb: &Codebook, b: &SemanticEmbeddingBank| cosface_loss(cb, b, partition, w, s, m).unwrap();
    let mut grad_w = vec![0.0; bank.weights.len()];
    for (i, g) in grad_w.iter_mut().enumerate() {
        let (mut plus, mut minus) = (bank.clone(), bank.clone());
        plus.weights[i] += h;
        minus.weights[i] -= h;
        *g = (loss(codebook, &plus) - loss(codebook, &minus)) / (2.0 * h);
    }
    let mut grad_entries = Vec::new();
    for k in 0..codebook.size() {
        if codebook.entry_class[k].is_none() {
            continue;
        }
        let row: Vec<f64> = (0..partition.guided_dim())
            .map(|d| {
                let (mut plus, mut minus) = (codebook.clone(), codebook.clone());
                plus.row_mut(k)[d] += h;
                minus.row_mut(k)[d] -= h;
                (loss(&plus, bank) - loss(&minus, bank)) / (2.0 * h)
            })
            .collect();
        grad_entries.push(row);
    }
    (grad_w, grad_entries)
}

/// Largest componentwise error, relative to the largest gradient component.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = analytic
        .iter()
        .chain(numeric)
        .fold(0.0f64, |m, x| m.max(x.abs()))
        .max(1e-12);
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / scale)
        .fold(0.0, f64::max)
}
