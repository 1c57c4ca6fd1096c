//! Angular (additive cosine margin) learning of the semantic embeddings and of the
//! guided slices of labeled codebook entries.
//!
//! For every guided level `l` with weight `w(l) > 0`, each labeled entry `i` of class `y`
//! contributes
//!
//! ```text
//! L_{l,i} = -log( e^{s(cos θ_y - m)} / (e^{s(cos θ_y - m)} + Σ_{j≠y} e^{s cos θ_j}) )
//! ```
//!
//! where `θ_j` is the angle between the entry's level-`l` slice and the level-`l` block of
//! `W_j`. The total is `Σ_l w(l) · mean_i L_{l,i}`. Gradients are derived in closed form
//! through the cosine normalization; see [`cosface_gradients`].

use crate::config::LevelPartition;
use crate::error::{Error, Result};
use crate::quantizer::LevelWeights;
use crate::types::{dot, norm, Codebook, SemanticEmbeddingBank};

/// Gradients of a semantic loss.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerGrads {
    /// C x G.
    pub grad_w: Vec<f64>,
    /// Entries that took part, in codebook order.
    pub entries: Vec<usize>,
    /// One G-wide row per element of `entries`.
    pub grad_entries: Vec<f64>,
    /// (level, entry) slices skipped for having zero norm.
    pub skipped_zero_norm: usize,
}

impl LearnerGrads {
    pub fn is_finite(&self) -> bool {
        self.grad_w.iter().chain(&self.grad_entries).all(|x| x.is_finite())
    }
}

/// Extension point for alternative metric-learning objectives over the codebook.
pub trait SemanticLoss {
    fn name(&self) -> &'static str;

    fn loss(
        &self,
        codebook: &Codebook,
        bank: &SemanticEmbeddingBank,
        partition: &LevelPartition,
        weights: &LevelWeights,
    ) -> Result<f64>;

    fn gradients(
        &self,
        codebook: &Codebook,
        bank: &SemanticEmbeddingBank,
        partition: &LevelPartition,
        weights: &LevelWeights,
    ) -> Result<LearnerGrads>;
}

/// Additive cosine margin loss with a fixed scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosFace {
    pub scale: f64,
    pub margin: f64,
}

impl SemanticLoss for CosFace {
    fn name(&self) -> &'static str {
        "cosface"
    }

    fn loss(
        &self,
        codebook: &Codebook,
        bank: &SemanticEmbeddingBank,
        partition: &LevelPartition,
        weights: &LevelWeights,
    ) -> Result<f64> {
        evaluate(codebook, bank, partition, weights, self.scale, self.margin, false).map(|(l, _)| l)
    }

    fn gradients(
        &self,
        codebook: &Codebook,
        bank: &SemanticEmbeddingBank,
        partition: &LevelPartition,
        weights: &LevelWeights,
    ) -> Result<LearnerGrads> {
        evaluate(codebook, bank, partition, weights, self.scale, self.margin, true)
            .map(|(_, g)| g.expect("gradients requested"))
    }
}

pub fn cosface_loss(
    codebook: &Codebook,
    bank: &SemanticEmbeddingBank,
    partition: &LevelPartition,
    weights: &LevelWeights,
    s: f64,
    m: f64,
) -> Result<f64> {
    CosFace { scale: s, margin: m }.loss(codebook, bank, partition, weights)
}

/// Closed-form gradient of [`cosface_loss`] with respect to the raw rows of `W` and the
/// guided slices of the labeled entries.
///
/// With `p = softmax(z)`, `∂L/∂cos_j = s (p_j - [j = y])`, and for `cos = x·v / (|x||v|)`:
/// `∂cos/∂x = (v̂ - cos x̂) / |x|`, `∂cos/∂v = (x̂ - cos v̂) / |v|`.
pub fn cosface_gradients(
    codebook: &Codebook,
    bank: &SemanticEmbeddingBank,
    partition: &LevelPartition,
    weights: &LevelWeights,
    s: f64,
    m: f64,
) -> Result<LearnerGrads> {
    CosFace { scale: s, margin: m }.gradients(codebook, bank, partition, weights)
}

fn evaluate(
    codebook: &Codebook,
    bank: &SemanticEmbeddingBank,
    partition: &LevelPartition,
    weights: &LevelWeights,
    s: f64,
    m: f64,
    want_grads: bool,
) -> Result<(f64, Option<LearnerGrads>)> {
    let g_dim = partition.guided_dim();
    if bank.dim() != g_dim {
        return Err(Error::DimensionMismatch {
            expected: g_dim,
            actual: bank.dim(),
        });
    }
    let classes = bank.num_classes();
    let labeled: Vec<(usize, usize)> = codebook
        .entry_class
        .iter()
        .enumerate()
        .filter_map(|(k, c)| c.map(|c| (k, c)))
        .collect();
    if labeled.is_empty() {
        return Err(Error::NoLabeledEntries);
    }
    if let Some(&(_, class)) = labeled.iter().find(|&&(_, c)| c >= classes) {
        return Err(Error::ClassOutOfRange {
            class,
            num_classes: classes,
        });
    }

    let mut grads = want_grads.then(|| LearnerGrads {
        grad_w: vec![0.0; classes * g_dim],
        entries: labeled.iter().map(|&(k, _)| k).collect(),
        grad_entries: vec![0.0; labeled.len() * g_dim],
        skipped_zero_norm: 0,
    });
    let mut total = 0.0;
    let mut skipped = 0;
    let mut used_any = false;
    let mut z = vec![0.0; classes];
    let mut cos = vec![0.0; classes];
    let mut vnorm = vec![0.0; classes];

    for l in 0..partition.num_levels() - 1 {
        let w_l = weights.get(l);
        if w_l <= 0.0 {
            continue;
        }
        let r = partition.level(l);
        for (c, vn) in vnorm.iter_mut().enumerate() {
            *vn = norm(&bank.row(c)[r.clone()]);
        }
        let included: Vec<(usize, usize, usize)> = labeled
            .iter()
            .enumerate()
            .filter(|(_, &(k, _))| norm(&codebook.row(k)[r.clone()]) > 0.0)
            .map(|(slot, &(k, y))| (slot, k, y))
            .collect();
        skipped += labeled.len() - included.len();
        if included.is_empty() {
            continue;
        }
        used_any = true;
        let coef = w_l / included.len() as f64;
        for &(slot, k, y) in &included {
            let x = &codebook.row(k)[r.clone()];
            let xn = norm(x);
            for c in 0..classes {
                let v = &bank.row(c)[r.clone()];
                cos[c] = if vnorm[c] > 0.0 {
                    dot(x, v) / (xn * vnorm[c])
                } else {
                    0.0
                };
                z[c] = s * cos[c] - if c == y { s * m } else { 0.0 };
            }
            let zmax = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum_exp: f64 = z.iter().map(|zi| (zi - zmax).exp()).sum();
            let lse = zmax + sum_exp.ln();
            total += coef * (lse - z[y]);

            if let Some(g) = grads.as_mut() {
                let gx = &mut g.grad_entries[slot * g_dim..(slot + 1) * g_dim][r.clone()];
                for c in 0..classes {
                    if vnorm[c] == 0.0 {
                        continue;
                    }
                    let p = (z[c] - lse).exp();
                    let dcos = coef * s * (p - if c == y { 1.0 } else { 0.0 });
                    let v = &bank.row(c)[r.clone()];
                    for (gi, (xi, vi)) in gx.iter_mut().zip(x.iter().zip(v)) {
                        *gi += dcos * (vi / vnorm[c] - cos[c] * xi / xn) / xn;
                    }
                    let gw = &mut g.grad_w[c * g_dim..(c + 1) * g_dim][r.clone()];
                    for (gi, (xi, vi)) in gw.iter_mut().zip(x.iter().zip(v)) {
                        *gi += dcos * (xi / xn - cos[c] * vi / vnorm[c]) / vnorm[c];
                    }
                }
            }
        }
    }
    if !used_any {
        return Err(Error::AllZeroNorm);
    }
    if let Some(g) = grads.as_mut() {
        g.skipped_zero_norm = skipped;
    }
    Ok((total, grads))
}

/// One gradient step: `W` rows are renormalized afterwards; entry slices are not.
pub fn learner_step(
    codebook: &mut Codebook,
    bank: &mut SemanticEmbeddingBank,
    grads: &LearnerGrads,
    lr: f64,
    train_entries: bool,
) -> Result<()> {
    if !grads.is_finite() || !lr.is_finite() {
        return Err(Error::NonFinite("learner gradients"));
    }
    let g_dim = bank.dim();
    if grads.grad_w.len() != bank.weights.len() || grads.grad_entries.len() != grads.entries.len() * g_dim {
        return Err(Error::DimensionMismatch {
            expected: bank.weights.len(),
            actual: grads.grad_w.len(),
        });
    }
    if lr == 0.0 {
        return Ok(());
    }
    for (w, g) in bank.weights.iter_mut().zip(&grads.grad_w) {
        *w -= lr * g;
    }
    bank.normalize_rows();
    if train_entries {
        for (slot, &k) in grads.entries.iter().enumerate() {
            let g = &grads.grad_entries[slot * g_dim..(slot + 1) * g_dim];
            for (x, gi) in codebook.row_mut(k)[..g_dim].iter_mut().zip(g) {
                *x -= lr * gi;
            }
        }
    }
    if !codebook.is_finite() || bank.weights.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("learner update"));
    }
    Ok(())
}
