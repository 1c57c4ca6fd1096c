//! Browser bindings: level weights, the reset-strength curve, and a step-able simulation.

use sgcvq_core::cluster::decay_factors;
use sgcvq_core::metrics::{label_agreement, semantic_uniqueness, usage_report, HitWindow};
use sgcvq_core::synth::{MixtureSampler, MixtureSpec};
use sgcvq_core::{compute_level_weights, BatchShape, Engine, EngineConfig, UsageTracker, Variant};
use wasm_bindgen::prelude::*;

/// Level weights for `alpha > 0` and `n >= 2` levels; empty otherwise.
#[wasm_bindgen]
pub fn level_weights(alpha: f64, n: usize) -> Vec<f64> {
    if !(alpha > 0.0 && alpha.is_finite()) || n < 2 {
        return Vec::new();
    }
    compute_level_weights(alpha, n).as_slice().to_vec()
}

/// Reset strength `a` at `points` usage levels evenly spaced over `[0, max_usage]`.
#[wasm_bindgen]
pub fn decay_curve(codebook_size: usize, gamma: f64, epsilon: f64, max_usage: f64, points: usize) -> Vec<f64> {
    if points == 0 || codebook_size == 0 {
        return Vec::new();
    }
    let mut tracker = UsageTracker::new(points, 1);
    let last = (points - 1).max(1) as f64;
    for (i, n) in tracker.ema_usage.iter_mut().enumerate() {
        *n = max_usage * i as f64 / last;
    }
    // decay_factors scales by the tracker size, so rescale to the requested K
    let scale = codebook_size as f64 / points as f64;
    tracker.ema_usage.iter_mut().for_each(|n| *n *= scale);
    decay_factors(&tracker, gamma, epsilon).0
}

/// A small engine trained on an 8-class mixture, one batch per `step`.
#[wasm_bindgen]
pub struct Simulation {
    engine: Engine,
    sampler: MixtureSampler,
    window: HitWindow,
    shape: BatchShape,
    counter: u64,
    basis: [Vec<f64>; 2],
    samples: Vec<f64>,
    sample_labels: Vec<i32>,
    agreement: f64,
}

#[wasm_bindgen]
impl Simulation {
    /// `variant` is `vanilla_ema`, `cvq` or `sgc`; anything else is rejected.
    #[wasm_bindgen(constructor)]
    pub fn new(
        variant: &str,
        seed: u64,
        separation: f64,
        within_spread: f64,
        detail_spread: f64,
    ) -> Result<Simulation, JsError> {
        Simulation::try_new(variant, seed, separation, within_spread, detail_spread).map_err(|e| JsError::new(&e))
    }

    /// Trains on `n` more batches.
    pub fn step(&mut self, n: u32) -> Result<(), JsError> {
        self.try_step(n).map_err(|e| JsError::new(&e))
    }

    pub fn steps_done(&self) -> u64 {
        self.counter
    }

    pub fn active_fraction(&self) -> f64 {
        usage_report(&self.window).map_or(f64::NAN, |u| u.active_fraction)
    }

    pub fn uniqueness(&self, threshold: f64) -> f64 {
        let c = self.engine.config().num_classes;
        semantic_uniqueness(&self.engine.tracker.raw_hits, c, &[threshold])[0].1
    }

    /// Label agreement of the last batch, NaN before the first step.
    pub fn label_agreement(&self) -> f64 {
        self.agreement
    }

    /// Entry guided slices projected to 2-D, interleaved x, y.
    pub fn entry_points(&self) -> Vec<f64> {
        let cb = &self.engine.codebook;
        (0..cb.size()).flat_map(|k| self.project(cb.row(k))).collect()
    }

    /// Class of each entry, -1 when unlabeled.
    pub fn entry_classes(&self) -> Vec<i32> {
        self.engine
            .codebook
            .entry_class
            .iter()
            .map(|c| c.map_or(-1, |c| c as i32))
            .collect()
    }

    /// Last batch projected to 2-D, interleaved x, y.
    pub fn sample_points(&self) -> Vec<f64> {
        self.samples.clone()
    }

    pub fn sample_labels(&self) -> Vec<i32> {
        self.sample_labels.clone()
    }
}

impl Simulation {
    pub fn try_new(
        variant: &str,
        seed: u64,
        separation: f64,
        within_spread: f64,
        detail_spread: f64,
    ) -> Result<Simulation, String> {
        let variant = Variant::parse(variant).ok_or_else(|| format!("unknown variant {variant:?}"))?;
        let config = EngineConfig {
            variant,
            seed,
            ..EngineConfig::default()
        };
        let engine = Engine::new(config).map_err(|e| e.to_string())?;
        let spec = MixtureSpec::uniform(
            engine.config().num_classes,
            separation,
            within_spread,
            detail_spread,
            seed,
        );
        let sampler = MixtureSampler::new(&spec, engine.partition()).map_err(|e| e.to_string())?;
        let basis = projection_basis(sampler.centroids(), sampler.guided_dim(), spec.num_classes);
        let window = HitWindow::new(engine.config().codebook_size, 100);
        Ok(Simulation {
            engine,
            sampler,
            window,
            shape: BatchShape::new(1, 16, 16),
            counter: 0,
            basis,
            samples: Vec::new(),
            sample_labels: Vec::new(),
            agreement: f64::NAN,
        })
    }

    pub fn try_step(&mut self, n: u32) -> Result<(), String> {
        for _ in 0..n {
            let batch = self.sampler.sample(self.shape, self.counter);
            self.counter += 1;
            let out = self.engine.step(&batch).map_err(|e| e.to_string())?;
            self.window.push(out.hits.per_entry.clone());
            self.agreement = label_agreement(&out.result, &batch, &self.engine.codebook).unwrap_or(f64::NAN);
            self.samples = (0..batch.positions())
                .flat_map(|p| self.project(batch.feature(p)))
                .collect();
            self.sample_labels = batch.labels.iter().map(|l| l.map_or(-1, |c| c as i32)).collect();
        }
        Ok(())
    }

    fn project(&self, v: &[f64]) -> [f64; 2] {
        let dot = |b: &[f64]| b.iter().zip(v).map(|(x, y)| x * y).sum::<f64>();
        [dot(&self.basis[0]), dot(&self.basis[1])]
    }
}

/// Spreads the class directions around a circle: class `c` lands near angle `2πc/C`.
fn projection_basis(centroids: &[f64], g: usize, classes: usize) -> [Vec<f64>; 2] {
    let mut basis = [vec![0.0; g], vec![0.0; g]];
    for (c, mu) in centroids.chunks(g).enumerate() {
        let n = mu.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        let angle = std::f64::consts::TAU * c as f64 / classes as f64;
        for (d, m) in mu.iter().enumerate() {
            basis[0][d] += angle.cos() * m / n;
            basis[1][d] += angle.sin() * m / n;
        }
    }
    basis
}
