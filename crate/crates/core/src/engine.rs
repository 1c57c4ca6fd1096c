//! Engine state and the per-batch training step.

use crate::cluster::{
    apply_high_update, apply_low_update, assign_entry_classes, decay_factors, select_anchors, update_usage, BatchHits,
};
use crate::config::{EngineConfig, LevelPartition, Variant};
use crate::error::{Error, Result};
use crate::quantizer::{quantize, QuantizationResult};
use crate::rng::{stream, DOMAIN_BANK, DOMAIN_CODEBOOK};
use crate::semantic::{learner_step, CosFace, SemanticLoss};
use crate::types::{norm, Codebook, FeatureBatch, SemanticEmbeddingBank, UsageTracker};
use rand_distr::{Distribution, StandardNormal};

/// The default U(-1/K, 1/K) codebook with its last `dead` rows moved to random points of norm `radius`.
pub fn codebook_with_far_entries(config: &EngineConfig, dead: usize, radius: f64) -> Result<Codebook> {
    let config = config.clone().validate()?;
    let (k, d) = (config.codebook_size, config.code_dim);
    if dead > k || !(radius.is_finite() && radius >= 0.0) {
        return Err(Error::Config("dead entries"));
    }
    let mut cb = Codebook::uniform(k, d, 1.0 / k as f64, &mut stream(config.seed, DOMAIN_CODEBOOK, 0));
    let mut rng = stream(config.seed, DOMAIN_CODEBOOK, 1);
    for row in k - dead..k {
        let v: Vec<f64> = loop {
            let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            if norm(&v) > 0.0 {
                break v;
            }
        };
        let n = norm(&v);
        for (c, x) in cb.row_mut(row).iter_mut().zip(&v) {
            *c = radius * x / n;
        }
    }
    Ok(cb)
}

/// Everything one step produced besides the state change.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub result: QuantizationResult,
    pub hits: BatchHits,
    /// Semantic loss before the learner update; `None` when the learner did not run.
    pub semantic_loss: Option<f64>,
    pub skipped_zero_norm: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Engine {
    config: EngineConfig,
    partition: LevelPartition,
    pub codebook: Codebook,
    pub tracker: UsageTracker,
    pub bank: SemanticEmbeddingBank,
}

impl Engine {
    /// Fresh engine with a U(-1/K, 1/K) codebook and a random unit-norm embedding bank.
    pub fn new(config: EngineConfig) -> Result<Engine> {
        let config = config.validate()?;
        let bound = 1.0 / config.codebook_size as f64;
        let codebook = Codebook::uniform(
            config.codebook_size,
            config.code_dim,
            bound,
            &mut stream(config.seed, DOMAIN_CODEBOOK, 0),
        );
        Engine::with_codebook(config, codebook)
    }

    pub fn with_codebook(config: EngineConfig, codebook: Codebook) -> Result<Engine> {
        let config = config.validate()?;
        let partition = config.partition();
        let bank = SemanticEmbeddingBank::random(
            config.num_classes,
            partition.guided_dim(),
            &mut stream(config.seed, DOMAIN_BANK, 0),
        );
        let tracker = UsageTracker::new(config.codebook_size, config.num_classes);
        Engine::from_state(config, codebook, tracker, bank)
    }

    pub fn from_state(
        config: EngineConfig,
        codebook: Codebook,
        tracker: UsageTracker,
        bank: SemanticEmbeddingBank,
    ) -> Result<Engine> {
        let config = config.validate()?;
        let partition = config.partition();
        let k = config.codebook_size;
        let c = config.num_classes;
        if codebook.size() != k || codebook.dim() != config.code_dim {
            return Err(Error::DimensionMismatch {
                expected: k * config.code_dim,
                actual: codebook.size() * codebook.dim(),
            });
        }
        if tracker.size() != k || tracker.num_classes() != c {
            return Err(Error::DimensionMismatch {
                expected: k * c,
                actual: tracker.size() * tracker.num_classes(),
            });
        }
        if bank.num_classes() != c || bank.dim() != partition.guided_dim() {
            return Err(Error::DimensionMismatch {
                expected: c * partition.guided_dim(),
                actual: bank.num_classes() * bank.dim(),
            });
        }
        if !codebook.is_finite() {
            return Err(Error::NonFinite("codebook"));
        }
        Ok(Engine {
            config,
            partition,
            codebook,
            tracker,
            bank,
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn partition(&self) -> &LevelPartition {
        &self.partition
    }

    pub fn quantize(&self, batch: &FeatureBatch) -> Result<QuantizationResult> {
        quantize(
            batch,
            &self.codebook,
            &self.partition,
            self.config.beta,
            self.config.gamma_commit,
            self.config.aggregation_mode,
        )
    }

    /// Quantizes `batch` and updates the codebook according to the configured variant.
    /// The codebook version advances by exactly one.
    pub fn step(&mut self, batch: &FeatureBatch) -> Result<StepOutcome> {
        batch.validate(self.config.num_classes)?;
        let result = self.quantize(batch)?;
        let hits = BatchHits::tally(
            &result.indices,
            &batch.labels,
            self.config.codebook_size,
            self.config.num_classes,
        );
        let mut outcome = StepOutcome {
            result,
            hits,
            semantic_loss: None,
            skipped_zero_norm: 0,
        };
        match self.config.variant {
            Variant::VanillaEma => self.vanilla_update(batch, &outcome)?,
            Variant::Cvq | Variant::Sgc => self.clustering_update(batch, &mut outcome)?,
        }
        self.codebook.bump_version();
        if !self.codebook.is_finite() {
            return Err(Error::NonFinite("codebook"));
        }
        Ok(outcome)
    }

    fn clustering_update(&mut self, batch: &FeatureBatch, outcome: &mut StepOutcome) -> Result<()> {
        let cfg = &self.config;
        let semantic = cfg.variant == Variant::Sgc;
        update_usage(&mut self.tracker, &outcome.hits, batch.positions(), cfg.gamma_ema)?;
        let decays = decay_factors(&self.tracker, cfg.gamma_ema, cfg.epsilon);
        let anchors = select_anchors(batch, &self.codebook, cfg.beta, &self.partition)?;
        assign_entry_classes(&self.tracker, &mut self.codebook);
        apply_low_update(&mut self.codebook, &anchors, &decays, &self.partition)?;
        apply_high_update(
            &mut self.codebook,
            &anchors,
            &decays,
            semantic.then_some(&self.bank),
            &self.partition,
        )?;
        if semantic && self.codebook.entry_class.iter().any(Option::is_some) {
            let loss = CosFace {
                scale: cfg.cosface_s,
                margin: cfg.cosface_m,
            };
            let weights = self.partition.weights();
            match loss.gradients(&self.codebook, &self.bank, &self.partition, weights) {
                Ok(grads) => {
                    outcome.semantic_loss = Some(loss.loss(&self.codebook, &self.bank, &self.partition, weights)?);
                    outcome.skipped_zero_norm = grads.skipped_zero_norm;
                    learner_step(
                        &mut self.codebook,
                        &mut self.bank,
                        &grads,
                        cfg.lr_semantic,
                        cfg.train_entries,
                    )?;
                }
                Err(Error::AllZeroNorm) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(())
    }

    /// Running-mean EMA of the features assigned to each hit entry; unhit entries are untouched.
    fn vanilla_update(&mut self, batch: &FeatureBatch, outcome: &StepOutcome) -> Result<()> {
        let gamma = self.config.gamma_ema;
        let d = self.config.code_dim;
        let p = batch.positions() as f64;
        let mut sums = vec![0.0; self.config.codebook_size * d];
        for (pos, &k) in outcome.result.indices.iter().enumerate() {
            for (s, x) in sums[k * d..(k + 1) * d].iter_mut().zip(batch.feature(pos)) {
                *s += x;
            }
        }
        for (k, &n) in outcome.hits.per_entry.iter().enumerate() {
            if n == 0 {
                continue;
            }
            let prev_mass = gamma * self.tracker.ema_usage[k];
            let new_mass = (1.0 - gamma) * n as f64 / p;
            let total = prev_mass + new_mass;
            for (c, s) in self.codebook.row_mut(k).iter_mut().zip(&sums[k * d..(k + 1) * d]) {
                *c = (prev_mass * *c + (1.0 - gamma) * s / p) / total;
            }
        }
        update_usage(&mut self.tracker, &outcome.hits, batch.positions(), gamma)?;
        assign_entry_classes(&self.tracker, &mut self.codebook);
        Ok(())
    }
}
