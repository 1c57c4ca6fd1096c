//! Drives engines over the generated stream and collects metrics rows.

use sgcvq_core::engine::{codebook_with_far_entries, StepOutcome};
use sgcvq_core::metrics::{
    davies_bouldin, label_agreement, labeled_entries, reconstruction_metrics, semantic_uniqueness, silhouette_score,
    usage_report, HitWindow, MetricsReport, UNIQUENESS_THRESHOLDS,
};
use sgcvq_core::quantizer::aggregate;
use sgcvq_core::synth::MixtureSampler;
use sgcvq_core::{AggregationMode, BatchShape, Engine, Error as CoreError, FeatureBatch, LevelPartition, Variant};

use crate::error::{HarnessError, Result};
use crate::experiment::{DataSpec, ExperimentConfig};

pub const THREADS_ENV: &str = "SGCVQ_THREADS";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub report: MetricsReport,
    pub loss_semantic: Option<f64>,
    pub codebook_loss: f64,
    pub commit_loss: f64,
}

impl MetricsRow {
    pub fn uniqueness_at(&self, threshold: f64) -> Option<f64> {
        self.report
            .uniqueness
            .iter()
            .find(|(t, _)| *t == threshold)
            .map(|&(_, r)| r)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub variant: Variant,
    pub rows: Vec<MetricsRow>,
    pub engine: Engine,
    /// The batch of the last training step and the indices it was assigned.
    pub final_batch: FeatureBatch,
    pub final_indices: Vec<usize>,
}

impl RunOutput {
    pub fn last_row(&self) -> &MetricsRow {
        self.rows.last().expect("at least one row")
    }
}

/// The training stream: batch `t` is a pure function of the data spec and `t`.
pub struct BatchStream {
    sampler: MixtureSampler,
    shape: BatchShape,
    steps: u64,
    sequence: Option<(usize, f64)>,
    strip_labels: bool,
    frame: Option<(usize, Vec<f64>)>,
}

impl BatchStream {
    pub fn new(cfg: &ExperimentConfig, partition: &LevelPartition) -> Result<BatchStream> {
        let sampler =
            MixtureSampler::new(cfg.data.mixture(), partition).map_err(|e| HarnessError::Config(e.to_string()))?;
        let sequence = match &cfg.data {
            DataSpec::Mixture(_) => None,
            DataSpec::Sequence(s) => Some((s.frames, s.drift_rate)),
        };
        Ok(BatchStream {
            sampler,
            shape: cfg.batch,
            steps: cfg.steps,
            sequence,
            strip_labels: cfg.strip_labels,
            frame: None,
        })
    }

    /// Frame shown at step `t` (0-based); steps are spread evenly over the frames.
    pub fn frame_of(&self, t: u64) -> Option<usize> {
        let (frames, _) = self.sequence?;
        let f = (t as u128 * frames as u128 / self.steps as u128) as usize;
        Some(f.min(frames - 1))
    }

    pub fn batch(&mut self, t: u64) -> FeatureBatch {
        let mut b = match (self.sequence, self.frame_of(t)) {
            (Some((_, rate)), Some(f)) => {
                if self.frame.as_ref().map(|(cur, _)| *cur) != Some(f) {
                    self.frame = Some((f, self.sampler.drifted_centroids(f, rate)));
                }
                let centroids = &self.frame.as_ref().expect("frame cached").1;
                let mut b = self.sampler.sample_with(self.shape, t, centroids);
                b.frame_index = Some(vec![f; self.shape.batch]);
                b
            }
            _ => self.sampler.sample(self.shape, t),
        };
        if self.strip_labels {
            b.labels.iter_mut().for_each(|l| *l = None);
        }
        b
    }
}

pub fn build_engine(cfg: &ExperimentConfig) -> Result<Engine> {
    let radius = cfg.init.dead_distance * cfg.data.mixture().separation;
    let codebook = codebook_with_far_entries(&cfg.engine, cfg.init.dead_entries, radius)
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    Engine::with_codebook(cfg.engine.clone(), codebook).map_err(|e| HarnessError::Config(e.to_string()))
}

/// Metrics after step `step` (1-based), measured on that step's batch and assignments.
pub fn compute_row(
    step: u64,
    engine: &Engine,
    batch: &FeatureBatch,
    outcome: &StepOutcome,
    window: &HitWindow,
) -> std::result::Result<MetricsRow, CoreError> {
    let cfg = engine.config();
    let usage = usage_report(window)?;
    let uniqueness = semantic_uniqueness(&engine.tracker.raw_hits, cfg.num_classes, &UNIQUENESS_THRESHOLDS);
    let (points, labels) = labeled_entries(&engine.codebook);
    let silhouette = silhouette_score(&points, cfg.code_dim, &labels).ok();
    let dbi = davies_bouldin(&points, cfg.code_dim, &labels).ok();
    let recon = if cfg.aggregation_mode == AggregationMode::Concat {
        reconstruction_metrics(&batch.features, &outcome.result.aggregated)?
    } else {
        let mut target = Vec::with_capacity(outcome.result.aggregated.len());
        for p in 0..batch.positions() {
            target.extend(aggregate(batch.feature(p), cfg.aggregation_mode, engine.partition())?);
        }
        reconstruction_metrics(&target, &outcome.result.aggregated)?
    };
    let agreement = label_agreement(&outcome.result, batch, &engine.codebook).ok();
    Ok(MetricsRow {
        report: MetricsReport {
            step_index: step,
            active_fraction: usage.active_fraction,
            perplexity: usage.perplexity,
            uniqueness,
            silhouette,
            dbi,
            recon_mse: recon.mse,
            recon_psnr_db: recon.psnr_db,
            label_agreement: agreement,
        },
        loss_semantic: outcome.semantic_loss,
        codebook_loss: outcome.result.codebook_loss,
        commit_loss: outcome.result.commit_loss,
    })
}

fn numerical(step: u64, e: CoreError) -> HarnessError {
    match e {
        e @ CoreError::NonFinite(_) => HarnessError::Numerical { step, source: e },
        e => HarnessError::Config(format!("step {step}: {e}")),
    }
}

/// Trains one engine of `cfg.engine.variant` for `cfg.steps` steps.
///
/// A row is recorded every `metrics_every` steps and after the final step.
pub fn run_variant(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let mut engine = build_engine(cfg)?;
    let mut stream = BatchStream::new(cfg, engine.partition())?;
    let mut window = HitWindow::new(cfg.engine.codebook_size, cfg.window);
    let mut rows = Vec::new();
    let mut last = None;
    for t in 0..cfg.steps {
        let step = t + 1;
        let batch = stream.batch(t);
        let outcome = engine.step(&batch).map_err(|e| numerical(step, e))?;
        window.push(outcome.hits.per_entry.clone());
        if step % cfg.metrics_every == 0 || step == cfg.steps {
            rows.push(compute_row(step, &engine, &batch, &outcome, &window).map_err(|e| numerical(step, e))?);
        }
        last = Some((batch, outcome.result.indices));
    }
    let (final_batch, final_indices) = last.expect("steps >= 1");
    Ok(RunOutput {
        variant: cfg.engine.variant,
        rows,
        engine,
        final_batch,
        final_indices,
    })
}

/// Runs every configured variant on the same stream, at most `threads` at a time.
pub fn run_compare(cfg: &ExperimentConfig, threads: usize) -> Result<Vec<RunOutput>> {
    let configs: Vec<ExperimentConfig> = cfg.variants.iter().map(|&v| cfg.clone().with_variant(v)).collect();
    let mut out = Vec::with_capacity(configs.len());
    for chunk in configs.chunks(threads.max(1)) {
        let results: Vec<Result<RunOutput>> = std::thread::scope(|s| {
            let handles: Vec<_> = chunk.iter().map(|c| s.spawn(move || run_variant(c))).collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("variant thread panicked"))
                .collect()
        });
        for r in results {
            out.push(r?);
        }
    }
    Ok(out)
}

/// Thread cap from `SGCVQ_THREADS`, defaulting to the available parallelism.
pub fn thread_cap() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(HarnessError::Config(format!(
                "{THREADS_ENV} must be a positive integer, got {v:?}"
            ))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}
