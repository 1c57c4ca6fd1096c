//! The `run`, `compare` and `quantize` subcommands.

use std::path::{Path, PathBuf};

use sgcvq_core::metrics::label_agreement;
use sgcvq_core::{io, snapshot, Variant};

use crate::error::{HarnessError, Result};
use crate::experiment::ExperimentConfig;
use crate::output::{comparison_csv, comparison_report, ensure_dir, metrics_csv, run_report, write_file};
use crate::runner::{run_compare, run_variant, thread_cap, RunOutput};

pub const METRICS_CSV: &str = "metrics.csv";
pub const REPORT_JSON: &str = "report.json";
pub const SNAPSHOT: &str = "snapshot.sgcvq";
pub const FINAL_FEATURES: &str = "final_batch.feat";
pub const FINAL_TOKENS: &str = "final_tokens.tok";
pub const COMPARISON_CSV: &str = "comparison.csv";
pub const COMPARISON_JSON: &str = "comparison.json";

fn resolve(config: &Path, seed: Option<u64>, variant: Option<Variant>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(s) = seed {
        cfg = cfg.with_seed(s);
    }
    if let Some(v) = variant {
        cfg = cfg.with_variant(v);
    }
    cfg.validate()
}

fn save_snapshot(run: &RunOutput, path: &Path) -> Result<()> {
    write_file(path, snapshot::encode(&run.engine))
}

pub fn run(config: &Path, out: &Path, seed: Option<u64>, variant: Option<Variant>) -> Result<RunOutput> {
    let cfg = resolve(config, seed, variant)?;
    thread_cap()?;
    let result = run_variant(&cfg)?;
    ensure_dir(out)?;
    write_file(&out.join(METRICS_CSV), metrics_csv(&result.rows))?;
    write_file(&out.join(REPORT_JSON), run_report(&cfg, &result))?;
    save_snapshot(&result, &out.join(SNAPSHOT))?;
    write_file(&out.join(FINAL_FEATURES), io::encode_features(&result.final_batch))?;
    write_file(
        &out.join(FINAL_TOKENS),
        io::encode_tokens(result.final_batch.shape, &result.final_indices),
    )?;
    Ok(result)
}

pub fn variant_csv(variant: Variant) -> String {
    format!("metrics_{variant}.csv")
}

pub fn variant_snapshot(variant: Variant) -> String {
    format!("snapshot_{variant}.sgcvq")
}

pub fn compare(config: &Path, out: &Path, seed: Option<u64>) -> Result<Vec<RunOutput>> {
    let cfg = resolve(config, seed, None)?;
    if cfg.variants.len() < 2 {
        return Err(HarnessError::Config("compare needs at least two variants".into()));
    }
    let runs = run_compare(&cfg, thread_cap()?)?;
    ensure_dir(out)?;
    for r in &runs {
        write_file(&out.join(variant_csv(r.variant)), metrics_csv(&r.rows))?;
        save_snapshot(r, &out.join(variant_snapshot(r.variant)))?;
    }
    write_file(&out.join(COMPARISON_CSV), comparison_csv(&runs))?;
    write_file(&out.join(COMPARISON_JSON), comparison_report(&cfg, &runs))?;
    Ok(runs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizeSummary {
    pub positions: usize,
    pub indices: Vec<usize>,
    pub label_agreement: Option<f64>,
    pub out: PathBuf,
}

pub fn quantize(snapshot_path: &Path, features: &Path, out: &Path) -> Result<QuantizeSummary> {
    let engine = snapshot::load(snapshot_path)
        .map_err(|e| HarnessError::from_core(&format!("reading snapshot {}", snapshot_path.display()), e))?;
    let batch = io::read_features(features)
        .map_err(|e| HarnessError::from_core(&format!("reading features {}", features.display()), e))?;
    let cfg = engine.config();
    if batch.dim != cfg.code_dim {
        return Err(HarnessError::Config(format!(
            "dimension mismatch: snapshot D={}, features D={}",
            cfg.code_dim, batch.dim
        )));
    }
    batch
        .validate(cfg.num_classes)
        .map_err(|e| HarnessError::from_core("features", e))?;
    let result = engine
        .quantize(&batch)
        .map_err(|e| HarnessError::from_core("quantize", e))?;
    let agreement = label_agreement(&result, &batch, &engine.codebook).ok();
    write_file(out, io::encode_tokens(batch.shape, &result.indices))?;
    Ok(QuantizeSummary {
        positions: batch.positions(),
        indices: result.indices,
        label_agreement: agreement,
        out: out.to_path_buf(),
    })
}
