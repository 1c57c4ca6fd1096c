//! CSV and JSON result files.
//!
//! Missing values (`ss`/`dbi` with fewer than two labeled classes, `label_agreement` without eligible
//! positions, `loss_semantic` when the learner did not run) are empty CSV fields and JSON nulls.
//! Infinite PSNR is written as `inf`/`-inf`, as a string in JSON.

use std::fmt::Write as _;
use std::path::Path;

use serde_json::{json, Map, Value};
use sgcvq_core::metrics::UNIQUENESS_THRESHOLDS;

use crate::error::{HarnessError, Result};
use crate::experiment::ExperimentConfig;
use crate::runner::{MetricsRow, RunOutput};

pub const CSV_HEADER: &str = "step,active_fraction,perplexity,ss,dbi,recon_mse,recon_psnr_db,label_agreement,\
uniq@0.1,uniq@0.3,uniq@0.5,uniq@0.7,uniq@0.9,loss_semantic,codebook_loss,commit_loss";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub fn csv_fields(row: &MetricsRow) -> String {
    let r = &row.report;
    let mut s = format!(
        "{},{},{},{},{},{},{},{}",
        r.step_index,
        r.active_fraction,
        r.perplexity,
        opt(r.silhouette),
        opt(r.dbi),
        r.recon_mse,
        r.recon_psnr_db,
        opt(r.label_agreement)
    );
    for t in UNIQUENESS_THRESHOLDS {
        write!(s, ",{}", opt(row.uniqueness_at(t))).expect("write to string");
    }
    write!(
        s,
        ",{},{},{}",
        opt(row.loss_semantic),
        row.codebook_loss,
        row.commit_loss
    )
    .expect("write to string");
    s
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for row in rows {
        s.push_str(&csv_fields(row));
        s.push('\n');
    }
    s
}

/// One line per variant with its final metrics.
pub fn comparison_csv(runs: &[RunOutput]) -> String {
    let mut s = format!("variant,{CSV_HEADER}\n");
    for run in runs {
        writeln!(s, "{},{}", run.variant, csv_fields(run.last_row())).expect("write to string");
    }
    s
}

fn number(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!(x.to_string())
    }
}

pub fn row_json(row: &MetricsRow) -> Value {
    let r = &row.report;
    let mut m = Map::new();
    m.insert("step".into(), json!(r.step_index));
    m.insert("active_fraction".into(), number(r.active_fraction));
    m.insert("perplexity".into(), number(r.perplexity));
    m.insert("ss".into(), json!(r.silhouette));
    m.insert("dbi".into(), json!(r.dbi));
    m.insert("recon_mse".into(), number(r.recon_mse));
    m.insert("recon_psnr_db".into(), number(r.recon_psnr_db));
    m.insert("label_agreement".into(), json!(r.label_agreement));
    for t in UNIQUENESS_THRESHOLDS {
        m.insert(format!("uniq@{t}"), json!(row.uniqueness_at(t)));
    }
    m.insert("loss_semantic".into(), json!(row.loss_semantic));
    m.insert("codebook_loss".into(), number(row.codebook_loss));
    m.insert("commit_loss".into(), number(row.commit_loss));
    Value::Object(m)
}

pub fn run_report(cfg: &ExperimentConfig, run: &RunOutput) -> String {
    let v = json!({
        "variant": run.variant.name(),
        "steps": cfg.steps,
        "codebook_version": run.engine.codebook.version(),
        "final": row_json(run.last_row()),
        "config": cfg,
    });
    serde_json::to_string_pretty(&v).expect("report serializes") + "\n"
}

pub fn comparison_report(cfg: &ExperimentConfig, runs: &[RunOutput]) -> String {
    let rows: Vec<Value> = runs
        .iter()
        .map(|r| {
            let mut row = row_json(r.last_row());
            row.as_object_mut()
                .expect("row is an object")
                .insert("variant".into(), json!(r.variant.name()));
            row
        })
        .collect();
    let v = json!({ "steps": cfg.steps, "rows": rows, "config": cfg });
    serde_json::to_string_pretty(&v).expect("report serializes") + "\n"
}

pub fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| HarnessError::io(format!("writing {}", path.display()), e))
}

pub fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| HarnessError::io(format!("creating {}", path.display()), e))
}
