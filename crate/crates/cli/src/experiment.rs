//! Experiment configuration files.
//!
//! ```json
//! {
//!   "engine": { "variant": "sgc", "seed": 0 },
//!   "data": { "mixture": { "num_classes": 8, "separation": 1.0, "within_spread": 0.03,
//!                          "detail_spread": 0.6, "seed": 0 } },
//!   "steps": 2000,
//!   "batch": { "batch": 1, "height": 16, "width": 16 },
//!   "metrics_every": 100
//! }
//! ```
//!
//! `data` may instead hold `{"sequence": {"mixture": {..}, "frames": 50, "drift_rate": 0.05}}`;
//! the steps are then spread evenly over the frames. Unknown keys are rejected everywhere.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sgcvq_core::synth::{MixtureSpec, SequenceSpec};
use sgcvq_core::{BatchShape, EngineConfig, Variant};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSpec {
    Mixture(MixtureSpec),
    Sequence(SequenceSpec),
}

impl DataSpec {
    pub fn mixture(&self) -> &MixtureSpec {
        match self {
            DataSpec::Mixture(m) => m,
            DataSpec::Sequence(s) => &s.mixture,
        }
    }

    fn mixture_mut(&mut self) -> &mut MixtureSpec {
        match self {
            DataSpec::Mixture(m) => m,
            DataSpec::Sequence(s) => &mut s.mixture,
        }
    }
}

/// Optional far-away entries planted after the random init.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitSpec {
    /// The last `dead_entries` rows are replaced.
    pub dead_entries: usize,
    /// Norm of the planted rows, in units of the mixture separation.
    pub dead_distance: f64,
}

impl Default for InitSpec {
    fn default() -> Self {
        InitSpec {
            dead_entries: 0,
            dead_distance: 10.0,
        }
    }
}

fn default_metrics_every() -> u64 {
    1
}

fn default_window() -> usize {
    100
}

fn default_variants() -> Vec<Variant> {
    vec![Variant::VanillaEma, Variant::Cvq, Variant::Sgc]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub engine: EngineConfig,
    pub data: DataSpec,
    pub steps: u64,
    pub batch: BatchShape,
    #[serde(default = "default_metrics_every")]
    pub metrics_every: u64,
    /// Number of recent steps the usage statistics are computed over.
    #[serde(default = "default_window")]
    pub window: usize,
    /// Variants run by `compare`.
    #[serde(default = "default_variants")]
    pub variants: Vec<Variant>,
    #[serde(default)]
    pub init: InitSpec,
    /// Drop every label from the generated batches.
    #[serde(default)]
    pub strip_labels: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<ExperimentConfig> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text =
            std::fs::read_to_string(path).map_err(|e| HarnessError::io(format!("reading {}", path.display()), e))?;
        ExperimentConfig::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks every invariant and returns the config with defaults filled in.
    pub fn validate(mut self) -> Result<ExperimentConfig> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.steps == 0 {
            return bad("steps must be at least 1");
        }
        if self.metrics_every == 0 {
            return bad("metrics_every must be at least 1");
        }
        if self.window == 0 {
            return bad("window must be at least 1");
        }
        if self.batch.positions() == 0 {
            return bad("batch shape has no positions");
        }
        self.engine = self
            .engine
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        match &self.data {
            DataSpec::Mixture(m) => m.validate(),
            DataSpec::Sequence(s) => s.validate(),
        }
        .map_err(|e| HarnessError::Config(e.to_string()))?;
        if self.data.mixture().num_classes != self.engine.num_classes {
            return bad("data num_classes differs from engine num_classes");
        }
        if self.init.dead_entries > self.engine.codebook_size {
            return bad("dead_entries exceeds codebook_size");
        }
        if !(self.init.dead_distance.is_finite() && self.init.dead_distance >= 0.0) {
            return bad("dead_distance must be finite and non-negative");
        }
        if self.variants.is_empty() {
            return bad("variants must not be empty");
        }
        Ok(self)
    }

    /// Applies `--seed`: both the engine and the data generator are reseeded.
    pub fn with_seed(mut self, seed: u64) -> ExperimentConfig {
        self.engine.seed = seed;
        self.data.mixture_mut().seed = seed;
        self
    }

    pub fn with_variant(mut self, variant: Variant) -> ExperimentConfig {
        self.engine.variant = variant;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "data": {"mixture": {"num_classes": 8, "separation": 1.0, "within_spread": 0.1, "detail_spread": 0.5}},
        "steps": 3,
        "batch": {"batch": 1, "height": 4, "width": 4}
    }"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.metrics_every, 1);
        assert_eq!(cfg.window, 100);
        assert_eq!(cfg.variants.len(), 3);
        assert_eq!(cfg.engine.level_dims, vec![8, 8, 8, 8]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replacen("\"steps\"", "\"stepz\": 1, \"steps\"", 1);
        assert!(matches!(
            ExperimentConfig::from_json(&text),
            Err(HarnessError::Config(_))
        ));
        let nested = MINIMAL.replacen("\"separation\"", "\"sep\": 1, \"separation\"", 1);
        assert!(ExperimentConfig::from_json(&nested).is_err());
    }

    #[test]
    fn zero_steps_or_cadence_is_invalid() {
        for (from, to) in [
            ("\"steps\": 3", "\"steps\": 0"),
            ("\"steps\": 3", "\"steps\": 3, \"metrics_every\": 0"),
        ] {
            let text = MINIMAL.replacen(from, to, 1);
            assert!(ExperimentConfig::from_json(&text).is_err(), "{to}");
        }
    }

    #[test]
    fn class_counts_must_agree() {
        let text = MINIMAL.replacen("\"num_classes\": 8", "\"num_classes\": 3", 1);
        assert!(ExperimentConfig::from_json(&text).is_err());
    }

    #[test]
    fn seed_override_reaches_both_generators() {
        let cfg = ExperimentConfig::from_json(MINIMAL).unwrap().with_seed(42);
        assert_eq!(cfg.engine.seed, 42);
        assert_eq!(cfg.data.mixture().seed, 42);
    }

    #[test]
    fn json_round_trip() {
        let cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(ExperimentConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }
}
