//! Engine configuration and the level partition derived from it.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantizer::{compute_level_weights, LevelWeights};

/// How the per-level slices of a quantized vector are merged into the decoder input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMode {
    Linear,
    Concat,
    LowOnly,
    HighOnly,
    CrossAttention,
}

impl AggregationMode {
    pub fn name(self) -> &'static str {
        match self {
            AggregationMode::Linear => "linear",
            AggregationMode::Concat => "concat",
            AggregationMode::LowOnly => "low_only",
            AggregationMode::HighOnly => "high_only",
            AggregationMode::CrossAttention => "cross_attention",
        }
    }
}

/// Codebook update rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Running-mean EMA update of hit entries only, no reactivation.
    VanillaEma,
    /// Online clustering with usage-driven anchor resets.
    Cvq,
    /// Online clustering with semantic-embedding mixing and the angular learner.
    Sgc,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::VanillaEma => "vanilla_ema",
            Variant::Cvq => "cvq",
            Variant::Sgc => "sgc",
        }
    }

    pub fn parse(s: &str) -> Option<Variant> {
        match s {
            "vanilla_ema" => Some(Variant::VanillaEma),
            "cvq" => Some(Variant::Cvq),
            "sgc" => Some(Variant::Sgc),
            _ => None,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub codebook_size: usize,
    pub code_dim: usize,
    pub num_levels: usize,
    /// Per-level widths. Empty means an equal split of `code_dim`.
    pub level_dims: Vec<usize>,
    /// Steepness of the level weight curve.
    pub alpha: f64,
    /// Levels with weight >= sigma are high-level.
    pub sigma: f64,
    /// Weight of the high-level term in the assignment distance.
    pub beta: f64,
    /// Decay of the usage and class-histogram EMAs.
    pub gamma_ema: f64,
    pub epsilon: f64,
    /// Commitment loss weight.
    pub gamma_commit: f64,
    pub num_classes: usize,
    pub cosface_s: f64,
    pub cosface_m: f64,
    pub lr_semantic: f64,
    /// Whether the angular learner also moves codebook entries (W always moves).
    pub train_entries: bool,
    pub aggregation_mode: AggregationMode,
    pub variant: Variant,
    pub seed: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            codebook_size: 64,
            code_dim: 32,
            num_levels: 4,
            level_dims: Vec::new(),
            alpha: 1.0,
            sigma: 0.5,
            beta: 1.0,
            gamma_ema: 0.99,
            epsilon: 1e-5,
            gamma_commit: 0.25,
            num_classes: 8,
            cosface_s: 30.0,
            cosface_m: 0.35,
            lr_semantic: 1e-2,
            train_entries: true,
            aggregation_mode: AggregationMode::Concat,
            variant: Variant::Sgc,
            seed: 0,
        }
    }
}

impl EngineConfig {
    /// Checks every invariant, filling in an equal level split when `level_dims` is empty.
    pub fn validate(mut self) -> Result<EngineConfig> {
        if self.codebook_size == 0 {
            return Err(Error::Config("codebook_size positive"));
        }
        if self.code_dim == 0 {
            return Err(Error::Config("code_dim positive"));
        }
        if self.num_levels < 2 {
            return Err(Error::Config("num_levels >= 2"));
        }
        if self.level_dims.is_empty() {
            if !self.code_dim.is_multiple_of(self.num_levels) {
                return Err(Error::Config("level_dims sum"));
            }
            self.level_dims = vec![self.code_dim / self.num_levels; self.num_levels];
        }
        if self.level_dims.len() != self.num_levels {
            return Err(Error::Config("level_dims length"));
        }
        if self.level_dims.contains(&0) {
            return Err(Error::Config("level_dims positive"));
        }
        if self.level_dims.iter().sum::<usize>() != self.code_dim {
            return Err(Error::Config("level_dims sum"));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::Config("alpha positive"));
        }
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return Err(Error::Config("sigma range"));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::Config("beta non-negative"));
        }
        if !(self.gamma_ema > 0.0 && self.gamma_ema < 1.0) {
            return Err(Error::Config("gamma_ema range"));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::Config("epsilon positive"));
        }
        if !(self.gamma_commit.is_finite() && self.gamma_commit >= 0.0) {
            return Err(Error::Config("gamma_commit non-negative"));
        }
        if self.num_classes < 2 {
            return Err(Error::Config("num_classes >= 2"));
        }
        if !(self.cosface_s.is_finite() && self.cosface_s > 0.0) {
            return Err(Error::Config("cosface_s positive"));
        }
        if !(self.cosface_m >= 0.0 && self.cosface_m < 1.0) {
            return Err(Error::Config("cosface_m range"));
        }
        if !(self.lr_semantic.is_finite() && self.lr_semantic > 0.0) {
            return Err(Error::Config("lr_semantic positive"));
        }
        Ok(self)
    }

    /// Builds the level partition. The config must already be validated.
    pub fn partition(&self) -> LevelPartition {
        LevelPartition::new(&self.level_dims, self.alpha, self.sigma)
    }
}

/// Contiguous level slices of a code vector, their weights, and the high/low split.
///
/// Weights decrease with the level index, so the high-level levels always form a prefix
/// and the guided levels `1..N-1` occupy the first `guided_dim` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelPartition {
    ranges: Vec<Range<usize>>,
    weights: LevelWeights,
    num_high: usize,
    high_dim: usize,
    guided_dim: usize,
    code_dim: usize,
}

impl LevelPartition {
    pub fn new(level_dims: &[usize], alpha: f64, sigma: f64) -> LevelPartition {
        let weights = compute_level_weights(alpha, level_dims.len());
        Self::with_weights(level_dims, weights, sigma)
    }

    pub fn with_weights(level_dims: &[usize], weights: LevelWeights, sigma: f64) -> LevelPartition {
        assert_eq!(level_dims.len(), weights.len(), "one weight per level");
        let mut ranges = Vec::with_capacity(level_dims.len());
        let mut start = 0;
        for &d in level_dims {
            ranges.push(start..start + d);
            start += d;
        }
        let num_high = weights.as_slice().iter().take_while(|&&w| w >= sigma).count();
        let high_dim = ranges[..num_high].iter().map(|r| r.len()).sum();
        let guided_dim = start - level_dims[level_dims.len() - 1];
        LevelPartition {
            ranges,
            weights,
            num_high,
            high_dim,
            guided_dim,
            code_dim: start,
        }
    }

    pub fn num_levels(&self) -> usize {
        self.ranges.len()
    }

    pub fn level(&self, l: usize) -> Range<usize> {
        self.ranges[l].clone()
    }

    pub fn ranges(&self) -> &[Range<usize>] {
        &self.ranges
    }

    pub fn weights(&self) -> &LevelWeights {
        &self.weights
    }

    pub fn num_high_levels(&self) -> usize {
        self.num_high
    }

    /// Coordinates `0..high_dim` are high-level, the rest low-level.
    pub fn high_dim(&self) -> usize {
        self.high_dim
    }

    /// Width of the semantically guided subspace (all levels but the last).
    pub fn guided_dim(&self) -> usize {
        self.guided_dim
    }

    pub fn code_dim(&self) -> usize {
        self.code_dim
    }

    pub fn equal_levels(&self) -> bool {
        let d = self.ranges[0].len();
        self.ranges.iter().all(|r| r.len() == d)
    }

    pub fn is_high(&self, l: usize) -> bool {
        l < self.num_high
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn message(cfg: EngineConfig) -> &'static str {
        match cfg.validate() {
            Err(Error::Config(m)) => m,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn default_is_accepted() {
        let cfg = EngineConfig::default().validate().unwrap();
        assert_eq!(cfg.level_dims, vec![8, 8, 8, 8]);
    }

    #[test]
    fn level_dims_must_sum_to_code_dim() {
        let cfg = EngineConfig {
            level_dims: vec![8, 8, 8, 7],
            ..Default::default()
        };
        assert_eq!(message(cfg), "level_dims sum");
    }

    #[test]
    fn gamma_ema_is_an_open_interval() {
        let cfg = EngineConfig {
            gamma_ema: 1.0,
            ..Default::default()
        };
        assert_eq!(message(cfg), "gamma_ema range");
        let cfg = EngineConfig {
            gamma_ema: 0.0,
            ..Default::default()
        };
        assert_eq!(message(cfg), "gamma_ema range");
    }

    #[test]
    fn other_bounds() {
        assert_eq!(
            message(EngineConfig {
                num_levels: 1,
                ..Default::default()
            }),
            "num_levels >= 2"
        );
        assert_eq!(
            message(EngineConfig {
                cosface_m: 1.0,
                ..Default::default()
            }),
            "cosface_m range"
        );
        assert_eq!(
            message(EngineConfig {
                level_dims: vec![16, 16, 0, 0],
                ..Default::default()
            }),
            "level_dims positive"
        );
        assert_eq!(
            message(EngineConfig {
                code_dim: 30,
                ..Default::default()
            }),
            "level_dims sum"
        );
    }

    #[test]
    fn default_partition_has_one_high_level() {
        let p = EngineConfig::default().validate().unwrap().partition();
        assert_eq!(p.num_high_levels(), 1);
        assert_eq!(p.high_dim(), 8);
        assert_eq!(p.guided_dim(), 24);
        assert!(p.equal_levels());
    }

    #[test]
    fn json_rejects_unknown_keys() {
        let err = serde_json::from_str::<EngineConfig>(r#"{"codebook_size": 4, "bogus": 1}"#);
        assert!(err.is_err());
        let cfg: EngineConfig = serde_json::from_str(r#"{"variant": "cvq"}"#).unwrap();
        assert_eq!(cfg.variant, Variant::Cvq);
    }
}
