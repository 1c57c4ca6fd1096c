//! Semantic-guided vector quantization.
//!
//! A codebook whose entries are split into coarse-to-fine levels. The low levels follow the data
//! through anchored online clustering; the high levels are additionally pulled toward learned class
//! embeddings so that each entry ends up serving one class.

pub mod cluster;
pub mod config;
pub mod engine;
pub mod error;
pub mod io;
pub mod metrics;
pub mod quantizer;
pub mod rng;
pub mod semantic;
pub mod snapshot;
pub mod synth;
pub mod types;

pub use config::{AggregationMode, EngineConfig, LevelPartition, Variant};
pub use engine::{Engine, StepOutcome};
pub use error::{Error, Result};
pub use quantizer::{compute_level_weights, multi_level_distance, quantize, LevelWeights, QuantizationResult};
pub use types::{BatchShape, Codebook, FeatureBatch, Label, SemanticEmbeddingBank, UsageTracker};
