//! The MIL aggregator family: configuration, parameters, forward passes and cost accounting.

mod checkpoint;
mod config;
mod cost;
mod model;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use config::{EmbedActivation, ModelConfig, ScoringMode, Variant};
pub use cost::{count_flops, count_params, format_kilo, format_mega, standard_variants};
pub use model::{maxsel_scores, min_max_normalize, parameter_shapes, BagOutput, MilModel};
