//! Feature bags, dataset manifests, splits and the synthetic generator.

mod features;
mod manifest;
mod synth;

pub use features::{
    decode_features, encode_features, read_feature_file, write_feature_file, FeatureBag, FEATURE_HEADER_LEN,
    FEATURE_MAGIC,
};
pub use manifest::{bounding_grid, split_dataset, Dataset, DatasetManifest, ManifestEntry, Slide, Split};
pub use synth::{generate_synthetic, SynthConfig, Synthetic};
