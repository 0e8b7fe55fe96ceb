//! Trains a quick instance-level model and writes score and ground-truth
//! heatmaps (PGM) for the first positive test slide.
//!
//!     cargo run --release --example heatmap_export -- /tmp/heatmaps

use std::path::PathBuf;

use milr::data::{generate_synthetic, Split, SynthConfig};
use milr::models::{ModelConfig, ScoringMode};
use milr::report::{export_heatmap, Pgm};
use milr::training::{train_one, TrainConfig};

fn main() -> milr::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "target/heatmaps".into()));
    std::fs::create_dir_all(&out).map_err(|e| milr::Error::Io { path: out.clone(), source: e })?;
    let syn = generate_synthetic(&SynthConfig::default())?;
    let cfg = "mean-pool-ins".parse::<ModelConfig>()?.with_dims(64, 32, 16);
    let train = TrainConfig { epochs: 20, ..TrainConfig::default() };
    let model = train_one(&cfg, &train, &syn.dataset, 0, 0.0)?.model;

    let slide = syn
        .dataset
        .split(Split::Test)
        .into_iter()
        .find(|s| s.bag.label == 1)
        .expect("positive test slide");
    let scores = model.patch_scores(&slide.bag.features, ScoringMode::Patch)?;
    let path = out.join(format!("{}.pgm", slide.bag.slide_id));
    for p in export_heatmap(&scores, &slide.grid, slide.patch_labels.as_deref(), &path, 16)? {
        let img = Pgm::read(&p)?;
        println!("{} ({}x{})", p.display(), img.width, img.height);
    }
    Ok(())
}
