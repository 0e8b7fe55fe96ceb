//! Four-class subtyping with multi-head attention: macro AUC and F1 over the
//! test split, plus per-head-averaged attention reliability.
//!
//!     cargo run --release --example multiclass_subtyping

use milr::classification::{accuracy, f1, roc_auc};
use milr::data::{generate_synthetic, Split, SynthConfig};
use milr::models::ModelConfig;
use milr::reliability::{dataset_reliability, DEFAULT_BINS};
use milr::training::{evaluate, train_one, TrainConfig};

fn main() -> milr::Result<()> {
    let syn = generate_synthetic(&SynthConfig {
        classes: 4,
        slides_per_class: 20,
        ..SynthConfig::default()
    })?;
    let cfg = "multihead/4".parse::<ModelConfig>()?.with_dims(64, 32, 16).with_classes(4);
    let train = TrainConfig { epochs: 30, ..TrainConfig::default() };
    let model = train_one(&cfg, &train, &syn.dataset, 0, 0.0)?.model;
    let eval = evaluate(&model, &syn.dataset.split(Split::Test), DEFAULT_BINS)?;
    let rel = dataset_reliability(&eval.reliability[0].1)?;
    println!(
        "{}: accuracy {:.3}  macro AUC {:.3}  macro F1 {:.3}  attention AUPRC {:.4} ({} eligible slides)",
        cfg.name(),
        accuracy(&eval.runs),
        roc_auc(&eval.runs)?,
        f1(&eval.runs)?,
        rel.auprc,
        rel.n_eligible
    );
    Ok(())
}
