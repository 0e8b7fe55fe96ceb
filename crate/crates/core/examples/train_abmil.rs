//! Trains gated-attention MIL on the default synthetic set with weight-decay
//! selection, evaluates the test split and round-trips the checkpoint.
//!
//!     cargo run --release --example train_abmil

use milr::classification::{f1, roc_auc};
use milr::data::{generate_synthetic, Split, SynthConfig};
use milr::models::{load_checkpoint, save_checkpoint, ModelConfig, ScoringMode};
use milr::reliability::{dataset_reliability, DEFAULT_BINS};
use milr::training::{evaluate, select_weight_decay, TrainConfig};

fn main() -> milr::Result<()> {
    let syn = generate_synthetic(&SynthConfig::default())?;
    let dim = syn.dataset.input_dim();
    let cfg = "abmil".parse::<ModelConfig>()?.with_dims(dim, dim / 2, dim / 4);
    let train = TrainConfig::default();
    let sel = select_weight_decay(&cfg, &train, &syn.dataset, 0)?;
    for (wd, loss) in &sel.val_losses {
        println!("weight decay {wd:e}: final val loss {loss:.4}");
    }
    println!("chosen {:e}", sel.chosen);
    for h in sel.outcome.history.iter().step_by(10) {
        println!("epoch {:>2}  train {:.4}  val {:.4}", h.epoch, h.train_loss, h.val_loss.unwrap_or(f64::NAN));
    }

    let test = syn.dataset.split(Split::Test);
    let eval = evaluate(&sel.outcome.model, &test, DEFAULT_BINS)?;
    let rel = dataset_reliability(&eval.reliability[0].1)?;
    println!(
        "test AUC {:.3}  F1 {:.3}  attention AUPRC {:.4}  Spearman {:.4}",
        roc_auc(&eval.runs)?,
        f1(&eval.runs)?,
        rel.auprc,
        rel.spearman
    );

    let path = std::env::temp_dir().join("abmil_example.milr");
    save_checkpoint(&sel.outcome.model, &path)?;
    let back = load_checkpoint(&path)?;
    let a = sel.outcome.model.patch_scores(&test[0].bag.features, ScoringMode::Att)?;
    let b = back.patch_scores(&test[0].bag.features, ScoringMode::Att)?;
    println!("checkpoint {} reloads with identical scores: {}", path.display(), a == b);
    Ok(())
}
