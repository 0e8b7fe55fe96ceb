//! The scaled-down reliability comparison: instance-level mean pooling,
//! gated attention and embedding max pooling, five seeds each, on the
//! default synthetic set.
//!
//!     cargo run --release --example reliability_benchmark

use milr::data::{generate_synthetic, SynthConfig};
use milr::models::ModelConfig;
use milr::report::{build_report, render_table, ReportMetadata, TableFormat, VariantEvaluation};
use milr::training::{run_protocol, TrainConfig};

fn main() -> milr::Result<()> {
    let syn = generate_synthetic(&SynthConfig::default())?;
    let dim = syn.dataset.input_dim();
    let train = TrainConfig::default();
    let mut evals = Vec::new();
    for v in ["mean-pool-ins", "abmil", "max-pool"] {
        let cfg = v.parse::<ModelConfig>()?.with_dims(dim, dim / 2, dim / 4);
        let runs = run_protocol(&cfg, &train, &syn.dataset, 32)?;
        evals.push(VariantEvaluation::from_runs(&cfg, &runs));
    }
    let meta = ReportMetadata {
        dataset: "synthetic".into(),
        train: Some(train),
        ..ReportMetadata::default()
    };
    let report = build_report(meta, &evals)?;
    print!("{}", render_table(&report, TableFormat::Markdown)?);
    Ok(())
}
