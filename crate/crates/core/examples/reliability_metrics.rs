//! Mutual information, Spearman's correlation and AUPRC between patch scores
//! and patch labels for a few hand-made slides.
//!
//!     cargo run --example reliability_metrics

use milr::reliability::{dataset_reliability, per_slide_reliability, slide_reliability, DEFAULT_BINS};

fn main() -> milr::Result<()> {
    let labels = [false, false, true, true, false, true, false, false];
    let slides: [(&str, Vec<f64>); 3] = [
        ("perfect", vec![0.1, 0.2, 0.9, 0.8, 0.0, 0.7, 0.3, 0.1]),
        ("inverted", vec![0.9, 0.8, 0.1, 0.2, 1.0, 0.3, 0.7, 0.9]),
        ("constant", vec![0.5; 8]),
    ];
    println!("{:<10} {:>8} {:>9} {:>7}", "scores", "MI", "Spearman", "AUPRC");
    for (name, s) in &slides {
        let r = slide_reliability(s, &labels, DEFAULT_BINS)?;
        println!("{name:<10} {:>8.4} {:>9.4} {:>7.4}", r.mi, r.spearman, r.auprc);
    }

    // A slide without positive patches is excluded from the dataset mean.
    let negative = [false; 8];
    let per = per_slide_reliability(
        [(slides[0].1.as_slice(), &labels[..]), (slides[1].1.as_slice(), &negative[..])],
        DEFAULT_BINS,
    )?;
    let d = dataset_reliability(&per)?;
    println!("dataset mean over {} eligible slide(s), {} excluded: AUPRC {:.4}", d.n_eligible, d.n_excluded, d.auprc);
    Ok(())
}
