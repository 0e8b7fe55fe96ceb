//! Slide-level classification metrics and seed aggregation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One evaluated slide.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRun {
    pub probabilities: Vec<f64>,
    pub predicted: usize,
    pub truth: usize,
}

impl EvalRun {
    pub fn new(probabilities: Vec<f64>, truth: usize) -> Self {
        let mut predicted = 0;
        for (i, &p) in probabilities.iter().enumerate() {
            if p > probabilities[predicted] {
                predicted = i;
            }
        }
        Self {
            probabilities,
            predicted,
            truth,
        }
    }
}

/// Mann-Whitney AUC of `scores` for separating `positives` from the rest; ties count 1/2.
pub fn binary_auc(scores: &[f64], positives: &[bool]) -> Result<f64> {
    let n_pos = positives.iter().filter(|&&p| p).count();
    let n_neg = positives.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateLabels { n_pos, n_neg });
    }
    let ranks = crate::reliability::average_ranks(scores);
    let rank_sum: f64 = ranks
        .iter()
        .zip(positives)
        .filter(|(_, &p)| p)
        .map(|(r, _)| r)
        .sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

fn num_classes(runs: &[EvalRun]) -> usize {
    runs.iter().map(|r| r.probabilities.len()).max().unwrap_or(0)
}

/// Binary: AUC of the class-1 probability. Multi-class: unweighted one-vs-rest
/// mean over classes that have both positive and negative slides.
pub fn roc_auc(runs: &[EvalRun]) -> Result<f64> {
    let c = num_classes(runs);
    let present: Vec<usize> = (0..c).filter(|&k| runs.iter().any(|r| r.truth == k)).collect();
    if present.len() < 2 {
        return Err(Error::DegenerateLabels {
            n_pos: runs.len(),
            n_neg: 0,
        });
    }
    if c == 2 {
        let scores: Vec<f64> = runs.iter().map(|r| r.probabilities[1]).collect();
        let pos: Vec<bool> = runs.iter().map(|r| r.truth == 1).collect();
        return binary_auc(&scores, &pos);
    }
    let mut total = 0.0;
    for &k in &present {
        let scores: Vec<f64> = runs.iter().map(|r| r.probabilities[k]).collect();
        let pos: Vec<bool> = runs.iter().map(|r| r.truth == k).collect();
        total += binary_auc(&scores, &pos)?;
    }
    Ok(total / present.len() as f64)
}

fn class_f1(runs: &[EvalRun], k: usize) -> f64 {
    let tp = runs.iter().filter(|r| r.predicted == k && r.truth == k).count();
    let fp = runs.iter().filter(|r| r.predicted == k && r.truth != k).count();
    let fn_ = runs.iter().filter(|r| r.predicted != k && r.truth == k).count();
    if tp == 0 {
        return 0.0;
    }
    2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
}

/// Binary: F1 of class 1. Multi-class: macro F1 over all classes.
pub fn f1(runs: &[EvalRun]) -> Result<f64> {
    if runs.is_empty() {
        return Err(Error::TooFewValues { needed: 1, got: 0 });
    }
    let c = num_classes(runs).max(2);
    if c == 2 {
        return Ok(class_f1(runs, 1));
    }
    Ok((0..c).map(|k| class_f1(runs, k)).sum::<f64>() / c as f64)
}

pub fn accuracy(runs: &[EvalRun]) -> f64 {
    if runs.is_empty() {
        return 0.0;
    }
    runs.iter().filter(|r| r.predicted == r.truth).count() as f64 / runs.len() as f64
}

/// Mean and sample (n−1) standard deviation.
pub fn aggregate_seeds(values: &[f64]) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(Error::TooFewValues {
            needed: 2,
            got: values.len(),
        });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let var = sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, var.sqrt()))
}
