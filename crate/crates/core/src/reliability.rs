//! Agreement between per-patch scores and binary patch labels.
//!
//! Three views of the same question: histogram mutual information (nats),
//! Spearman's rank correlation and average precision. All three are defined
//! only for slides that contain both positive and negative patches.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityResult {
    pub mi: f64,
    pub spearman: f64,
    pub auprc: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

fn class_counts(labels: &[bool]) -> (usize, usize) {
    let pos = labels.iter().filter(|&&l| l).count();
    (pos, labels.len() - pos)
}

/// Both label classes present.
pub fn is_eligible(labels: &[bool]) -> bool {
    let (pos, neg) = class_counts(labels);
    pos > 0 && neg > 0
}

fn check_inputs(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::Length {
            what: "scores",
            left: scores.len(),
            right: labels.len(),
        });
    }
    let (n_pos, n_neg) = class_counts(labels);
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateLabels { n_pos, n_neg });
    }
    Ok((n_pos, n_neg))
}

/// Equal-width bin index of each score after min-max scaling to [0,1].
/// A constant score vector lands entirely in bin 0.
pub fn quantize(scores: &[f64], bins: usize) -> Vec<usize> {
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return vec![0; scores.len()];
    }
    scores
        .iter()
        .map(|&s| {
            let u = (s - lo) / (hi - lo);
            ((u * bins as f64) as usize).min(bins - 1)
        })
        .collect()
}

/// Histogram mutual information between binned scores and labels, in nats.
pub fn mutual_information(scores: &[f64], labels: &[bool], bins: usize) -> Result<f64> {
    check_inputs(scores, labels)?;
    if bins == 0 {
        return Err(Error::config("bins must be positive"));
    }
    let n = scores.len() as f64;
    let mut joint = vec![[0usize; 2]; bins];
    for (b, &l) in quantize(scores, bins).into_iter().zip(labels) {
        joint[b][l as usize] += 1;
    }
    let (n_pos, n_neg) = class_counts(labels);
    let p_y = [n_neg as f64 / n, n_pos as f64 / n];
    let mut mi = 0.0;
    for cell in &joint {
        let p_b = (cell[0] + cell[1]) as f64 / n;
        for y in 0..2 {
            if cell[y] == 0 {
                continue;
            }
            let p = cell[y] as f64 / n;
            mi += p * (p / (p_b * p_y[y])).ln();
        }
    }
    Ok(mi.max(0.0))
}

/// 1-based fractional ranks; tied values share the mean of their rank span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

/// Spearman's rank correlation between two samples; 0 when either is constant.
pub fn spearman_xy(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Length {
            what: "spearman input",
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::TooFewValues {
            needed: 2,
            got: x.len(),
        });
    }
    // Canonical (x, y) order keeps the summation order independent of input order.
    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    Ok(pearson(&average_ranks(&xs), &average_ranks(&ys)))
}

/// Spearman's correlation between scores and binary labels.
pub fn spearman(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let y: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
    spearman_xy(scores, &y)
}

/// Average precision with tied scores evaluated as one threshold.
pub fn auprc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (n_pos, _) = check_inputs(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp, mut ap) = (0usize, 0usize, 0.0);
    let mut i = 0;
    while i < order.len() {
        let mut group_pos = 0;
        let mut j = i;
        while j < order.len() && scores[order[j]].total_cmp(&scores[order[i]]) == Ordering::Equal {
            if labels[order[j]] {
                group_pos += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        tp += group_pos;
        if group_pos > 0 {
            let precision = tp as f64 / (tp + fp) as f64;
            ap += group_pos as f64 / n_pos as f64 * precision;
        }
        i = j;
    }
    Ok(ap)
}

/// All three metrics for one slide.
pub fn slide_reliability(scores: &[f64], labels: &[bool], bins: usize) -> Result<ReliabilityResult> {
    let (n_pos, n_neg) = check_inputs(scores, labels)?;
    Ok(ReliabilityResult {
        mi: mutual_information(scores, labels, bins)?,
        spearman: spearman(scores, labels)?,
        auprc: auprc(scores, labels)?,
        n_pos,
        n_neg,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetReliability {
    pub mi: f64,
    pub spearman: f64,
    pub auprc: f64,
    pub n_eligible: usize,
    pub n_excluded: usize,
}

/// Unweighted mean over eligible slides; `None` entries are ineligible slides.
pub fn dataset_reliability(per_slide: &[Option<ReliabilityResult>]) -> Result<DatasetReliability> {
    let eligible: Vec<&ReliabilityResult> = per_slide.iter().flatten().collect();
    if eligible.is_empty() {
        return Err(Error::TooFewValues { needed: 1, got: 0 });
    }
    let n = eligible.len() as f64;
    let mean = |f: fn(&ReliabilityResult) -> f64| eligible.iter().map(|r| f(r)).sum::<f64>() / n;
    Ok(DatasetReliability {
        mi: mean(|r| r.mi),
        spearman: mean(|r| r.spearman),
        auprc: mean(|r| r.auprc),
        n_eligible: eligible.len(),
        n_excluded: per_slide.len() - eligible.len(),
    })
}

/// Per-slide evaluation; slides lacking either label class are reported as `None`.
pub fn per_slide_reliability<'a, I>(slides: I, bins: usize) -> Result<Vec<Option<ReliabilityResult>>>
where
    I: IntoIterator<Item = (&'a [f64], &'a [bool])>,
{
    slides
        .into_iter()
        .map(|(s, l)| {
            if is_eligible(l) {
                slide_reliability(s, l, bins).map(Some)
            } else if s.len() != l.len() {
                Err(Error::Length {
                    what: "scores",
                    left: s.len(),
                    right: l.len(),
                })
            } else {
                Ok(None)
            }
        })
        .collect()
}

/// Metrics over all patches of the eligible slides concatenated into one vector.
pub fn pooled_reliability<'a, I>(slides: I, bins: usize) -> Result<DatasetReliability>
where
    I: IntoIterator<Item = (&'a [f64], &'a [bool])>,
{
    let (mut scores, mut labels) = (Vec::new(), Vec::new());
    let (mut n_eligible, mut n_excluded) = (0, 0);
    for (s, l) in slides {
        if is_eligible(l) {
            scores.extend_from_slice(s);
            labels.extend_from_slice(l);
            n_eligible += 1;
        } else {
            n_excluded += 1;
        }
    }
    if n_eligible == 0 {
        return Err(Error::TooFewValues { needed: 1, got: 0 });
    }
    let r = slide_reliability(&scores, &labels, bins)?;
    Ok(DatasetReliability {
        mi: r.mi,
        spearman: r.spearman,
        auprc: r.auprc,
        n_eligible,
        n_excluded,
    })
}
