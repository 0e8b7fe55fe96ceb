#![allow(dead_code)]

use milr::data::{generate_synthetic, Synthetic, SynthConfig};
use milr::models::{MilModel, ModelConfig};
use milr::numerics::Tensor2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const ALL_VARIANTS: [&str; 10] = [
    "mean-pool",
    "max-pool",
    "mean-pool-ins",
    "max-pool-ins",
    "abmil",
    "abmil-add",
    "multihead/2",
    "multihead-add/2",
    "multihead/1",
    "multihead-add/4",
];

pub fn small_model(variant: &str, input: usize, classes: usize, seed: u64) -> MilModel {
    let cfg: ModelConfig = variant.parse().unwrap();
    let cfg = cfg.with_dims(input, 4, 3).with_classes(classes);
    MilModel::new(cfg, seed).unwrap()
}

pub fn random_bag(seed: u64, n: usize, dim: usize) -> Tensor2 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor2::from_vec(n, dim, (0..n * dim).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
}

/// Smallest gap to a non-differentiable point: ReLU pre-activations near 0 and
/// near-ties in column maxima.
pub fn kink_margin(model: &MilModel, bag: &Tensor2) -> f64 {
    let w = model.param("embed.weight").unwrap();
    let b = model.param("embed.bias").unwrap();
    let mut pre = bag.matmul(w).unwrap();
    for r in 0..pre.rows() {
        for c in 0..pre.cols() {
            pre.set(r, c, pre.get(r, c) + b.get(0, c));
        }
    }
    let mut margin = pre.data().iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
    let h = pre.map(|v| v.max(0.0));
    margin = margin.min(column_top_gap(&h));
    let out = model.forward(bag).unwrap();
    if let Some(p) = &out.instance_probabilities {
        margin = margin.min(column_top_gap(p));
    }
    margin
}

/// Gap between the largest and second largest entry of each column, ignoring
/// columns that are identically zero.
fn column_top_gap(t: &Tensor2) -> f64 {
    let mut gap = f64::INFINITY;
    if t.rows() < 2 {
        return gap;
    }
    for c in 0..t.cols() {
        let mut col: Vec<f64> = (0..t.rows()).map(|r| t.get(r, c)).collect();
        if col.iter().all(|&v| v == 0.0) {
            continue;
        }
        col.sort_by(|a, b| b.total_cmp(a));
        gap = gap.min(col[0] - col[1]);
    }
    gap
}

pub fn synthetic(config: SynthConfig) -> Synthetic {
    generate_synthetic(&config).unwrap()
}

pub fn tiny_synth() -> SynthConfig {
    SynthConfig {
        slides_per_class: 10,
        bag_min: 8,
        bag_max: 16,
        dim: 8,
        ..SynthConfig::default()
    }
}

// Independent reference implementations of the reliability metrics.

/// Plug-in MI from a directly counted joint histogram, via H(B) + H(Y) − H(B,Y).
pub fn oracle_mi(scores: &[f64], labels: &[bool], bins: usize) -> f64 {
    let n = scores.len() as f64;
    let lo = scores.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut joint = vec![vec![0.0; 2]; bins];
    for (s, &l) in scores.iter().zip(labels) {
        let b = if hi > lo {
            (((s - lo) / (hi - lo) * bins as f64).floor() as usize).min(bins - 1)
        } else {
            0
        };
        joint[b][l as usize] += 1.0;
    }
    let h = |counts: &[f64]| -> f64 {
        counts
            .iter()
            .filter(|&&c| c > 0.0)
            .map(|&c| -(c / n) * (c / n).ln())
            .sum()
    };
    let marg_b: Vec<f64> = joint.iter().map(|r| r[0] + r[1]).collect();
    let marg_y = [joint.iter().map(|r| r[0]).sum::<f64>(), joint.iter().map(|r| r[1]).sum::<f64>()];
    let flat: Vec<f64> = joint.iter().flatten().copied().collect();
    (h(&marg_b) + h(&marg_y) - h(&flat)).max(0.0)
}

/// Ranks by counting, then Pearson on the ranks.
pub fn oracle_spearman(x: &[f64], y: &[f64]) -> f64 {
    let rank = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|a| {
                let below = v.iter().filter(|b| *b < a).count() as f64;
                let equal = v.iter().filter(|b| *b == a).count() as f64;
                below + (equal + 1.0) / 2.0
            })
            .collect()
    };
    let (rx, ry) = (rank(x), rank(y));
    let n = x.len() as f64;
    let (sx, sy) = (rx.iter().sum::<f64>(), ry.iter().sum::<f64>());
    let sxy: f64 = rx.iter().zip(&ry).map(|(a, b)| a * b).sum();
    let sxx: f64 = rx.iter().map(|a| a * a).sum();
    let syy: f64 = ry.iter().map(|a| a * a).sum();
    let num = n * sxy - sx * sy;
    let den = ((n * sxx - sx * sx) * (n * syy - sy * sy)).sqrt();
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Step-wise area under the precision-recall curve, one point per distinct threshold.
pub fn oracle_auprc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let p = labels.iter().filter(|&&l| l).count() as f64;
    let (mut ap, mut prev_recall) = (0.0, 0.0);
    for t in thresholds {
        let tp = scores.iter().zip(labels).filter(|(s, l)| **s >= t && **l).count() as f64;
        let fp = scores.iter().zip(labels).filter(|(s, l)| **s >= t && !**l).count() as f64;
        let recall = tp / p;
        ap += (recall - prev_recall) * tp / (tp + fp);
        prev_recall = recall;
    }
    ap
}
