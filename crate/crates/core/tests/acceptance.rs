//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

mod common;

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use common::{kink_margin, oracle_auprc, oracle_mi, oracle_spearman, random_bag, small_model, ALL_VARIANTS};
use milr::classification::roc_auc;
use milr::cli::{cmd_bench, cmd_cost, cmd_synth, BenchArgs, CostArgs, SynthArgs};
use milr::data::{generate_synthetic, SynthConfig};
use milr::models::{count_flops, count_params, MilModel, ModelConfig, ScoringMode, Variant};
use milr::numerics::{finite_diff_gradient, max_relative_error};
use milr::reliability::{auprc, dataset_reliability, mutual_information, spearman, DEFAULT_BINS};
use milr::training::{run_protocol, SeedRun, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SIZE_TOLERANCE: f64 = 0.01;
const ORACLE_TOLERANCE: f64 = 1e-10;
const ORACLE_VECTORS: usize = 1000;
const ORACLE_BUDGET: Duration = Duration::from_secs(10);
const GRAD_EPS: f64 = 1e-5;
const GRAD_TOLERANCE: f64 = 1e-4;
const GRAD_FLOOR: f64 = 1e-6;
const GRAD_BUDGET: Duration = Duration::from_secs(60);
const ADDITIVE_BAGS: u64 = 100;
const ADDITIVE_TOLERANCE: f64 = 1e-8;
const PERMUTATION_TOLERANCE: f64 = 1e-9;
const SEEDS: u64 = 5;
const MIN_ORDERED_SEEDS: usize = 4;
const MAX_POOL_SPEARMAN: (f64, f64) = (-0.1, 0.1);
const EXPERIMENT_BUDGET: Duration = Duration::from_secs(600);
const MIN_ABMIL_AUC: f64 = 0.95;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(value: f64, target: f64, rel: f64) -> bool {
    ((value - target) / target).abs() <= rel
}

fn flops_reproduction() -> Outcome {
    let table = cmd_cost(&CostArgs {
        variants: Some("mean-pool,abmil".into()),
        bag_size: 120,
        input_dim: 1024,
        embed_dim: 512,
        attn_hidden: 256,
        classes: 2,
    })
    .unwrap();
    let mp = count_flops(&ModelConfig::new(Variant::MeanPool), 120) as f64;
    let ab = count_flops(&ModelConfig::new(Variant::Abmil), 120) as f64;
    let pass = within(mp, 62.9e6, SIZE_TOLERANCE)
        && within(ab, 94.4e6, SIZE_TOLERANCE)
        && table.contains("| MEAN-POOL | 62.9 M |")
        && table.contains("| ABMIL | 94.4 M |");
    outcome(pass, format!("MEAN-POOL {mp} MACs (target 62.9 M), ABMIL {ab} MACs (target 94.4 M), tol 1%"))
}

fn size_reproduction() -> Outcome {
    let mp = count_params(&ModelConfig::new(Variant::MeanPool)) as f64;
    let ab = count_params(&ModelConfig::new(Variant::Abmil)) as f64;
    let pass = within(mp, 525.8e3, SIZE_TOLERANCE) && within(ab, 788.7e3, SIZE_TOLERANCE);
    outcome(pass, format!("MEAN-POOL {mp} params (target 525.8 K), ABMIL {ab} params (target 788.7 K), tol 1%"))
}

fn metric_oracles() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = [0.0f64; 3];
    for _ in 0..ORACLE_VECTORS {
        let n = rng.random_range(2..=64);
        let coarse = rng.random_bool(0.5);
        let scores: Vec<f64> = (0..n)
            .map(|_| if coarse { rng.random_range(0..6) as f64 / 5.0 } else { rng.random_range(-3.0..3.0) })
            .collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        labels[0] = true;
        labels[1] = false;
        let y: Vec<f64> = labels.iter().map(|&l| l as u8 as f64).collect();
        let diffs = [
            mutual_information(&scores, &labels, DEFAULT_BINS).unwrap() - oracle_mi(&scores, &labels, DEFAULT_BINS),
            spearman(&scores, &labels).unwrap() - oracle_spearman(&scores, &y),
            auprc(&scores, &labels).unwrap() - oracle_auprc(&scores, &labels),
        ];
        for (w, d) in worst.iter_mut().zip(diffs) {
            *w = w.max(d.abs());
        }
    }
    let elapsed = start.elapsed();
    let pass = worst.iter().all(|&w| w <= ORACLE_TOLERANCE) && elapsed < ORACLE_BUDGET;
    outcome(
        pass,
        format!(
            "{ORACLE_VECTORS} vectors, max |diff| MI {:.1e} Spearman {:.1e} AUPRC {:.1e} (tol 1e-10), {:.2?}",
            worst[0], worst[1], worst[2], elapsed
        ),
    )
}

/// A 6-instance bag away from ReLU and max-pooling kinks.
fn smooth_bag(model: &MilModel, seed: u64) -> milr::numerics::Tensor2 {
    (0..)
        .map(|k| random_bag(seed * 1000 + k, 6, 5))
        .find(|b| kink_margin(model, b) > 1e-3)
        .unwrap()
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let mut worst = (0.0f64, "");
    for v in ALL_VARIANTS {
        for seed in 0..8u64 {
            let classes = 2 + (seed as usize % 2);
            let model = small_model(v, 5, classes, seed);
            let bag = smooth_bag(&model, seed);
            let label = seed as usize % classes;
            let (_, grads) = model.loss_and_gradients(&bag, label).unwrap();
            let analytic: Vec<f64> = grads.iter().flat_map(|g| g.data().to_vec()).collect();
            let mut probe = model.clone();
            let numeric = finite_diff_gradient(
                |theta| {
                    probe.set_flat(theta).unwrap();
                    probe.loss(&bag, label).unwrap()
                },
                &model.flatten(),
                GRAD_EPS,
            );
            let err = max_relative_error(&analytic, &numeric, GRAD_FLOOR);
            if err > worst.0 {
                worst = (err, v);
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst.0 < GRAD_TOLERANCE && elapsed < GRAD_BUDGET,
        format!(
            "{} variants x 8 bags, worst relative error {:.2e} ({}), tol 1e-4, {:.2?}",
            ALL_VARIANTS.len(),
            worst.0,
            worst.1,
            elapsed
        ),
    )
}

fn additive_decomposition() -> Outcome {
    let mut worst = 0.0f64;
    for v in ["abmil-add", "multihead-add/2"] {
        for seed in 0..ADDITIVE_BAGS {
            let model = small_model(v, 5, 3, seed);
            let bag = random_bag(seed + 77, 1 + seed as usize % 20, 5);
            let out = model.forward(&bag).unwrap();
            worst = worst.max(out.contributions.unwrap().colwise_sum().max_abs_diff(&out.logits));
        }
    }
    outcome(
        worst <= ADDITIVE_TOLERANCE,
        format!("{ADDITIVE_BAGS} bags per additive variant, max |sum - logits| {worst:.1e} (tol 1e-8)"),
    )
}

fn permutation_invariance() -> Outcome {
    use rand::seq::SliceRandom;
    let (mut logit_err, mut score_err) = (0.0f64, 0.0f64);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for v in ALL_VARIANTS {
        for seed in 0..20u64 {
            let model = small_model(v, 5, 3, seed);
            let n = 1 + seed as usize % 15;
            let bag = random_bag(seed + 500, n, 5);
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let a = model.forward(&bag).unwrap();
            let b = model.forward(&bag.select_rows(&perm)).unwrap();
            logit_err = logit_err.max(a.logits.max_abs_diff(&b.logits));
            for mode in model.config().available_scorings() {
                let (sa, sb) = (a.scores(mode).unwrap(), b.scores(mode).unwrap());
                for (i, &p) in perm.iter().enumerate() {
                    score_err = score_err.max((sb[i] - sa[p]).abs());
                }
            }
        }
    }
    outcome(
        logit_err <= PERMUTATION_TOLERANCE && score_err <= PERMUTATION_TOLERANCE,
        format!("max logit drift {logit_err:.1e}, max score mismatch {score_err:.1e} (tol 1e-9)"),
    )
}

fn seed_stat(runs: &[SeedRun], mode: ScoringMode, f: fn(&milr::reliability::DatasetReliability) -> f64) -> Vec<f64> {
    runs.iter()
        .map(|r| {
            let (_, per) = r.evaluation.reliability.iter().find(|(m, _)| *m == mode).unwrap();
            f(&dataset_reliability(per).unwrap())
        })
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn reliability_experiment() -> (Outcome, Outcome) {
    let start = Instant::now();
    let syn = generate_synthetic(&SynthConfig::default()).unwrap();
    let dim = syn.dataset.input_dim();
    let train = TrainConfig {
        seeds: (0..SEEDS).collect(),
        ..TrainConfig::default()
    };
    let run = |v: &str| {
        let cfg = v.parse::<ModelConfig>().unwrap().with_dims(dim, dim / 2, dim / 4);
        run_protocol(&cfg, &train, &syn.dataset, DEFAULT_BINS).unwrap()
    };
    let ins = run("mean-pool-ins");
    let abmil = run("abmil");
    let maxp = run("max-pool");
    let elapsed = start.elapsed();

    let ap = |runs: &[SeedRun], m| seed_stat(runs, m, |d| d.auprc);
    let (a_ins, a_ab, a_max) = (ap(&ins, ScoringMode::Patch), ap(&abmil, ScoringMode::Att), ap(&maxp, ScoringMode::Maxsel));
    let ordered = (0..SEEDS as usize).filter(|&s| a_ins[s] > a_ab[s] && a_ab[s] > a_max[s]).count();
    let rs = mean(&seed_stat(&maxp, ScoringMode::Maxsel, |d| d.spearman));
    let pass7 = ordered >= MIN_ORDERED_SEEDS
        && (MAX_POOL_SPEARMAN.0..=MAX_POOL_SPEARMAN.1).contains(&rs)
        && elapsed < EXPERIMENT_BUDGET;
    let o7 = outcome(
        pass7,
        format!(
            "AUPRC MEAN-POOL-INS {:.4} > ABMIL {:.4} > MAX-POOL {:.4}; ordered on {ordered}/{SEEDS} seeds (need {MIN_ORDERED_SEEDS}); \
             MAX-POOL Spearman {rs:+.4} (need within [-0.1, 0.1]); {:.1?} (budget 600 s)",
            mean(&a_ins),
            mean(&a_ab),
            mean(&a_max),
            elapsed
        ),
    );
    let aucs: Vec<f64> = abmil.iter().map(|r| roc_auc(&r.evaluation.runs).unwrap()).collect();
    let o8 = outcome(
        mean(&aucs) >= MIN_ABMIL_AUC,
        format!(
            "ABMIL test AUC mean {:.4}, min {:.4} over {SEEDS} seeds (need >= 0.95)",
            mean(&aucs),
            aucs.iter().cloned().fold(f64::INFINITY, f64::min)
        ),
    );
    (o7, o8)
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) {
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            collect_files(&p, out);
        } else if matches!(p.extension().and_then(|e| e.to_str()), Some("csv" | "pgm")) {
            out.push(p);
        }
    }
}

fn determinism() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let data = root.path().join("data");
    cmd_synth(&SynthArgs {
        out: data.clone(),
        classes: Some(2),
        slides: Some(10),
        seed: Some(1),
        key_frac: None,
        bag_min: Some(20),
        bag_max: Some(40),
        dim: Some(16),
        mu: None,
        sigma: None,
        patch_size: None,
        split: None,
    })
    .unwrap();
    let bench = |out: &str| {
        let out = root.path().join(out);
        cmd_bench(&BenchArgs {
            data: Some(data.clone()),
            out: out.clone(),
            variants: Some("mean-pool-ins,abmil-add,max-pool-ins".into()),
            seeds: Some(2),
            pooled: true,
            ..BenchArgs::default()
        })
        .unwrap();
        out
    };
    let (a, b) = (bench("run_a"), bench("run_b"));
    let mut files = Vec::new();
    collect_files(&a, &mut files);
    let pgm = files.iter().filter(|p| p.extension().unwrap() == "pgm").count();
    let differing: Vec<String> = files
        .iter()
        .filter(|f| std::fs::read(f).unwrap() != std::fs::read(b.join(f.strip_prefix(&a).unwrap())).unwrap_or_default())
        .map(|f| f.display().to_string())
        .collect();
    outcome(
        differing.is_empty() && pgm > 0,
        format!("{} CSV/PGM files compared ({pgm} PGM), {} differ {:?}", files.len(), differing.len(), differing),
    )
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = vec![
        ("1 FLOPs at 120 instances", flops_reproduction()),
        ("2 model size", size_reproduction()),
        ("3 metric oracle equivalence", metric_oracles()),
        ("4 gradient correctness", gradient_correctness()),
        ("5 additive decomposition", additive_decomposition()),
        ("6 permutation invariance", permutation_invariance()),
    ];
    let (o7, o8) = reliability_experiment();
    results.push(("7 reliability ordering", o7));
    results.push(("8 ABMIL classification", o8));
    results.push(("9 bench determinism", determinism()));

    let mut failed = 0;
    for (name, o) in &results {
        println!("{} criterion {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
