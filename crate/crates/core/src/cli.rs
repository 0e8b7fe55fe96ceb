//! Command-line driver: `synth`, `bench`, `cost`, `heatmap` and `report`.
//!
//! Each subcommand is also callable in-process through its `cmd_*` function.
//! Every command that writes files also writes `provenance.json` holding the
//! effective configuration; `bench --config provenance.json` replays a run.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::annotations::LabelRule;
use crate::data::{generate_synthetic, Dataset, Slide, Split, SynthConfig};
use crate::error::{Error, Result};
use crate::models::{
    count_flops, count_params, format_kilo, format_mega, load_checkpoint, save_checkpoint, standard_variants,
    ModelConfig, ScoringMode,
};
use crate::reliability::{pooled_reliability, DEFAULT_BINS};
use crate::report::{
    build_report, export_heatmap, render_table, ExperimentReport, ReportMetadata, TableFormat, VariantEvaluation,
};
use crate::training::{run_protocol, write_history_csv, SeedRun, TrainConfig};

/// Environment variable holding a comma-separated seed list.
pub const SEED_ENV: &str = "MILR_SEED";

pub const DEFAULT_VARIANTS: &str = "mean-pool,max-pool,mean-pool-ins,max-pool-ins,abmil,abmil-add";

#[derive(Debug, Parser)]
#[command(name = "milr", version, about = "Multiple-instance learning reliability benchmark")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with planted key instances.
    Synth(SynthArgs),
    /// Train, evaluate and report every requested variant.
    Bench(BenchArgs),
    /// Print FLOPs and parameter counts without training.
    Cost(CostArgs),
    /// Render patch-score heatmaps from a saved checkpoint.
    Heatmap(HeatmapArgs),
    /// Render a saved JSON report as CSV or Markdown.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub classes: Option<usize>,
    /// Slides per class.
    #[arg(long)]
    pub slides: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Key-instance fraction of positive slides: `f` or `min,max`.
    #[arg(long)]
    pub key_frac: Option<String>,
    #[arg(long)]
    pub bag_min: Option<usize>,
    #[arg(long)]
    pub bag_max: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub patch_size: Option<u32>,
    /// `train,val,test` fractions.
    #[arg(long)]
    pub split: Option<String>,
}

#[derive(Debug, Default, Args)]
pub struct BenchArgs {
    /// Dataset directory or its `manifest.json`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Provenance JSON from an earlier run; explicit flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated variants, e.g. `mean-pool,abmil-add,multihead/4`.
    #[arg(long)]
    pub variants: Option<String>,
    /// Number of seeds (0..N). Falls back to MILR_SEED, then to five seeds.
    #[arg(long)]
    pub seeds: Option<u64>,
    /// Worker threads for seed-parallel training.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Histogram bins for mutual information.
    #[arg(long)]
    pub bins: Option<usize>,
    /// `center` or `overlap:<tau>`.
    #[arg(long)]
    pub label_rule: Option<String>,
    /// Instances per bag for the FLOPs column.
    #[arg(long)]
    pub bag_size: Option<usize>,
    /// Also report reliability over all test patches pooled together.
    #[arg(long)]
    pub pooled: bool,
    /// Heatmaps for this many most and least reliable test slides.
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Pixels per patch side in heatmaps.
    #[arg(long)]
    pub block: Option<usize>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub attn_hidden: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Comma-separated weight-decay grid.
    #[arg(long)]
    pub wd_grid: Option<String>,
    #[arg(long)]
    pub decoupled_decay: bool,
}

#[derive(Debug, Args)]
pub struct CostArgs {
    /// Comma-separated variants; defaults to the standard set.
    #[arg(long)]
    pub variants: Option<String>,
    #[arg(long, default_value_t = 120)]
    pub bag_size: usize,
    #[arg(long, default_value_t = 1024)]
    pub input_dim: usize,
    #[arg(long, default_value_t = 512)]
    pub embed_dim: usize,
    #[arg(long, default_value_t = 256)]
    pub attn_hidden: usize,
    #[arg(long, default_value_t = 2)]
    pub classes: usize,
}

#[derive(Debug, Args)]
pub struct HeatmapArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset directory or its `manifest.json`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Slide ids to render; all test slides when omitted.
    #[arg(long, value_delimiter = ',')]
    pub slides: Vec<String>,
    /// `att`, `patch` or `maxsel`; the model's default when omitted.
    #[arg(long)]
    pub scoring: Option<String>,
    #[arg(long, default_value = "center")]
    pub label_rule: String,
    #[arg(long, default_value_t = 8)]
    pub block: usize,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// `report.json` written by `bench`.
    #[arg(long)]
    pub input: PathBuf,
    /// `csv` or `md`.
    #[arg(long, default_value = "md")]
    pub format: String,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => cmd_synth(&a).map(|_| ()),
        Command::Bench(a) => cmd_bench(&a).map(|_| ()),
        Command::Cost(a) => {
            print!("{}", cmd_cost(&a)?);
            Ok(())
        }
        Command::Heatmap(a) => cmd_heatmap(&a).map(|_| ()),
        Command::Report(a) => {
            let text = cmd_report(&a)?;
            if a.out.is_none() {
                print!("{text}");
            }
            Ok(())
        }
    }
}

fn create_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| Error::config(format!("bad {what} value {t:?} in {s:?}")))
        })
        .collect()
}

fn manifest_path(data: &Path) -> PathBuf {
    if data.is_dir() {
        data.join("manifest.json")
    } else {
        data.to_path_buf()
    }
}

/// Effective synthetic configuration: defaults overridden by flags.
pub fn synth_config(args: &SynthArgs) -> Result<SynthConfig> {
    let mut c = SynthConfig::default();
    if let Some(v) = args.classes {
        c.classes = v;
    }
    if let Some(v) = args.slides {
        c.slides_per_class = v;
    }
    if let Some(v) = args.seed {
        c.seed = v;
    }
    if let Some(k) = &args.key_frac {
        let v: Vec<f64> = parse_list(k, "key fraction")?;
        match v[..] {
            [f] => (c.key_frac_min, c.key_frac_max) = (f, f),
            [lo, hi] => (c.key_frac_min, c.key_frac_max) = (lo, hi),
            _ => return Err(Error::config(format!("--key-frac takes one or two values, got {k:?}"))),
        }
    }
    if let Some(v) = args.bag_min {
        c.bag_min = v;
    }
    if let Some(v) = args.bag_max {
        c.bag_max = v;
    }
    if let Some(v) = args.dim {
        c.dim = v;
    }
    if let Some(v) = args.mu {
        c.mu = v;
    }
    if let Some(v) = args.sigma {
        c.sigma = v;
    }
    if let Some(v) = args.patch_size {
        c.patch_size = v;
    }
    if let Some(s) = &args.split {
        let v: Vec<f64> = parse_list(s, "split fraction")?;
        c.split = v
            .try_into()
            .map_err(|_| Error::config(format!("--split takes three fractions, got {s:?}")))?;
    }
    c.validate()?;
    Ok(c)
}

/// Writes the dataset plus `provenance.json` under `args.out`.
pub fn cmd_synth(args: &SynthArgs) -> Result<SynthConfig> {
    let config = synth_config(args)?;
    let syn = generate_synthetic(&config)?;
    create_dir(&args.out)?;
    syn.write(&args.out)?;
    write_json(&args.out.join("provenance.json"), &config)?;
    Ok(config)
}

/// Everything that determines a `bench` run's outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub data: PathBuf,
    pub variants: Vec<String>,
    pub bins: usize,
    pub label_rule: LabelRule,
    pub bag_size: usize,
    pub pooled: bool,
    pub top_k: usize,
    pub block: usize,
    /// Defaults to half the feature width when absent.
    pub embed_dim: Option<usize>,
    /// Defaults to half the embedding width when absent.
    pub attn_hidden: Option<usize>,
    pub train: TrainConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            data: PathBuf::new(),
            variants: DEFAULT_VARIANTS.split(',').map(String::from).collect(),
            bins: DEFAULT_BINS,
            label_rule: LabelRule::Center,
            bag_size: 120,
            pooled: false,
            top_k: 2,
            block: 8,
            embed_dim: None,
            attn_hidden: None,
            train: TrainConfig::default(),
        }
    }
}

/// Provenance base (if any), then MILR_SEED, then explicit flags.
pub fn bench_config(args: &BenchArgs) -> Result<BenchConfig> {
    let mut c = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text)?
        }
        None => {
            let mut c = BenchConfig::default();
            if let Ok(s) = std::env::var(SEED_ENV) {
                c.train.seeds = parse_list(&s, SEED_ENV)?;
            }
            c
        }
    };
    if let Some(d) = &args.data {
        c.data = d.clone();
    }
    if let Some(v) = &args.variants {
        c.variants = v.split(',').map(|s| s.trim().to_string()).collect();
    }
    if let Some(n) = args.seeds {
        c.train.seeds = (0..n).collect();
    }
    if let Some(v) = args.bins {
        c.bins = v;
    }
    if let Some(r) = &args.label_rule {
        c.label_rule = r.parse()?;
    }
    if let Some(v) = args.bag_size {
        c.bag_size = v;
    }
    c.pooled |= args.pooled;
    if let Some(v) = args.top_k {
        c.top_k = v;
    }
    if let Some(v) = args.block {
        c.block = v;
    }
    if args.embed_dim.is_some() {
        c.embed_dim = args.embed_dim;
    }
    if args.attn_hidden.is_some() {
        c.attn_hidden = args.attn_hidden;
    }
    if let Some(v) = args.lr {
        c.train.lr = v;
    }
    if let Some(v) = args.epochs {
        c.train.epochs = v;
    }
    if let Some(g) = &args.wd_grid {
        c.train.weight_decay_grid = parse_list(g, "weight decay")?;
    }
    c.train.decoupled_decay |= args.decoupled_decay;
    if c.data.as_os_str().is_empty() {
        return Err(Error::config("no dataset given (--data)"));
    }
    if c.variants.is_empty() {
        return Err(Error::config("no variants requested"));
    }
    if c.bins < 2 {
        return Err(Error::config("need at least 2 MI bins"));
    }
    c.train.validate()?;
    Ok(c)
}

/// Model configurations for `config.variants`, sized to the dataset.
pub fn bench_models(config: &BenchConfig, dataset: &Dataset) -> Result<Vec<ModelConfig>> {
    let input = dataset.input_dim();
    let embed = config.embed_dim.unwrap_or((input / 2).max(1));
    let attn = config.attn_hidden.unwrap_or((embed / 2).max(1));
    config
        .variants
        .iter()
        .map(|v| {
            let m = v
                .parse::<ModelConfig>()?
                .with_dims(input, embed, attn)
                .with_classes(dataset.num_classes());
            m.validate()?;
            Ok(m)
        })
        .collect()
}

/// File-name form of a model name: `MULTIHEAD-ADD/4` → `multihead-add_h4`.
pub fn file_stem(name: &str) -> String {
    name.to_ascii_lowercase().replace('/', "_h")
}

/// Paths of everything `bench` wrote.
#[derive(Clone, Debug, Default)]
pub struct BenchOutput {
    pub report: Option<ExperimentReport>,
    pub files: Vec<PathBuf>,
}

pub fn cmd_bench(args: &BenchArgs) -> Result<BenchOutput> {
    let config = bench_config(args)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::config(e.to_string()))?;
    pool.install(|| bench(&config, &args.out))
}

/// Runs the full protocol for every variant described by `config` and writes
/// all artifacts under `out`.
pub fn bench(config: &BenchConfig, out: &Path) -> Result<BenchOutput> {
    let dataset = Dataset::load(&manifest_path(&config.data), config.label_rule)?;
    let models = bench_models(config, &dataset)?;
    for sub in ["logs", "checkpoints", "heatmaps"] {
        create_dir(&out.join(sub))?;
    }
    let mut files = Vec::new();
    let provenance = out.join("provenance.json");
    write_json(&provenance, config)?;
    files.push(provenance);

    let test = dataset.split(Split::Test);
    let mut evaluations = Vec::with_capacity(models.len());
    let mut pooled_rows = Vec::new();
    for model_cfg in &models {
        let runs = run_protocol(model_cfg, &config.train, &dataset, config.bins)?;
        let stem = file_stem(&model_cfg.name());
        for r in &runs {
            let log = out.join("logs").join(format!("{stem}_seed{}.csv", r.seed));
            write_history_csv(&r.selection.outcome.history, &log)?;
            let ckpt = out.join("checkpoints").join(format!("{stem}_seed{}.milr", r.seed));
            save_checkpoint(r.model(), &ckpt)?;
            files.extend([log, ckpt]);
        }
        if let Some(first) = runs.first() {
            files.extend(reliability_heatmaps(first, &test, config, &out.join("heatmaps"), &stem)?);
        }
        if config.pooled {
            pooled_rows.extend(pooled_rows_for(model_cfg, &runs, &test, config.bins)?);
        }
        evaluations.push(VariantEvaluation::from_runs(model_cfg, &runs));
    }

    let split_counts: Vec<String> = Split::ALL
        .iter()
        .map(|&s| format!("{}={}", s.as_str(), dataset.split(s).len()))
        .collect();
    let metadata = ReportMetadata {
        dataset: dataset.manifest.name.clone(),
        split: format!("manifest splits ({}), metrics on test", split_counts.join(", ")),
        label_rule: config.label_rule.to_string(),
        mi_bins: config.bins,
        mi_units: "nats".into(),
        flops_bag_size: config.bag_size,
        seeds: config.train.seeds.clone(),
        train: Some(config.train.clone()),
    };
    let report = build_report(metadata, &evaluations)?;
    for (name, text) in [
        ("report.csv", render_table(&report, TableFormat::Csv)?),
        ("report.md", render_table(&report, TableFormat::Markdown)?),
    ] {
        let p = out.join(name);
        write_text(&p, &text)?;
        files.push(p);
    }
    let p = out.join("report.json");
    report.write_json(&p)?;
    files.push(p);
    if config.pooled {
        let p = out.join("pooled.csv");
        let mut w = csv::Writer::from_path(&p)?;
        w.write_record(["model", "scoring", "seed", "mi", "spearman", "auprc"])?;
        for row in &pooled_rows {
            w.write_record(row)?;
        }
        w.flush().map_err(|e| Error::io(&p, e))?;
        files.push(p);
    }
    Ok(BenchOutput {
        report: Some(report),
        files,
    })
}

fn slide_scores(run: &SeedRun, slide: &Slide, mode: ScoringMode) -> Result<Vec<f64>> {
    run.model().patch_scores(&slide.bag.features, mode)
}

fn pooled_rows_for(cfg: &ModelConfig, runs: &[SeedRun], test: &[&Slide], bins: usize) -> Result<Vec<[String; 6]>> {
    let mut rows = Vec::new();
    for mode in cfg.available_scorings() {
        for r in runs {
            let scores = test
                .iter()
                .map(|s| slide_scores(r, s, mode))
                .collect::<Result<Vec<_>>>()?;
            let pairs = test
                .iter()
                .zip(&scores)
                .filter_map(|(s, sc)| s.patch_labels.as_deref().map(|l| (sc.as_slice(), l)));
            let d = pooled_reliability(pairs, bins)?;
            rows.push([
                cfg.name(),
                mode.label().to_string(),
                r.seed.to_string(),
                format!("{:.6}", d.mi),
                format!("{:.6}", d.spearman),
                format!("{:.6}", d.auprc),
            ]);
        }
    }
    Ok(rows)
}

/// Heatmaps of the `top_k` test slides with the highest and lowest per-slide
/// AUPRC under each scoring mode of `run`'s model.
fn reliability_heatmaps(
    run: &SeedRun,
    test: &[&Slide],
    config: &BenchConfig,
    dir: &Path,
    stem: &str,
) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    if config.top_k == 0 {
        return Ok(files);
    }
    for (mode, per_slide) in &run.evaluation.reliability {
        let mut ranked: Vec<(usize, f64)> = per_slide
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.map(|r| (i, r.auprc)))
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let k = config.top_k.min(ranked.len());
        let sub = dir.join(format!("{stem}-{}", mode.label().to_ascii_lowercase()));
        create_dir(&sub)?;
        let picks = ranked[..k]
            .iter()
            .enumerate()
            .map(|(n, p)| ("most", n + 1, p.0))
            .chain(ranked[ranked.len() - k..].iter().rev().enumerate().map(|(n, p)| ("least", n + 1, p.0)));
        for (tag, rank, i) in picks {
            let slide = test[i];
            let scores = slide_scores(run, slide, *mode)?;
            let path = sub.join(format!("{tag}{rank}_{}.pgm", slide.bag.slide_id));
            files.extend(export_heatmap(
                &scores,
                &slide.grid,
                slide.patch_labels.as_deref(),
                &path,
                config.block,
            )?);
        }
    }
    Ok(files)
}

/// Markdown table of FLOPs and parameter count per variant.
pub fn cmd_cost(args: &CostArgs) -> Result<String> {
    if args.bag_size == 0 {
        return Err(Error::config("--bag-size must be positive"));
    }
    let configs: Vec<ModelConfig> = match &args.variants {
        Some(list) => list
            .split(',')
            .map(|v| v.parse::<ModelConfig>())
            .collect::<Result<_>>()?,
        None => standard_variants(),
    };
    let mut out = format!("| Model | FLOPs (N={}) | Model Size |\n|---|---|---|\n", args.bag_size);
    for c in configs {
        let c = c
            .with_dims(args.input_dim, args.embed_dim, args.attn_hidden)
            .with_classes(args.classes);
        c.validate()?;
        out.push_str(&format!(
            "| {} | {} | {} |\n",
            c.name(),
            format_mega(count_flops(&c, args.bag_size)),
            format_kilo(count_params(&c))
        ));
    }
    Ok(out)
}

pub fn cmd_heatmap(args: &HeatmapArgs) -> Result<Vec<PathBuf>> {
    let model = load_checkpoint(&args.checkpoint)?;
    let rule: LabelRule = args.label_rule.parse()?;
    let dataset = Dataset::load(&manifest_path(&args.data), rule)?;
    let mode = match &args.scoring {
        Some(s) => s.parse::<ScoringMode>()?,
        None => model
            .config()
            .scoring_mode
            .ok_or_else(|| Error::UnsupportedScoring {
                variant: model.config().name(),
                mode: "any".into(),
            })?,
    };
    let slides: Vec<&Slide> = if args.slides.is_empty() {
        dataset.split(Split::Test)
    } else {
        args.slides
            .iter()
            .map(|id| {
                dataset
                    .slides
                    .iter()
                    .find(|s| &s.bag.slide_id == id)
                    .ok_or_else(|| Error::config(format!("slide {id:?} not in dataset")))
            })
            .collect::<Result<_>>()?
    };
    create_dir(&args.out)?;
    let mut files = Vec::new();
    for s in slides {
        let scores = model.patch_scores(&s.bag.features, mode)?;
        let path = args.out.join(format!("{}.pgm", s.bag.slide_id));
        files.extend(export_heatmap(&scores, &s.grid, s.patch_labels.as_deref(), &path, args.block)?);
    }
    Ok(files)
}

pub fn cmd_report(args: &ReportArgs) -> Result<String> {
    let report = ExperimentReport::read_json(&args.input)?;
    let format = match args.format.as_str() {
        "csv" => TableFormat::Csv,
        "md" | "markdown" => TableFormat::Markdown,
        f => return Err(Error::config(format!("unknown table format {f:?} (csv or md)"))),
    };
    let text = render_table(&report, format)?;
    if let Some(p) = &args.out {
        write_text(p, &text)?;
    }
    Ok(text)
}
