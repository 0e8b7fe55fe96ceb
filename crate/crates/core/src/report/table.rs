use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classification::{aggregate_seeds, f1, roc_auc};
use crate::error::{Error, Result};
use crate::models::{count_flops, count_params, format_kilo, format_mega, ModelConfig, ScoringMode};
use crate::reliability::dataset_reliability;
use crate::training::{Evaluation, SeedRun, TrainConfig};

pub const COLUMNS: [&str; 8] = ["Model", "MI", "Spearman's", "AUPRC", "AUC", "F1", "FLOPs", "Model Size"];

/// Mean over seeds; the standard deviation is kept only for two or more seeds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: Option<f64>,
}

impl Stat {
    pub fn from_seeds(values: &[f64]) -> Result<Self> {
        match values {
            [] => Err(Error::TooFewValues { needed: 1, got: 0 }),
            [v] => Ok(Self { mean: *v, std: None }),
            _ => {
                let (mean, std) = aggregate_seeds(values)?;
                Ok(Self { mean, std: Some(std) })
            }
        }
    }

    pub fn format(&self, decimals: usize) -> String {
        match self.std {
            Some(s) => format!("{:.*} ± {:.*}", decimals, self.mean, decimals, s),
            None => format!("{:.*}", decimals, self.mean),
        }
    }

    pub fn parse(cell: &str) -> Result<Self> {
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::config(format!("cannot parse table cell {cell:?}")))
        };
        match cell.split_once('±') {
            Some((m, s)) => Ok(Self {
                mean: num(m)?,
                std: Some(num(s)?),
            }),
            None => Ok(Self { mean: num(cell)?, std: None }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityRow {
    pub scoring: ScoringMode,
    pub mi: Stat,
    pub spearman: Stat,
    pub auprc: Stat,
}

/// One evaluated model: its reliability rows (none for MEAN-POOL) share the
/// classification and cost block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub model: String,
    pub config: ModelConfig,
    pub reliability: Vec<ReliabilityRow>,
    pub auc: Stat,
    pub f1: Stat,
    pub flops: u64,
    pub params: usize,
}

impl ReportEntry {
    /// Table label of each reliability row, e.g. `ABMIL-ADD-ATT`.
    pub fn row_labels(&self) -> Vec<String> {
        if self.reliability.len() <= 1 {
            return vec![self.model.clone()];
        }
        self.reliability
            .iter()
            .map(|r| format!("{}-{}", self.model, r.scoring.label()))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub dataset: String,
    pub split: String,
    pub label_rule: String,
    pub mi_bins: usize,
    pub mi_units: String,
    pub flops_bag_size: usize,
    pub seeds: Vec<u64>,
    pub train: Option<TrainConfig>,
}

impl Default for ReportMetadata {
    fn default() -> Self {
        Self {
            dataset: String::new(),
            split: String::new(),
            label_rule: String::new(),
            mi_bins: crate::reliability::DEFAULT_BINS,
            mi_units: "nats".into(),
            flops_bag_size: 120,
            seeds: Vec::new(),
            train: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub metadata: ReportMetadata,
    pub entries: Vec<ReportEntry>,
}

/// Test-set evaluations of one model configuration, one per seed.
#[derive(Clone, Debug)]
pub struct VariantEvaluation {
    pub config: ModelConfig,
    pub seeds: Vec<u64>,
    pub evaluations: Vec<Evaluation>,
}

impl VariantEvaluation {
    pub fn from_runs(config: &ModelConfig, runs: &[SeedRun]) -> Self {
        Self {
            config: config.clone(),
            seeds: runs.iter().map(|r| r.seed).collect(),
            evaluations: runs.iter().map(|r| r.evaluation.clone()).collect(),
        }
    }
}

/// Aggregates per-seed metrics into one entry per variant. Every variant must
/// have been run on the same seeds as `metadata.seeds` (or as the first
/// variant when that list is empty).
pub fn build_report(mut metadata: ReportMetadata, variants: &[VariantEvaluation]) -> Result<ExperimentReport> {
    if metadata.seeds.is_empty() {
        if let Some(v) = variants.first() {
            metadata.seeds = v.seeds.clone();
        }
    }
    let mut expected = metadata.seeds.clone();
    expected.sort_unstable();
    let mut entries = Vec::with_capacity(variants.len());
    for v in variants {
        let mut seeds = v.seeds.clone();
        seeds.sort_unstable();
        if seeds != expected || v.seeds.len() != v.evaluations.len() {
            return Err(Error::config(format!(
                "{} was run on seeds {:?}, expected {:?}",
                v.config.name(),
                v.seeds,
                metadata.seeds
            )));
        }
        if v.evaluations.is_empty() {
            return Err(Error::config(format!("{} has no evaluations", v.config.name())));
        }
        let aucs = v.evaluations.iter().map(|e| roc_auc(&e.runs)).collect::<Result<Vec<_>>>()?;
        let f1s = v.evaluations.iter().map(|e| f1(&e.runs)).collect::<Result<Vec<_>>>()?;

        let mut reliability = Vec::new();
        for (k, (mode, _)) in v.evaluations[0].reliability.iter().enumerate() {
            let (mut mi, mut rs, mut ap) = (Vec::new(), Vec::new(), Vec::new());
            for e in &v.evaluations {
                let (m, per) = e
                    .reliability
                    .get(k)
                    .ok_or_else(|| Error::config("evaluations disagree on scoring modes"))?;
                if m != mode {
                    return Err(Error::config("evaluations disagree on scoring modes"));
                }
                let d = dataset_reliability(per)?;
                mi.push(d.mi);
                rs.push(d.spearman);
                ap.push(d.auprc);
            }
            reliability.push(ReliabilityRow {
                scoring: *mode,
                mi: Stat::from_seeds(&mi)?,
                spearman: Stat::from_seeds(&rs)?,
                auprc: Stat::from_seeds(&ap)?,
            });
        }
        entries.push(ReportEntry {
            model: v.config.name(),
            config: v.config.clone(),
            reliability,
            auc: Stat::from_seeds(&aucs)?,
            f1: Stat::from_seeds(&f1s)?,
            flops: count_flops(&v.config, metadata.flops_bag_size),
            params: count_params(&v.config),
        });
    }
    Ok(ExperimentReport { metadata, entries })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Markdown,
}

const DASH: &str = "–";

/// Cells of every table row. Continuation rows of a multi-row entry leave the
/// shared block empty when `repeat_shared` is false.
fn table_rows(report: &ExperimentReport, repeat_shared: bool) -> Vec<[String; 8]> {
    let mut rows = Vec::new();
    for e in &report.entries {
        let shared = [e.auc.format(3), e.f1.format(3), format_mega(e.flops), format_kilo(e.params)];
        let labels = e.row_labels();
        if e.reliability.is_empty() {
            let [a, b, c, d] = shared;
            rows.push([labels[0].clone(), DASH.into(), DASH.into(), DASH.into(), a, b, c, d]);
            continue;
        }
        for (i, (r, label)) in e.reliability.iter().zip(labels).enumerate() {
            let block = if i == 0 || repeat_shared {
                shared.clone()
            } else {
                Default::default()
            };
            let [a, b, c, d] = block;
            rows.push([label, r.mi.format(4), r.spearman.format(4), r.auprc.format(4), a, b, c, d]);
        }
    }
    rows
}

pub fn render_table(report: &ExperimentReport, format: TableFormat) -> Result<String> {
    match format {
        TableFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(COLUMNS)?;
            for row in table_rows(report, true) {
                w.write_record(&row)?;
            }
            let bytes = w.into_inner().map_err(|e| Error::config(e.to_string()))?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
        TableFormat::Markdown => {
            let mut out = format!("| {} |\n|{}\n", COLUMNS.join(" | "), "---|".repeat(COLUMNS.len()));
            for row in table_rows(report, false) {
                out.push_str(&format!("| {} |\n", row.join(" | ")));
            }
            Ok(out)
        }
    }
}

/// A row parsed back from the CSV table. Reliability is `None` for "–" cells.
#[derive(Clone, Debug, PartialEq)]
pub struct ParsedRow {
    pub model: String,
    pub mi: Option<Stat>,
    pub spearman: Option<Stat>,
    pub auprc: Option<Stat>,
    pub auc: Stat,
    pub f1: Stat,
    /// In millions.
    pub flops_m: f64,
    /// In thousands.
    pub size_k: f64,
}

pub fn parse_csv_table(text: &str) -> Result<Vec<ParsedRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    if header != COLUMNS {
        return Err(Error::config(format!("unexpected table header {header:?}")));
    }
    let opt = |cell: &str| -> Result<Option<Stat>> {
        if cell == DASH {
            Ok(None)
        } else {
            Stat::parse(cell).map(Some)
        }
    };
    let unit = |cell: &str, suffix: &str| -> Result<f64> {
        cell.strip_suffix(suffix)
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| Error::config(format!("cannot parse {cell:?}")))
    };
    r.records()
        .map(|rec| {
            let rec = rec?;
            Ok(ParsedRow {
                model: rec[0].to_string(),
                mi: opt(&rec[1])?,
                spearman: opt(&rec[2])?,
                auprc: opt(&rec[3])?,
                auc: Stat::parse(&rec[4])?,
                f1: Stat::parse(&rec[5])?,
                flops_m: unit(&rec[6], "M")?,
                size_k: unit(&rec[7], "K")?,
            })
        })
        .collect()
}

impl ExperimentReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classification::EvalRun;
    use crate::models::Variant;
    use crate::reliability::ReliabilityResult;

    fn evaluation(modes: &[ScoringMode], auprc: f64) -> Evaluation {
        let rel = ReliabilityResult {
            mi: 0.1,
            spearman: 0.2,
            auprc,
            n_pos: 1,
            n_neg: 1,
        };
        Evaluation {
            slide_ids: vec!["a".into(), "b".into()],
            runs: vec![EvalRun::new(vec![0.8, 0.2], 0), EvalRun::new(vec![0.3, 0.7], 1)],
            reliability: modes.iter().map(|&m| (m, vec![Some(rel), None])).collect(),
        }
    }

    fn variant(config: ModelConfig, seeds: &[u64]) -> VariantEvaluation {
        let modes = config.available_scorings();
        VariantEvaluation {
            config,
            seeds: seeds.to_vec(),
            evaluations: seeds.iter().map(|&s| evaluation(&modes, 0.5 + s as f64 * 0.1)).collect(),
        }
    }

    #[test]
    fn stat_formatting() {
        assert_eq!(Stat { mean: 0.30974, std: None }.format(4), "0.3097");
        assert_eq!(Stat { mean: 0.5, std: Some(0.01234) }.format(3), "0.500 ± 0.012");
        let s = Stat::parse("0.7841 ± 0.0780").unwrap();
        assert_eq!(s, Stat { mean: 0.7841, std: Some(0.078) });
    }

    #[test]
    fn single_seed_has_no_std() {
        let r = build_report(ReportMetadata::default(), &[variant(ModelConfig::new(Variant::Abmil), &[0])]).unwrap();
        assert_eq!(r.entries.len(), 1);
        assert!(r.entries[0].auc.std.is_none());
        assert!(r.entries[0].reliability[0].auprc.std.is_none());
    }

    #[test]
    fn mean_pool_dashes_and_additive_rows() {
        let vs = [
            variant(ModelConfig::new(Variant::MeanPool), &[0, 1]),
            variant(ModelConfig::new(Variant::Abmil).with_additive(true), &[0, 1]),
        ];
        let r = build_report(ReportMetadata::default(), &vs).unwrap();
        let md = render_table(&r, TableFormat::Markdown).unwrap();
        let lines: Vec<&str> = md.lines().collect();
        assert_eq!(lines.len(), 5);
        assert!(lines[2].starts_with("| MEAN-POOL | – | – | – | 1.000"));
        assert!(lines[3].starts_with("| ABMIL-ADD-ATT | 0.1000 ± 0.0000 |"));
        assert!(lines[4].starts_with("| ABMIL-ADD-PATCH |"));
        assert!(lines[4].ends_with("|  |  |  |  |"));
        assert!(lines[2].contains("62.9 M") && lines[2].contains("525.8 K"));
    }

    #[test]
    fn inconsistent_seeds_rejected() {
        let vs = [
            variant(ModelConfig::new(Variant::MaxPool), &[0, 1]),
            variant(ModelConfig::new(Variant::Abmil), &[0, 2]),
        ];
        assert!(build_report(ReportMetadata::default(), &vs).is_err());
    }

    #[test]
    fn empty_report_is_header_only() {
        let r = build_report(ReportMetadata::default(), &[]).unwrap();
        assert_eq!(render_table(&r, TableFormat::Csv).unwrap().lines().count(), 1);
        assert_eq!(render_table(&r, TableFormat::Markdown).unwrap().lines().count(), 2);
    }

    #[test]
    fn csv_round_trip() {
        let vs = [
            variant(ModelConfig::new(Variant::MeanPool), &[0, 1, 2]),
            variant(ModelConfig::new(Variant::MaxPoolIns), &[0, 1, 2]),
        ];
        let r = build_report(ReportMetadata::default(), &vs).unwrap();
        let csv = render_table(&r, TableFormat::Csv).unwrap();
        let rows = parse_csv_table(&csv).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].model, "MEAN-POOL");
        assert!(rows[0].mi.is_none());
        assert_eq!(rows[1].model, "MAX-POOL-INS-MAXSEL");
        let ap = rows[2].auprc.unwrap();
        let want = r.entries[1].reliability[1].auprc;
        assert!((ap.mean - want.mean).abs() <= 5e-5);
        assert!((ap.std.unwrap() - want.std.unwrap()).abs() <= 5e-5);
        assert!((rows[2].flops_m - r.entries[1].flops as f64 / 1e6).abs() <= 0.05);
        assert!((rows[2].size_k - r.entries[1].params as f64 / 1e3).abs() <= 0.05);
    }
}
