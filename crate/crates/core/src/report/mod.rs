//! Result tables (reliability, classification and cost columns) and
//! per-slide PGM heatmaps.

mod heatmap;
mod table;

pub use heatmap::{export_heatmap, ground_truth_path, quantize_scores, render_grid, Pgm, BACKGROUND};
pub use table::{
    build_report, parse_csv_table, render_table, ExperimentReport, ParsedRow, ReliabilityRow, ReportEntry,
    ReportMetadata, Stat, TableFormat, VariantEvaluation, COLUMNS,
};
