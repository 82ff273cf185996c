//! Artifact file names and the row layouts of the CSV artifacts.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::MetricsReport;
use crate::models::{ModelConfig, ModelFamily};

pub const EVENTS: &str = "events.csv";
pub const ADMISSIONS: &str = "admissions.csv";
pub const COHORT: &str = "cohort.csv";
pub const ATTRITION: &str = "attrition.json";
pub const GROUP_COMPARISON: &str = "group_comparison.csv";
pub const TRAIN_RAW: &str = "train_raw.csv";
pub const TEST_RAW: &str = "test_raw.csv";
pub const SPLIT_COMPARISON: &str = "split_comparison.csv";
pub const PREPROCESS: &str = "preprocess.json";
pub const TRAIN_PROCESSED: &str = "train.csv";
pub const FEATURES: &str = "features.csv";
pub const SELECTION: &str = "selection.json";
pub const CV: &str = "cv.csv";
pub const GRID: &str = "grid.json";
pub const METRICS: &str = "metrics.json";
pub const ROC: &str = "roc.csv";
pub const SHAP: &str = "shap.csv";
pub const SHAP_SUMMARY: &str = "shap_summary.csv";
pub const ALE: &str = "ale.csv";
pub const ABLATION: &str = "ablation.csv";
pub const POSTERIOR: &str = "posterior.json";
pub const POSTERIOR_HIST: &str = "posterior_hist.csv";
pub const REPORT: &str = "report.md";
pub const CONFIG: &str = "config.json";
pub const MANIFEST: &str = "manifest.json";

pub const ROC_SVG: &str = "roc.svg";
pub const ABLATION_SVG: &str = "ablation.svg";
pub const SHAP_SVG: &str = "shap_beeswarm.svg";
pub const POSTERIOR_SVG: &str = "posterior.svg";

/// Saved risk model (preprocessing plus classifier) of a family.
pub fn model_path(family: ModelFamily) -> String {
    format!("models/{family}.json")
}

pub fn ale_svg(feature: &str) -> String {
    format!("ale_{feature}.svg")
}

pub const ARTIFACT_SCHEMA_VERSION: u32 = 1;

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a CSV artifact, naming the file in schema errors.
pub fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .map(|row| row.map_err(|e| Error::Schema(format!("{}: {e}", path.display()))))
        .collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let s = std::fs::read_to_string(path)?;
    serde_json::from_str(&s).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitComparisonRow {
    pub feature: String,
    pub n_train: usize,
    pub mean_train: f64,
    pub sd_train: f64,
    pub n_test: usize,
    pub mean_test: f64,
    pub sd_test: f64,
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub family: ModelFamily,
    pub candidate: usize,
    pub fold: usize,
    pub auroc: f64,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCandidate {
    pub config: ModelConfig,
    pub mean_auroc: f64,
    pub fold_auroc: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyGrid {
    pub family: ModelFamily,
    pub best: usize,
    pub candidates: Vec<GridCandidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFile {
    pub schema_version: u32,
    pub n_folds: usize,
    pub families: Vec<FamilyGrid>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub family: ModelFamily,
    pub cv_mean_auroc: f64,
    pub cv_sd_auroc: f64,
    pub test: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub schema_version: u32,
    pub primary_family: ModelFamily,
    pub n_test: usize,
    pub test_prevalence: f64,
    pub models: Vec<ModelMetrics>,
}

impl MetricsFile {
    pub fn get(&self, family: ModelFamily) -> Option<&ModelMetrics> {
        self.models.iter().find(|m| m.family == family)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocRow {
    pub family: ModelFamily,
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// One (row, feature) SHAP value of the primary model on the test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapRow {
    /// Row index in `test_raw.csv`.
    pub row: usize,
    pub feature: String,
    /// Model input (imputed and scaled).
    pub value: f64,
    /// Value before preprocessing; empty when missing.
    pub raw_value: Option<f64>,
    pub phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapSummaryRow {
    pub rank: usize,
    pub feature: String,
    pub mean_abs_phi: f64,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AleRow {
    pub feature: String,
    /// Bin edge in model-input (scaled) units.
    pub edge: f64,
    /// The same edge in original units.
    pub edge_raw: f64,
    /// Centered accumulated effect on the predicted probability.
    pub ale: f64,
    /// Rows in the bin starting at this edge; empty for the last edge.
    pub bin_count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCsvRow {
    pub rank: usize,
    pub feature: String,
    pub baseline_auroc: f64,
    pub auroc_without: f64,
    pub delta_auroc: f64,
    pub boot_mean: Option<f64>,
    pub boot_sd: Option<f64>,
    pub boot_low: Option<f64>,
    pub boot_high: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub bin_low: f64,
    pub bin_high: f64,
    pub count: usize,
}
