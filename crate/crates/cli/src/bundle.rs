//! Layout of a report bundle on disk, and loading one back.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};
use budgetqa_core::metrics::{BudgetCurve, BudgetGrid};
use serde::{Deserialize, Serialize};

use crate::config::{MethodConfig, RunConfig};
use crate::manifest::CaseEntry;
use crate::report::{read_metrics_csv, MetricColumn, MetricsRecord};

pub const BUNDLE_JSON: &str = "bundle.json";
pub const METRICS_CSV: &str = "metrics.csv";
pub const CURVES_CSV: &str = "budget_curves.csv";
pub const CURVES_JSON: &str = "curves.json";
pub const STATS_JSON: &str = "stats.json";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const SUMMARY_MD: &str = "summary.md";
pub const CACHE_DIR: &str = "cache";
pub const REVIEW_DIR: &str = "review";

pub const FORMAT_VERSION: u32 = 1;

/// Cached volume kinds under `cache/<case>/<method>/`.
pub const CACHE_PROB: &str = "prob";
pub const CACHE_ENTROPY: &str = "entropy";
pub const CACHE_PRED: &str = "pred";

/// Everything needed to reinterpret the bundle. Thread count and output
/// location are left out so bundles compare byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleIndex {
    pub format_version: u32,
    pub data_root: PathBuf,
    pub global_seed: u64,
    pub alpha: f64,
    pub roi_delta_mm: f64,
    pub ece_bins: usize,
    pub budget: BudgetGrid,
    pub point_budgets: Vec<f64>,
    pub cache_volumes: bool,
    pub methods: Vec<MethodConfig>,
    pub cases: Vec<CaseEntry>,
}

impl BundleIndex {
    pub fn new(cfg: &RunConfig, cases: Vec<CaseEntry>) -> Self {
        BundleIndex {
            format_version: FORMAT_VERSION,
            data_root: cfg.data_root.clone(),
            global_seed: cfg.global_seed,
            alpha: cfg.alpha,
            roi_delta_mm: cfg.roi_delta_mm,
            ece_bins: cfg.ece_bins,
            budget: cfg.budget,
            point_budgets: cfg.point_budgets.clone(),
            cache_volumes: cfg.cache_volumes,
            methods: cfg.methods.clone(),
            cases,
        }
    }

    pub fn case(&self, id: &str) -> Option<&CaseEntry> {
        self.cases.iter().find(|c| c.case_id == id)
    }

    pub fn has_method(&self, id: &str) -> bool {
        self.methods.iter().any(|m| m.method_id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub case_id: String,
    pub method_id: String,
    pub curve: BudgetCurve,
}

pub fn cache_path(dir: &Path, case_id: &str, method_id: &str, kind: &str) -> PathBuf {
    dir.join(CACHE_DIR).join(case_id).join(method_id).join(kind)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// A finished bundle, loaded for reporting or serving.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub dir: PathBuf,
    pub index: BundleIndex,
    pub columns: Vec<MetricColumn>,
    pub records: Vec<MetricsRecord>,
    pub curves: Vec<CurveRecord>,
}

impl Bundle {
    pub fn open(dir: &Path) -> Result<Self> {
        ensure!(dir.is_dir(), "bundle directory {} not found", dir.display());
        let index: BundleIndex = read_json(&dir.join(BUNDLE_JSON))?;
        ensure!(
            index.format_version == FORMAT_VERSION,
            "unsupported bundle format {}",
            index.format_version
        );
        let (columns, records) = read_metrics_csv(&dir.join(METRICS_CSV))?;
        let curves: Vec<CurveRecord> = read_json(&dir.join(CURVES_JSON))?;
        Ok(Bundle {
            dir: dir.to_path_buf(),
            index,
            columns,
            records,
            curves,
        })
    }

    pub fn record(&self, case_id: &str, method_id: &str) -> Option<&MetricsRecord> {
        self.records
            .iter()
            .find(|r| r.case_id == case_id && r.method_id == method_id)
    }

    pub fn curve(&self, case_id: &str, method_id: &str) -> Option<&CurveRecord> {
        self.curves
            .iter()
            .find(|r| r.case_id == case_id && r.method_id == method_id)
    }

    pub fn cache(&self, case_id: &str, method_id: &str, kind: &str) -> PathBuf {
        cache_path(&self.dir, case_id, method_id, kind)
    }
}
