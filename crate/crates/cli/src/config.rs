//! Run configuration, stored as JSON.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use budgetqa_core::metrics::{BudgetGrid, SuiteConfig, DEFAULT_ECE_BINS, DEFAULT_POINT_BUDGETS};
use budgetqa_core::roi::DEFAULT_DELTA_MM;
use budgetqa_core::uq::{MemberKind, TemperatureConfig};
use serde::{Deserialize, Serialize};

/// Placeholder replaced by the case id in member patterns.
pub const CASE_PLACEHOLDER: &str = "{case}";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    pub method_id: String,
    /// Container paths relative to `data_root`, with `{case}` substituted.
    /// With TTA on, the list is member-major: `tta_n` consecutive entries
    /// per model, entry `k` predicted under transform `k`.
    pub members: Vec<String>,
    #[serde(default = "default_kind")]
    pub member_kind: MemberKind,
    #[serde(default)]
    pub ts_enabled: bool,
    #[serde(default = "default_t")]
    pub ts_t: f64,
    #[serde(default)]
    pub tta_enabled: bool,
    #[serde(default = "default_tta_n")]
    pub tta_n: usize,
    #[serde(default)]
    pub tta_seed: u64,
}

fn default_kind() -> MemberKind {
    MemberKind::Logits
}
fn default_t() -> f64 {
    3.0
}
fn default_tta_n() -> usize {
    5
}

impl MethodConfig {
    pub fn temperature(&self) -> TemperatureConfig {
        TemperatureConfig {
            temperature: self.ts_t,
            enabled: self.ts_enabled,
        }
    }

    pub fn member_paths(&self, data_root: &Path, case_id: &str) -> Vec<PathBuf> {
        self.members
            .iter()
            .map(|m| data_root.join(m.replace(CASE_PLACEHOLDER, case_id)))
            .collect()
    }

    fn validate(&self) -> Result<()> {
        ensure!(!self.method_id.is_empty(), "empty method_id");
        ensure!(
            self.method_id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || "+-_.".contains(c)),
            "method_id {:?} may only use letters, digits and + - _ .",
            self.method_id
        );
        ensure!(!self.members.is_empty(), "method {} lists no members", self.method_id);
        self.temperature()
            .validate()
            .with_context(|| format!("method {}", self.method_id))?;
        if self.ts_enabled && self.member_kind == MemberKind::Probability {
            bail!("method {}: temperature scaling needs logit members", self.method_id);
        }
        if self.tta_enabled {
            ensure!(self.tta_n >= 1, "method {}: tta_n must be at least 1", self.method_id);
            ensure!(
                self.members.len() % self.tta_n == 0,
                "method {}: {} members is not a multiple of tta_n = {}",
                self.method_id,
                self.members.len(),
                self.tta_n
            );
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data_root: PathBuf,
    #[serde(default = "default_manifest")]
    pub manifest: PathBuf,
    pub methods: Vec<MethodConfig>,
    /// Only cases whose tags contain every pair here are processed.
    #[serde(default)]
    pub case_tags: BTreeMap<String, String>,
    #[serde(default = "default_delta")]
    pub roi_delta_mm: f64,
    #[serde(default)]
    pub budget: BudgetGrid,
    #[serde(default = "default_bins")]
    pub ece_bins: usize,
    #[serde(default = "default_points")]
    pub point_budgets: Vec<f64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub global_seed: u64,
    pub output_dir: PathBuf,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub threads: usize,
    /// Write probability, entropy and hard-prediction volumes to the bundle.
    #[serde(default = "default_true")]
    pub cache_volumes: bool,
}

fn default_manifest() -> PathBuf {
    PathBuf::from("manifest.json")
}
fn default_delta() -> f64 {
    DEFAULT_DELTA_MM
}
fn default_bins() -> usize {
    DEFAULT_ECE_BINS
}
fn default_points() -> Vec<f64> {
    DEFAULT_POINT_BUDGETS.to_vec()
}
fn default_alpha() -> f64 {
    0.05
}
fn default_true() -> bool {
    true
}

impl RunConfig {
    /// Reads a config; relative `data_root` and `output_dir` are taken
    /// relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        if cfg.data_root.is_relative() {
            cfg.data_root = base.join(&cfg.data_root);
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }

    pub fn suite(&self) -> SuiteConfig {
        SuiteConfig {
            roi_delta_mm: self.roi_delta_mm,
            ece_bins: self.ece_bins,
            budgets: self.budget,
            point_budgets: self.point_budgets.clone(),
        }
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.data_root.join(&self.manifest)
    }

    pub fn method(&self, id: &str) -> Option<&MethodConfig> {
        self.methods.iter().find(|m| m.method_id == id)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(!self.methods.is_empty(), "config lists no methods");
        let mut seen = BTreeSet::new();
        for m in &self.methods {
            m.validate()?;
            ensure!(seen.insert(&m.method_id), "duplicate method_id {}", m.method_id);
        }
        ensure!(
            self.alpha > 0.0 && self.alpha < 1.0,
            "alpha must lie in (0, 1), got {}",
            self.alpha
        );
        self.suite().validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> &'static str {
        r#"{"data_root": "data", "output_dir": "out",
            "methods": [{"method_id": "BASE", "members": ["{case}/base"]}]}"#
    }

    #[test]
    fn defaults_and_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.json");
        fs::write(&p, minimal()).unwrap();
        let cfg = RunConfig::load(&p).unwrap();
        assert_eq!(cfg.data_root, dir.path().join("data"));
        assert_eq!(cfg.output_dir, dir.path().join("out"));
        assert_eq!(cfg.roi_delta_mm, 15.0);
        assert_eq!(cfg.ece_bins, 20);
        assert_eq!(cfg.point_budgets, vec![0.5, 1.0, 2.0, 5.0]);
        assert_eq!(cfg.budget, BudgetGrid::default());
        assert_eq!(cfg.alpha, 0.05);
        let m = &cfg.methods[0];
        assert_eq!(m.member_kind, MemberKind::Logits);
        assert!(!m.ts_enabled && !m.tta_enabled);
        assert_eq!(
            m.member_paths(Path::new("/d"), "c7"),
            vec![PathBuf::from("/d/c7/base")]
        );
    }

    #[test]
    fn rejects_bad_configs() {
        let base: RunConfig = serde_json::from_str(minimal()).unwrap();
        let mut c = base.clone();
        c.methods.push(c.methods[0].clone());
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.methods[0].tta_enabled = true;
        c.methods[0].tta_n = 2;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.methods[0].member_kind = MemberKind::Probability;
        c.methods[0].ts_enabled = true;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.point_budgets = vec![0.55];
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.methods[0].method_id = "a/b".into();
        assert!(c.validate().is_err());
        let mut c = base;
        c.alpha = 1.0;
        assert!(c.validate().is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"data_root":"d","output_dir":"o","methods":[],"bogus":1}"#).is_err());
    }
}
