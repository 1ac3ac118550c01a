//! Case manifest: where each case's ground truth and CT live.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use anyhow::{ensure, Context, Result};
use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseEntry {
    pub case_id: String,
    /// Container path relative to the data root.
    pub ground_truth: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ct: Option<String>,
    /// Free-form labels such as a split id.
    #[serde(default)]
    pub tags: BTreeMap<String, String>,
}

impl CaseEntry {
    pub fn matches(&self, filter: &BTreeMap<String, String>) -> bool {
        filter.iter().all(|(k, v)| self.tags.get(k) == Some(v))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub cases: Vec<CaseEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let m: Manifest =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        for c in &self.cases {
            ensure!(
                !c.case_id.is_empty()
                    && c.case_id
                        .chars()
                        .all(|ch| ch.is_ascii_alphanumeric() || "-_.".contains(ch))
                    && !c.case_id.starts_with('.'),
                "case_id {:?} may only use letters, digits and - _ .",
                c.case_id
            );
            ensure!(ids.insert(&c.case_id), "duplicate case_id {}", c.case_id);
        }
        Ok(())
    }

    pub fn select(&self, filter: &BTreeMap<String, String>) -> Vec<&CaseEntry> {
        self.cases.iter().filter(|c| c.matches(filter)).collect()
    }
}

/// Ground-truth container name inside a case directory.
pub const GT_NAME: &str = "gt";
/// Optional CT container name inside a case directory.
pub const CT_NAME: &str = "ct";

/// Builds a manifest from `<data_root>/<case_id>/gt.{json,raw}` (and `ct` if
/// present), in directory-name order.
pub fn ingest(data_root: &Path, tags: &BTreeMap<String, String>) -> Result<Manifest> {
    let mut dirs: Vec<String> = fs::read_dir(data_root)
        .with_context(|| format!("reading {}", data_root.display()))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .filter_map(|e| e.file_name().into_string().ok())
        .collect();
    dirs.sort();
    let has = |dir: &str, name: &str| {
        let p = data_root.join(dir);
        p.join(format!("{name}.json")).is_file() && p.join(format!("{name}.raw")).is_file()
    };
    let cases: Vec<CaseEntry> = dirs
        .iter()
        .filter(|d| has(d, GT_NAME))
        .map(|d| CaseEntry {
            case_id: d.clone(),
            ground_truth: format!("{d}/{GT_NAME}"),
            ct: has(d, CT_NAME).then(|| format!("{d}/{CT_NAME}")),
            tags: tags.clone(),
        })
        .collect();
    ensure!(
        !cases.is_empty(),
        "no case directories with a {GT_NAME} container under {}",
        data_root.display()
    );
    let m = Manifest { cases };
    m.validate()?;
    Ok(m)
}
