//! Materializes a synthetic study: phantoms, member logits for the three
//! model families, TTA predictions, a manifest and a 12-method run config.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};
use budgetqa_core::metrics::BudgetGrid;
use budgetqa_core::rng::{hash_str, mix, stream};
use budgetqa_core::synth::{generate_case, Blob, PhantomSpec};
use budgetqa_core::uq::{sample_tta_transforms, MemberKind};
use budgetqa_core::{write_volume, Dims, Spacing};
use rand::Rng;

use crate::config::{MethodConfig, RunConfig};
use crate::manifest::{CaseEntry, Manifest, MANIFEST_FILE};

pub const DATA_DIR: &str = "data";
pub const CONFIG_FILE: &str = "config.json";
pub const BUNDLE_DIR: &str = "bundle";

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    pub cases: usize,
    pub seed: u64,
    pub dims: Dims,
    pub spacing: Spacing,
    /// Models per ensemble (deep and checkpoint).
    pub members: usize,
    pub tta_n: usize,
    /// Logit sharpening applied to every model.
    pub sharpen: f64,
    /// Temperature written into the TS methods.
    pub temperature: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            cases: 10,
            seed: 0,
            dims: Dims::new(24, 48, 48),
            spacing: Spacing { z: 2.5, y: 1.0, x: 1.0 },
            members: 5,
            tta_n: 5,
            sharpen: 3.0,
            temperature: 3.0,
        }
    }
}

/// A model family and how its members differ.
struct Family {
    id: &'static str,
    members: usize,
    /// Jitter common to the family (one training run).
    shared: f64,
    /// Jitter per member.
    own: f64,
}

fn families(members: usize) -> [Family; 3] {
    [
        Family { id: "BASE", members: 1, shared: 1.0, own: 0.0 },
        // independent trainings
        Family { id: "DE", members, shared: 0.0, own: 1.0 },
        // snapshots of one training
        Family { id: "CE", members, shared: 1.0, own: 0.3 },
    ]
}

const VARIANTS: [(&str, bool, bool); 4] = [
    ("", false, false),
    ("+TS", true, false),
    ("+TTA", false, true),
    ("+TS+TTA", true, true),
];

pub fn case_id(i: usize) -> String {
    format!("case{i:03}")
}

fn member_file(family: &str, m: usize) -> String {
    format!("{family}_m{m}")
}

fn tta_file(family: &str, m: usize, k: usize) -> String {
    format!("{family}_m{m}_tta{k}")
}

pub fn tta_seed(seed: u64) -> u64 {
    mix(seed, hash_str("tta"))
}

/// Random blobs well inside the volume.
fn phantom(opts: &SynthOptions, id: &str) -> PhantomSpec {
    let case_seed = mix(opts.seed, hash_str(id));
    let mut rng = stream(case_seed, hash_str("layout"));
    let n = opts.dims.as_array();
    let s = opts.spacing.as_array();
    let count = rng.random_range(1..=2);
    let blobs = (0..count)
        .map(|_| Blob {
            center: [0, 1, 2].map(|a| rng.random_range(0.35..=0.65) * (n[a] as f64 - 1.0)),
            radii_mm: [0, 1, 2].map(|a| {
                let extent = n[a] as f64 * s[a];
                (rng.random_range(0.12..=0.22) * extent).max(1.5 * s[a])
            }),
            label: 1,
        })
        .collect();
    PhantomSpec {
        dims: opts.dims,
        spacing: opts.spacing,
        blobs,
        logit_gain: 1.0,
        noise_sigma: 1.0,
        sharpen: opts.sharpen,
        member_count: 1,
        shared_jitter: 0.0,
        member_jitter: 0.0,
        bernoulli_labels: false,
        seed: case_seed,
    }
}

/// The BASE/DE/CE x {none, TS, TTA, TS+TTA} methods over the synthetic files.
pub fn synthetic_methods(opts: &SynthOptions) -> Vec<MethodConfig> {
    let mut out = Vec::new();
    for f in families(opts.members) {
        for (suffix, ts, tta) in VARIANTS {
            let members = (0..f.members)
                .flat_map(|m| {
                    let per: Vec<String> = if tta {
                        (0..opts.tta_n)
                            .map(|k| format!("{{case}}/{}", tta_file(f.id, m, k)))
                            .collect()
                    } else {
                        vec![format!("{{case}}/{}", member_file(f.id, m))]
                    };
                    per
                })
                .collect();
            out.push(MethodConfig {
                method_id: format!("{}{suffix}", f.id),
                members,
                member_kind: MemberKind::Logits,
                ts_enabled: ts,
                ts_t: opts.temperature,
                tta_enabled: tta,
                tta_n: opts.tta_n,
                tta_seed: tta_seed(opts.seed),
            });
        }
    }
    out
}

/// Writes `<out>/data/...`, `<out>/data/manifest.json` and `<out>/config.json`
/// (bundle directed to `<out>/bundle`). Returns the config path.
pub fn synthesize(out: &Path, opts: &SynthOptions) -> Result<PathBuf> {
    ensure!(opts.cases >= 1, "at least one case");
    ensure!(opts.members >= 1 && opts.tta_n >= 1, "members and tta_n must be positive");
    let data = out.join(DATA_DIR);
    fs::create_dir_all(&data).with_context(|| format!("creating {}", data.display()))?;
    let transforms = sample_tta_transforms(opts.tta_n, tta_seed(opts.seed))?;
    let mut entries = Vec::with_capacity(opts.cases);
    for i in 0..opts.cases {
        let id = case_id(i);
        let dir = data.join(&id);
        let base = phantom(opts, &id);
        for (fi, f) in families(opts.members).into_iter().enumerate() {
            let spec = PhantomSpec {
                member_count: f.members,
                shared_jitter: f.shared,
                member_jitter: f.own,
                ..base.clone()
            };
            let case = generate_case::<f32>(&id, &spec, f.id)?;
            if fi == 0 {
                write_volume(&case.record.ground_truth, &dir.join("gt"))?;
                if let Some(ct) = &case.record.ct {
                    write_volume(ct, &dir.join("ct"))?;
                }
            }
            for (m, member) in case.prediction.members().iter().enumerate() {
                write_volume(member, &dir.join(member_file(f.id, m)))?;
                for (k, t) in transforms.iter().enumerate() {
                    write_volume(&case.tta_member(m, t)?, &dir.join(tta_file(f.id, m, k)))?;
                }
            }
        }
        entries.push(CaseEntry {
            case_id: id.clone(),
            ground_truth: format!("{id}/gt"),
            ct: Some(format!("{id}/ct")),
            tags: BTreeMap::from([("split".to_string(), (i % 4).to_string())]),
        });
    }
    Manifest { cases: entries }.save(&data.join(MANIFEST_FILE))?;
    let cfg = RunConfig {
        data_root: PathBuf::from(DATA_DIR),
        manifest: PathBuf::from(MANIFEST_FILE),
        methods: synthetic_methods(opts),
        case_tags: BTreeMap::new(),
        roi_delta_mm: 15.0,
        budget: BudgetGrid::default(),
        ece_bins: 20,
        point_budgets: vec![0.5, 1.0, 2.0, 5.0],
        alpha: 0.05,
        global_seed: opts.seed,
        output_dir: PathBuf::from(BUNDLE_DIR),
        threads: 0,
        cache_volumes: true,
    };
    let path = out.join(CONFIG_FILE);
    cfg.save(&path)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_methods() {
        let m = synthetic_methods(&SynthOptions::default());
        let ids: Vec<&str> = m.iter().map(|m| m.method_id.as_str()).collect();
        assert_eq!(ids.len(), 12);
        assert_eq!(&ids[..4], &["BASE", "BASE+TS", "BASE+TTA", "BASE+TS+TTA"]);
        assert!(ids.contains(&"CE+TS+TTA"));
        let de_tta = &m[6];
        assert_eq!(de_tta.method_id, "DE+TTA");
        assert_eq!(de_tta.members.len(), 25);
        assert_eq!(de_tta.members[1], "{case}/DE_m0_tta1");
        assert_eq!(de_tta.members[5], "{case}/DE_m1_tta0");
    }

    #[test]
    fn blobs_are_valid() {
        let o = SynthOptions::default();
        for i in 0..50 {
            phantom(&o, &case_id(i)).validate().unwrap();
        }
    }
}
