//! Batch evaluation: every (case, method) pair of a run config.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use budgetqa_core::metrics::evaluate_case;
use budgetqa_core::rng::case_method_seed;
use budgetqa_core::uq::{
    invert_transform_prob, sample_tta_transforms, temperature_softmax, MemberKind, ProbabilityMean,
};
use budgetqa_core::volgrid::{container_paths, read_f32, read_mask};
use budgetqa_core::{write_volume, ProbGrid};
use rayon::prelude::*;

use crate::bundle::{
    cache_path, write_json, BundleIndex, CurveRecord, BUNDLE_JSON, CACHE_ENTROPY, CACHE_PRED,
    CACHE_PROB, CURVES_CSV, CURVES_JSON, METRICS_CSV,
};
use crate::config::{MethodConfig, RunConfig};
use crate::manifest::{CaseEntry, Manifest};
use crate::report::{metric_columns, write_metrics_csv, write_reports, MetricsRecord, StatsReport};

#[derive(Debug)]
pub struct RunOutcome {
    pub bundle_dir: PathBuf,
    pub records: Vec<MetricsRecord>,
    pub stats: StatsReport,
}

fn container_exists(p: &Path) -> bool {
    let (h, r) = container_paths(p);
    h.is_file() && r.is_file()
}

/// Lists every input volume the config refers to that is not on disk.
pub fn missing_inputs(cfg: &RunConfig, cases: &[&CaseEntry]) -> Vec<String> {
    let mut missing = Vec::new();
    for c in cases {
        let gt = cfg.data_root.join(&c.ground_truth);
        if !container_exists(&gt) {
            missing.push(format!("{} ground truth: {}", c.case_id, gt.display()));
        }
        if let Some(ct) = &c.ct {
            let ct = cfg.data_root.join(ct);
            if !container_exists(&ct) {
                missing.push(format!("{} ct: {}", c.case_id, ct.display()));
            }
        }
        for m in &cfg.methods {
            for p in m.member_paths(&cfg.data_root, &c.case_id) {
                if !container_exists(&p) {
                    missing.push(format!("{} / {}: {}", c.case_id, m.method_id, p.display()));
                }
            }
        }
    }
    missing
}

/// Mean foreground probability of one method on one case: each member file is
/// temperature-scaled, mapped back to the original frame when it was
/// predicted under a TTA transform, and averaged.
pub fn aggregate_members(method: &MethodConfig, paths: &[PathBuf]) -> Result<ProbGrid> {
    let ts = method.temperature();
    let transforms = if method.tta_enabled {
        ensure!(
            paths.len() % method.tta_n == 0,
            "{} member files for tta_n = {}",
            paths.len(),
            method.tta_n
        );
        Some(sample_tta_transforms(method.tta_n, method.tta_seed)?)
    } else {
        None
    };
    let mut acc = ProbabilityMean::new();
    for (j, p) in paths.iter().enumerate() {
        let v = read_f32(p).with_context(|| format!("member {}", p.display()))?;
        let prob = match method.member_kind {
            MemberKind::Logits => {
                v.expect_channels(2)?;
                temperature_softmax(&v, &ts)?
            }
            MemberKind::Probability => {
                v.expect_channels(1)?;
                v.ensure_unit_range("member probability")?;
                v
            }
        };
        let prob = match &transforms {
            Some(t) => invert_transform_prob(&prob, &t[j % method.tta_n])?,
            None => prob,
        };
        acc.push(&prob)
            .with_context(|| format!("member {}", p.display()))?;
    }
    Ok(acc.finish()?)
}

struct Evaluated {
    record: MetricsRecord,
    curve: CurveRecord,
}

fn evaluate_item(cfg: &RunConfig, case: &CaseEntry, method: &MethodConfig) -> Result<Evaluated> {
    let gt = read_mask(&cfg.data_root.join(&case.ground_truth))?;
    let paths = method.member_paths(&cfg.data_root, &case.case_id);
    let prob = aggregate_members(method, &paths)?;
    gt.same_geometry(&prob)?;
    let seed = case_method_seed(cfg.global_seed, &case.case_id, &method.method_id);
    let ev = evaluate_case(&prob, &gt, &cfg.suite(), seed)?;
    if cfg.cache_volumes {
        let at = |kind| cache_path(&cfg.output_dir, &case.case_id, &method.method_id, kind);
        write_volume(&prob, &at(CACHE_PROB))?;
        write_volume(&ev.entropy, &at(CACHE_ENTROPY))?;
        write_volume(&ev.prediction, &at(CACHE_PRED))?;
    }
    Ok(Evaluated {
        record: MetricsRecord::from_row(&case.case_id, &method.method_id, &ev.row),
        curve: CurveRecord {
            case_id: case.case_id.clone(),
            method_id: method.method_id.clone(),
            curve: ev.curve,
        },
    })
}

fn write_curves_csv(path: &Path, curves: &[CurveRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record([
        "case_id", "method_id", "budget", "ueo", "cov_tp", "cov_fp", "cov_fn", "cov_tn",
        "plateau_sampled",
    ])?;
    for r in curves {
        let c = &r.curve;
        for i in 0..c.budgets.len() {
            w.write_record([
                r.case_id.clone(),
                r.method_id.clone(),
                c.budgets[i].to_string(),
                c.ueo[i].to_string(),
                c.cov_tp[i].to_string(),
                c.cov_fp[i].to_string(),
                c.cov_fn[i].to_string(),
                c.cov_tn[i].to_string(),
                u8::from(c.plateau_sampled[i]).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Runs the whole config and writes the bundle. Results do not depend on the
/// thread count: work items are independent and every random draw is keyed
/// by (seed, case, method, budget).
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let manifest = Manifest::load(&cfg.manifest_path())?;
    let cases = manifest.select(&cfg.case_tags);
    ensure!(!cases.is_empty(), "no case in the manifest matches the tag filter");
    let missing = missing_inputs(cfg, &cases);
    if !missing.is_empty() {
        bail!(
            "{} input volume(s) missing:\n  {}",
            missing.len(),
            missing.join("\n  ")
        );
    }
    fs::create_dir_all(&cfg.output_dir)
        .with_context(|| format!("creating {}", cfg.output_dir.display()))?;

    let items: Vec<(&CaseEntry, &MethodConfig)> = cases
        .iter()
        .flat_map(|c| cfg.methods.iter().map(move |m| (*c, m)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .context("building thread pool")?;
    let results: Vec<Result<Evaluated>> = pool.install(|| {
        items
            .par_iter()
            .map(|(c, m)| {
                evaluate_item(cfg, c, m)
                    .with_context(|| format!("case {} method {}", c.case_id, m.method_id))
            })
            .collect()
    });
    let mut records = Vec::with_capacity(results.len());
    let mut curves = Vec::with_capacity(results.len());
    for r in results {
        let e = r?;
        records.push(e.record);
        curves.push(e.curve);
    }

    let out = &cfg.output_dir;
    let columns = metric_columns(&cfg.point_budgets);
    write_metrics_csv(&out.join(METRICS_CSV), &columns, &records)?;
    write_curves_csv(&out.join(CURVES_CSV), &curves)?;
    write_json(&out.join(CURVES_JSON), &curves)?;
    let stats = write_reports(out, &columns, &records, cfg.alpha)?;
    let index = BundleIndex::new(cfg, cases.into_iter().cloned().collect());
    write_json(&out.join(BUNDLE_JSON), &index)?;
    Ok(RunOutcome {
        bundle_dir: out.clone(),
        records,
        stats,
    })
}
