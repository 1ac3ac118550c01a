use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use budgetqa::bundle::{Bundle, CACHE_ENTROPY, CACHE_PRED};
use budgetqa::manifest::{ingest, MANIFEST_FILE};
use budgetqa::render::{render_overlay, Axis, Layers, OverlayVolumes, PredStyle, RenderRequest};
use budgetqa::{report, run_pipeline, service, synthesize, RunConfig, SynthOptions};
use budgetqa_core::volgrid::{read_f32, read_mask};
use budgetqa_core::{Dims, Spacing};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "budgetqa", version, about = "Budget-aware uncertainty QA for voxel segmentation")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic study with a 12-method run config.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        cases: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Grid size as nz,ny,nx.
        #[arg(long, default_value = "24,48,48")]
        dims: String,
        /// Voxel spacing in mm as z,y,x.
        #[arg(long, default_value = "2.5,1,1")]
        spacing: String,
        #[arg(long, default_value_t = 5)]
        members: usize,
        #[arg(long, default_value_t = 5)]
        tta_n: usize,
    },
    /// Write a manifest for <data-root>/<case>/gt containers.
    Ingest {
        #[arg(long)]
        data_root: PathBuf,
        /// Tag applied to every case, key=value; repeatable.
        #[arg(long = "tag")]
        tags: Vec<String>,
        #[arg(long, default_value = MANIFEST_FILE)]
        manifest: String,
    },
    /// Evaluate every case and method of a config and write the bundle.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Only cases carrying this tag, key=value; repeatable.
        #[arg(long = "tag")]
        tags: Vec<String>,
        #[arg(long)]
        no_cache: bool,
    },
    /// Recompute statistics and summaries of a bundle.
    Report {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Render one overlay slice to PNG.
    Render {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        case: String,
        #[arg(long)]
        method: String,
        /// z/axial, y/coronal or x/sagittal.
        #[arg(long, default_value = "z")]
        axis: String,
        /// Slice index; the middle slice by default.
        #[arg(long)]
        index: Option<usize>,
        /// Review budget in percent; must lie on the bundle's grid.
        #[arg(long, default_value_t = 1.0)]
        budget: f64,
        #[arg(long, default_value = "ct,gt,pred,unc")]
        layers: String,
        #[arg(long)]
        fill: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the HTTP API over a bundle.
    Serve {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
}

fn triple<T: std::str::FromStr>(s: &str, what: &str) -> Result<[T; 3]> {
    let parts: Vec<T> = s
        .split(',')
        .map(|p| p.trim().parse::<T>().map_err(|_| anyhow!("bad {what}: {s:?}")))
        .collect::<Result<_>>()?;
    parts.try_into().map_err(|_| anyhow!("{what} needs three comma-separated values"))
}

fn key_values(tags: &[String]) -> Result<BTreeMap<String, String>> {
    tags.iter()
        .map(|t| {
            t.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| anyhow!("tag {t:?} is not key=value"))
        })
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Synth { out, cases, seed, dims, spacing, members, tta_n } => {
            let [nz, ny, nx] = triple::<usize>(&dims, "dims")?;
            let [sz, sy, sx] = triple::<f64>(&spacing, "spacing")?;
            let opts = SynthOptions {
                cases,
                seed,
                dims: Dims::new(nz, ny, nx),
                spacing: Spacing::new(sz, sy, sx)?,
                members,
                tta_n,
                ..SynthOptions::default()
            };
            let cfg = synthesize(&out, &opts)?;
            println!("wrote {cases} cases; config {}", cfg.display());
        }
        Cmd::Ingest { data_root, tags, manifest } => {
            let m = ingest(&data_root, &key_values(&tags)?)?;
            let path = data_root.join(manifest);
            m.save(&path)?;
            println!("{} cases -> {}", m.cases.len(), path.display());
        }
        Cmd::Run { config, threads, output, seed, tags, no_cache } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(t) = threads {
                cfg.threads = t;
            }
            if let Some(o) = output {
                cfg.output_dir = o;
            }
            if let Some(s) = seed {
                cfg.global_seed = s;
            }
            cfg.case_tags.extend(key_values(&tags)?);
            if no_cache {
                cfg.cache_volumes = false;
            }
            let out = run_pipeline(&cfg)?;
            println!(
                "{} rows, {} metric comparisons -> {}",
                out.records.len(),
                out.stats.comparisons.len(),
                out.bundle_dir.display()
            );
        }
        Cmd::Report { bundle, alpha } => {
            let stats = report::rebuild_reports(&bundle, alpha)?;
            println!("{} metric comparisons at alpha = {}", stats.comparisons.len(), stats.alpha);
        }
        Cmd::Render { bundle, case, method, axis, index, budget, layers, fill, out } => {
            let b = Bundle::open(&bundle)?;
            let entry = b.index.case(&case).ok_or_else(|| anyhow!("unknown case {case}"))?;
            let m = b
                .index
                .methods
                .iter()
                .find(|m| m.method_id == method)
                .ok_or_else(|| anyhow!("unknown method {method}"))?;
            let root = &b.index.data_root;
            let gt = read_mask(&root.join(&entry.ground_truth))?;
            let ct = entry.ct.as_ref().map(|p| read_f32(&root.join(p))).transpose()?;
            let (pred, unc) = if b.index.cache_volumes {
                (
                    read_mask(&b.cache(&case, &method, CACHE_PRED))?,
                    read_f32(&b.cache(&case, &method, CACHE_ENTROPY))?,
                )
            } else {
                let prob = budgetqa::aggregate_members(m, &m.member_paths(root, &case))?;
                (
                    budgetqa_core::binarize(&prob, 0.5)?,
                    budgetqa_core::uq::entropy_map(&prob)?,
                )
            };
            let axis: Axis = axis.parse()?;
            let index = index.unwrap_or(axis.extent(gt.dims()) / 2);
            let mut req = RenderRequest::new(axis, index, budget);
            req.layers = layers.parse::<Layers>()?;
            if fill {
                req.pred_style = PredStyle::Fill;
            }
            let vols = OverlayVolumes { ct: ct.as_ref(), gt: Some(&gt), pred: Some(&pred), unc: Some(&unc) };
            let ov = render_overlay(vols, &req, &b.index.budget)?;
            fs::write(&out, ov.png()?).with_context(|| format!("writing {}", out.display()))?;
            println!(
                "{}x{} slice, {} voxels at or above the {budget}% threshold -> {}",
                ov.width,
                ov.height,
                ov.colored,
                out.display()
            );
        }
        Cmd::Serve { bundle, host, port } => {
            let rt = tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()?;
            rt.block_on(service::serve(&bundle, &host, port))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
