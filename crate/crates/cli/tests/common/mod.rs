#![allow(dead_code)]

use budgetqa_core::rng::stream;
use budgetqa_core::{Dims, Spacing, VoxelGrid};
use rand::Rng;

pub struct RandomCase {
    pub prob: VoxelGrid<f32>,
    pub gt: VoxelGrid<u8>,
}

/// Random small case: smooth blob probabilities with noise, optionally
/// quantized to create ties, and a perturbed blob as ground truth.
pub fn random_case(seed: u64, max_side: usize) -> RandomCase {
    let mut rng = stream(seed, 0);
    let dims = Dims::new(
        rng.random_range(1..=max_side),
        rng.random_range(2..=max_side),
        rng.random_range(2..=max_side),
    );
    let spacing = Spacing::new(
        rng.random_range(0.5..3.0),
        rng.random_range(0.5..2.0),
        rng.random_range(0.5..2.0),
    )
    .unwrap();
    let n = dims.as_array();
    let c: Vec<f64> = n.iter().map(|&k| rng.random_range(0.0..k as f64)).collect();
    let r: f64 = rng.random_range(0.5..(n[1].max(n[2]) as f64 / 2.0 + 1.0));
    let width: f64 = rng.random_range(0.3..3.0);
    let noise: f64 = rng.random_range(0.0..0.3);
    let quantum = match rng.random_range(0..3) {
        0 => None,
        1 => Some(0.05),
        _ => Some(0.25),
    };
    let shift: f64 = rng.random_range(-1.0..1.0);
    let mut prob = Vec::with_capacity(dims.len());
    let mut gt = Vec::with_capacity(dims.len());
    for i in 0..dims.len() {
        let (z, y, x) = dims.coords(i);
        let d = ((z as f64 - c[0]).powi(2) + (y as f64 - c[1]).powi(2) + (x as f64 - c[2]).powi(2)).sqrt();
        let mut p = 1.0 / (1.0 + ((d - r) / width).exp()) + rng.random_range(-noise..=noise);
        p = p.clamp(0.0, 1.0);
        if let Some(q) = quantum {
            p = (p / q).round() * q;
        }
        prob.push(p as f32);
        gt.push(u8::from(d <= r + shift));
    }
    RandomCase {
        prob: VoxelGrid::scalar(dims, spacing, prob).unwrap(),
        gt: VoxelGrid::scalar(dims, spacing, gt).unwrap(),
    }
}

/// A small synthetic study (12 methods) under `dir`; returns the config path.
pub fn small_study(dir: &std::path::Path, cases: usize, seed: u64) -> std::path::PathBuf {
    let opts = budgetqa::SynthOptions {
        cases,
        seed,
        dims: Dims::new(12, 24, 24),
        members: 3,
        tta_n: 2,
        ..budgetqa::SynthOptions::default()
    };
    budgetqa::synthesize(dir, &opts).unwrap()
}
