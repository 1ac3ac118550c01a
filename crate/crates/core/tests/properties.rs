mod common;

use budgetqa_core::metrics::{budget_curve, confusion, select_budget, BudgetGrid};
use budgetqa_core::roi::build_roi;
use budgetqa_core::stats::{
    bh_fdr, compare_methods, friedman, wilcoxon_signed_rank, Direction, MetricMatrix,
};
use budgetqa_core::uq::{temperature_softmax, TemperatureConfig};
use budgetqa_core::volgrid::{read_f32, read_mask};
use budgetqa_core::{binarize, write_volume, Dims, Spacing, VoxelGrid};
use common::random_case;
use proptest::prelude::*;

fn dims() -> impl Strategy<Value = Dims> {
    (1usize..6, 1usize..6, 1usize..6).prop_map(|(z, y, x)| Dims::new(z, y, x))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn container_round_trip(
        d in dims(),
        sp in (0.1f64..5.0, 0.1f64..5.0, 0.1f64..5.0),
        ch in 1usize..3,
        seed in any::<u64>(),
    ) {
        let spacing = Spacing::new(sp.0, sp.1, sp.2).unwrap();
        let n = d.len() * ch;
        let vals: Vec<f32> = (0..n).map(|i| ((seed.wrapping_add(i as u64) % 1000) as f32 - 500.0) * 0.37).collect();
        let mask: Vec<u8> = (0..d.len()).map(|i| ((seed >> (i % 64)) & 1) as u8).collect();
        let dir = tempfile::tempdir().unwrap();
        let g = VoxelGrid::new(d, spacing, ch, vals).unwrap();
        write_volume(&g, &dir.path().join("v")).unwrap();
        prop_assert_eq!(read_f32(&dir.path().join("v.json")).unwrap(), g);
        let m = VoxelGrid::scalar(d, spacing, mask).unwrap();
        write_volume(&m, &dir.path().join("m.raw")).unwrap();
        prop_assert_eq!(read_mask(&dir.path().join("m")).unwrap(), m);
    }

    #[test]
    fn binarize_is_monotone(d in dims(), t1 in 0.0f32..1.0, t2 in 0.0f32..1.0, seed in any::<u64>()) {
        let p = VoxelGrid::from_fn(d, Spacing::isotropic(1.0).unwrap(), |z, y, x| {
            ((seed ^ (z * 31 + y * 7 + x) as u64) % 101) as f32 / 100.0
        }).unwrap();
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let a = binarize(&p, lo).unwrap();
        let b = binarize(&p, hi).unwrap();
        prop_assert!(a.data().iter().zip(b.data()).all(|(x, y)| x >= y));
    }

    #[test]
    fn temperature_keeps_argmax(
        d in dims(),
        logits in prop::collection::vec(-30.0f32..30.0, 250),
        t in 0.05f64..50.0,
    ) {
        let n = d.len();
        let data: Vec<f32> = logits.iter().cycle().take(2 * n).copied().collect();
        let g = VoxelGrid::new(d, Spacing::isotropic(1.0).unwrap(), 2, data.clone()).unwrap();
        let p = temperature_softmax(&g, &TemperatureConfig::enabled(t)).unwrap();
        for i in 0..n {
            prop_assert_eq!(p.data()[i] >= 0.5, data[n + i] >= data[i]);
        }
    }

    #[test]
    fn bh_commutes_with_permutation(
        ps in prop::collection::vec(0.0f64..=1.0, 1..30),
        rot in 0usize..30,
    ) {
        let adj = bh_fdr(&ps).unwrap();
        let k = rot % ps.len();
        let mut rp = ps.clone();
        rp.rotate_left(k);
        let mut radj = adj.clone();
        radj.rotate_left(k);
        prop_assert_eq!(bh_fdr(&rp).unwrap(), radj);
        for (a, p) in adj.iter().zip(&ps) {
            prop_assert!(*a >= *p && *a <= 1.0);
        }
    }

    #[test]
    fn wilcoxon_is_symmetric(pairs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 5..40)) {
        let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let x = wilcoxon_signed_rank(&a, &b).unwrap();
        let y = wilcoxon_signed_rank(&b, &a).unwrap();
        prop_assert_eq!(x.statistic, y.statistic);
        prop_assert_eq!(x.p_value, y.p_value);
    }

    #[test]
    fn friedman_is_rank_based(
        rows in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 4), 3..12),
    ) {
        let f = friedman(&rows).unwrap();
        let warped: Vec<Vec<f64>> = rows
            .iter()
            .enumerate()
            .map(|(i, r)| r.iter().map(|v| (v * (i + 1) as f64).exp() - 7.0).collect())
            .collect();
        let g = friedman(&warped).unwrap();
        prop_assert!((f.statistic - g.statistic).abs() < 1e-9);
        prop_assert!((f.p_value - g.p_value).abs() < 1e-12);
    }

    #[test]
    fn stars_survive_rescaling(
        rows in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 3), 6..15),
        scale in 0.01f64..100.0,
    ) {
        let n = rows.len();
        let mk = |v: Vec<Vec<f64>>| MetricMatrix::new(
            "ece",
            (0..n).map(|i| format!("p{i}")).collect(),
            vec!["a".into(), "b".into(), "c".into()],
            v,
            Direction::LowerBetter,
        ).unwrap();
        let r1 = compare_methods(&mk(rows.clone()), 0.05).unwrap();
        let scaled = rows.iter().map(|r| r.iter().map(|v| v * scale).collect()).collect();
        let r2 = compare_methods(&mk(scaled), 0.05).unwrap();
        prop_assert_eq!(&r1.star_flags, &r2.star_flags);
        prop_assert!(!r1.is_starred(&r1.best_method));
    }
}

#[test]
fn roi_grows_with_delta_and_is_symmetric() {
    for seed in 0..30 {
        let c = random_case(seed, 14);
        let pred = binarize(&c.prob, 0.5).unwrap();
        if pred.count_ones() == 0 && c.gt.count_ones() == 0 {
            continue;
        }
        let mut last = 0;
        for delta in [0.5, 1.0, 2.0, 4.0, 8.0] {
            let r = build_roi(&pred, &c.gt, delta).unwrap();
            let s = build_roi(&c.gt, &pred, delta).unwrap();
            assert_eq!(r.mask, s.mask);
            assert!(r.voxel_count >= last);
            last = r.voxel_count;
            if let Some(prev) = Some(build_roi(&pred, &c.gt, delta / 2.0).unwrap()) {
                assert!(prev.mask.data().iter().zip(r.mask.data()).all(|(a, b)| a <= b));
            }
        }
    }
}

#[test]
fn flagged_sets_nest_for_distinct_values() {
    let d = Dims::new(10, 20, 20);
    let n = d.len();
    // a permutation of n distinct values
    let u = VoxelGrid::from_fn(d, Spacing::isotropic(1.0).unwrap(), |z, y, x| {
        let i = d.index(z, y, x);
        ((i * 1597) % n) as f32 / n as f32
    })
    .unwrap();
    let grid = BudgetGrid::default().points().unwrap();
    let mut prev: Vec<usize> = Vec::new();
    for b in grid {
        let s = select_budget(&u, b, 1).unwrap();
        assert!(s.is_deterministic());
        let cur = &s.sets[0];
        assert!(prev.iter().all(|i| cur.binary_search(i).is_ok()), "b = {b}");
        prev = cur.clone();
    }
    let gt = VoxelGrid::from_fn(d, Spacing::isotropic(1.0).unwrap(), |z, _, _| u8::from(z < 5)).unwrap();
    let pred = VoxelGrid::from_fn(d, Spacing::isotropic(1.0).unwrap(), |z, y, _| u8::from(z < 5 && y > 1)).unwrap();
    let conf = confusion(&pred, &gt).unwrap();
    let curve = budget_curve(&u, &conf, &BudgetGrid::default(), 1).unwrap();
    for cov in [&curve.cov_tp, &curve.cov_fp, &curve.cov_fn, &curve.cov_tn] {
        assert!(cov.windows(2).all(|w| w[0] <= w[1]));
    }
}
