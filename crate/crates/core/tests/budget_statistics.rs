use budgetqa_core::metrics::{
    budget_count, budget_curve, confusion, normalized_trapezoid, select_budget, BudgetGrid,
    PLATEAU_REPETITIONS,
};
use budgetqa_core::{Dims, Spacing, VoxelGrid};

fn sp() -> Spacing {
    Spacing::isotropic(1.0).unwrap()
}

#[test]
fn plateau_coverage_is_hypergeometric() {
    let d = Dims::new(20, 50, 50);
    let n = d.len() as f64;
    let u = VoxelGrid::filled(d, sp(), 1.0f32).unwrap();
    // pred and gt disagree on two slabs, so every class is populated
    let gt = VoxelGrid::from_fn(d, sp(), |z, y, _| u8::from(z < 10 && y < 45)).unwrap();
    let pred = VoxelGrid::from_fn(d, sp(), |z, y, _| u8::from(z < 10 && y > 2)).unwrap();
    let conf = confusion(&pred, &gt).unwrap();
    let curve = budget_curve(&u, &conf, &BudgetGrid::default(), 42).unwrap();
    for &b in &[0.5, 1.0, 2.0, 5.0] {
        let k = curve.budgets.iter().position(|x| *x == b).unwrap();
        assert!(curve.plateau_sampled[k]);
        let m = budget_count(b, d.len()) as f64;
        for (cov, class) in [
            (&curve.cov_tp, budgetqa_core::metrics::Class::Tp),
            (&curve.cov_fp, budgetqa_core::metrics::Class::Fp),
            (&curve.cov_fn, budgetqa_core::metrics::Class::Fn),
            (&curve.cov_tn, budgetqa_core::metrics::Class::Tn),
        ] {
            let c = conf.count(class) as f64;
            let var_hits = m * (c / n) * (1.0 - c / n) * (n - m) / (n - 1.0);
            let sd = (var_hits / PLATEAU_REPETITIONS as f64).sqrt() / c;
            let z = (cov[k] - m / n) / sd;
            assert!(z.abs() <= 3.0, "b={b} {class:?}: z = {z}");
        }
    }
}

#[test]
fn error_indicator_peaks_at_error_fraction() {
    let d = Dims::new(20, 50, 50);
    // 1000 error voxels = 2% of the volume
    let gt = VoxelGrid::from_fn(d, sp(), |z, y, x| u8::from(z == 3 && y < 20 && x < 50)).unwrap();
    let pred = VoxelGrid::filled(d, sp(), 0u8).unwrap();
    let conf = confusion(&pred, &gt).unwrap();
    assert_eq!(conf.error_count(), 1000);
    let u = VoxelGrid::from_fn(d, sp(), |z, y, x| f32::from(gt.get(z, y, x))).unwrap();
    let curve = budget_curve(&u, &conf, &BudgetGrid::default(), 5).unwrap();
    let peak = curve
        .ueo
        .iter()
        .enumerate()
        .fold(0, |best, (i, v)| if *v > curve.ueo[best] { i } else { best });
    assert_eq!(curve.budgets[peak], 2.0);
    assert_eq!(curve.ueo[peak], 1.0);
    assert!(curve.ueo.iter().enumerate().all(|(i, v)| i == peak || *v < 1.0));
}

#[test]
fn analytic_auc() {
    let b = BudgetGrid::default().points().unwrap();
    let c = vec![0.42; b.len()];
    assert!((normalized_trapezoid(&b, &c).unwrap() - 0.42).abs() <= 1e-12);
    let lin: Vec<f64> = b.iter().map(|x| x / 5.0).collect();
    assert!((normalized_trapezoid(&b, &lin).unwrap() - 0.5).abs() <= 1e-12);
}

#[test]
fn plateau_selection_sizes() {
    let d = Dims::new(4, 10, 10);
    let u = VoxelGrid::from_fn(d, sp(), |z, _, _| if z == 0 { 0.9f32 } else { 0.4 }).unwrap();
    let s = select_budget(&u, 50.0, 1).unwrap();
    assert_eq!(s.strict_count, 100);
    assert_eq!(s.plateau_count, 300);
    assert_eq!(s.sets.len(), PLATEAU_REPETITIONS);
    for set in &s.sets {
        assert_eq!(set.len(), 200);
        assert!((0..100).all(|i| set.binary_search(&i).is_ok()));
    }
}

#[test]
fn large_plateau_counts_are_hypergeometric() {
    // 5% of 4M voxels exceeds the explicit-draw limit
    let d = Dims::new(100, 200, 200);
    let n = d.len() as f64;
    let u = VoxelGrid::filled(d, sp(), 0.0f32).unwrap();
    let gt = VoxelGrid::from_fn(d, sp(), |z, _, x| u8::from(z < 30 && x < 150)).unwrap();
    let pred = VoxelGrid::from_fn(d, sp(), |z, _, x| u8::from(z < 30 && x > 20)).unwrap();
    let conf = confusion(&pred, &gt).unwrap();
    let curve = budget_curve(&u, &conf, &BudgetGrid::default(), 8).unwrap();
    let k = curve.budgets.iter().position(|x| *x == 5.0).unwrap();
    let m = budget_count(5.0, d.len()) as f64;
    assert!(m as usize > budgetqa_core::metrics::EXPLICIT_DRAW_LIMIT);
    for (cov, class) in [
        (&curve.cov_tp, budgetqa_core::metrics::Class::Tp),
        (&curve.cov_fp, budgetqa_core::metrics::Class::Fp),
        (&curve.cov_fn, budgetqa_core::metrics::Class::Fn),
        (&curve.cov_tn, budgetqa_core::metrics::Class::Tn),
    ] {
        let c = conf.count(class) as f64;
        let var_hits = m * (c / n) * (1.0 - c / n) * (n - m) / (n - 1.0);
        let sd = (var_hits / PLATEAU_REPETITIONS as f64).sqrt() / c;
        let z = (cov[k] - m / n) / sd;
        assert!(z.abs() <= 3.0, "{class:?}: z = {z}");
    }
    let again = budget_curve(&u, &conf, &BudgetGrid::default(), 8).unwrap();
    assert_eq!(curve, again);
}
