use budgetqa::render::{encode_png, PredStyle};
use budgetqa::{render_overlay, Axis, Layers, OverlayVolumes, RenderRequest};
use budgetqa_core::metrics::{budget_threshold, BudgetGrid};
use budgetqa_core::rng::stream;
use budgetqa_core::{Dims, MaskGrid, ProbGrid, Spacing, VoxelGrid};
use rand::Rng;

fn sp() -> Spacing {
    Spacing::new(2.0, 1.0, 1.0).unwrap()
}

fn random_unc(d: Dims, seed: u64) -> ProbGrid {
    let mut rng = stream(seed, 9);
    // coarse levels so plateaus straddle thresholds
    let data = (0..d.len()).map(|_| (rng.random_range(0..40) as f32) / 40.0).collect();
    VoxelGrid::scalar(d, sp(), data).unwrap()
}

fn ball(d: Dims, r: f64) -> MaskGrid {
    let c = [d.nz as f64 / 2.0, d.ny as f64 / 2.0, d.nx as f64 / 2.0];
    VoxelGrid::from_fn(d, sp(), |z, y, x| {
        let q = [z as f64, y as f64, x as f64];
        u8::from((0..3).map(|a| (q[a] - c[a]).powi(2)).sum::<f64>().sqrt() <= r)
    })
    .unwrap()
}

fn unc_only(axis: Axis, index: usize, b: f64) -> RenderRequest {
    let mut req = RenderRequest::new(axis, index, b);
    req.layers = "unc".parse().unwrap();
    req
}

#[test]
fn zero_budget_is_transparent() {
    let d = Dims::new(6, 10, 12);
    let u = random_unc(d, 1);
    let vols = OverlayVolumes { unc: Some(&u), ..Default::default() };
    let ov = render_overlay(vols, &unc_only(Axis::Z, 3, 0.0), &BudgetGrid::default()).unwrap();
    assert_eq!((ov.width, ov.height), (12, 10));
    assert_eq!(ov.colored, 0);
    assert_eq!(ov.threshold, None);
    assert!(ov.uncertainty.iter().all(|p| p[3] == 0));
    assert!(ov.rgba.iter().all(|&b| b == 0));
}

#[test]
fn uniform_uncertainty_at_full_budget() {
    let d = Dims::new(4, 8, 8);
    let u = VoxelGrid::filled(d, sp(), 1.0f32).unwrap();
    let grid = BudgetGrid { v1: 0.0, v2: 100.0, step: 10.0 };
    let vols = OverlayVolumes { unc: Some(&u), ..Default::default() };
    for axis in [Axis::Z, Axis::Y, Axis::X] {
        let ov = render_overlay(vols, &unc_only(axis, 1, 100.0), &grid).unwrap();
        assert_eq!(ov.colored, ov.width * ov.height);
        assert!(ov.uncertainty.iter().all(|p| *p == [255, 200, 0, 55]), "{axis}");
    }
}

#[test]
fn colored_pixels_match_threshold_set() {
    let d = Dims::new(8, 20, 16);
    let u = random_unc(d, 2);
    let grid = BudgetGrid::default();
    let vols = OverlayVolumes { unc: Some(&u), ..Default::default() };
    for b in [0.5, 1.0, 2.0, 3.5, 5.0] {
        let tau = budget_threshold(&u, b).unwrap().unwrap();
        for axis in [Axis::Z, Axis::Y, Axis::X] {
            let index = axis.extent(d) / 2;
            let (w, h) = axis.shape(d);
            let expected = (0..h)
                .flat_map(|r| (0..w).map(move |c| (r, c)))
                .filter(|&(r, c)| u.data()[axis.voxel(d, index, r, c)] >= tau)
                .count();
            let ov = render_overlay(vols, &unc_only(axis, index, b), &grid).unwrap();
            assert_eq!(ov.threshold, Some(f64::from(tau)));
            assert_eq!(ov.colored, expected, "b={b} axis {axis}");
            let visible = ov.uncertainty.iter().filter(|p| p[3] > 0).count();
            assert_eq!(visible, expected);
        }
    }
}

#[test]
fn colored_area_grows_with_budget() {
    let d = Dims::new(10, 32, 32);
    let u = random_unc(d, 3);
    let vols = OverlayVolumes { unc: Some(&u), ..Default::default() };
    let grid = BudgetGrid::default();
    for index in 0..d.nz {
        let areas: Vec<usize> = [0.5, 1.0, 2.0]
            .iter()
            .map(|&b| render_overlay(vols, &unc_only(Axis::Z, index, b), &grid).unwrap().colored)
            .collect();
        assert!(areas[0] <= areas[1] && areas[1] <= areas[2], "slice {index}: {areas:?}");
    }
}

#[test]
fn png_round_trips() {
    let d = Dims::new(6, 14, 18);
    let u = random_unc(d, 4);
    let gt = ball(d, 4.0);
    let pred = ball(d, 5.0);
    let ct = VoxelGrid::from_fn(d, sp(), |z, y, x| (z * 40 + y * 3 + x) as f32 - 200.0).unwrap();
    let vols = OverlayVolumes { ct: Some(&ct), gt: Some(&gt), pred: Some(&pred), unc: Some(&u) };
    let ov = render_overlay(vols, &RenderRequest::new(Axis::Y, 7, 2.0), &BudgetGrid::default()).unwrap();
    let bytes = ov.png().unwrap();
    assert_eq!(bytes, encode_png(ov.width, ov.height, &ov.rgba).unwrap());
    let dec = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = dec.read_info().unwrap();
    let mut buf = vec![0; reader.output_buffer_size().unwrap()];
    let info = reader.next_frame(&mut buf).unwrap();
    assert_eq!((info.width as usize, info.height as usize), (ov.width, ov.height));
    assert_eq!(info.color_type, png::ColorType::Rgba);
    assert_eq!(&buf[..info.buffer_size()], &ov.rgba[..]);
}

#[test]
fn layer_toggles() {
    let d = Dims::new(5, 16, 16);
    let gt = ball(d, 5.0);
    let empty = VoxelGrid::filled(d, sp(), 0u8).unwrap();
    let u = random_unc(d, 5);
    let ct = VoxelGrid::filled(d, sp(), 40.0f32).unwrap();
    let vols = OverlayVolumes { ct: Some(&ct), gt: Some(&gt), pred: Some(&empty), unc: Some(&u) };
    let grid = BudgetGrid::default();
    let px = |rgba: &[u8], r: usize, c: usize| -> [u8; 4] {
        let i = (r * 16 + c) * 4;
        [rgba[i], rgba[i + 1], rgba[i + 2], rgba[i + 3]]
    };

    // CT alone: window center is mid gray, opaque everywhere
    let mut req = RenderRequest::new(Axis::Z, 2, 0.0);
    req.layers = "ct".parse().unwrap();
    let ov = render_overlay(vols, &req, &grid).unwrap();
    assert!(ov.rgba.chunks(4).all(|p| p == [128, 128, 128, 255]));

    // GT outline in green on the slice's boundary pixels only
    req.layers = "gt".parse().unwrap();
    let ov = render_overlay(vols, &req, &grid).unwrap();
    assert_eq!(px(&ov.rgba, 8, 4), [0, 255, 0, 255]);
    assert_eq!(px(&ov.rgba, 8, 8)[3], 0);
    assert_eq!(px(&ov.rgba, 0, 0)[3], 0);

    // an empty prediction draws nothing, in either style
    req.layers = "pred".parse().unwrap();
    for style in [PredStyle::Contour, PredStyle::Fill] {
        req.pred_style = style;
        let ov = render_overlay(vols, &req, &grid).unwrap();
        assert!(ov.rgba.iter().all(|&b| b == 0));
    }
    let fill_vols = OverlayVolumes { pred: Some(&gt), ..vols };
    req.pred_style = PredStyle::Fill;
    let ov = render_overlay(fill_vols, &req, &grid).unwrap();
    assert_eq!(px(&ov.rgba, 8, 8), [255, 0, 0, 96]);

    // no layers at all: fully transparent
    req.layers = "".parse::<Layers>().unwrap();
    let ov = render_overlay(vols, &req, &grid).unwrap();
    assert!(ov.rgba.iter().all(|&b| b == 0));

    // uncertainty over CT stays opaque and tints only the retained pixels
    let mut req = RenderRequest::new(Axis::Z, 2, 5.0);
    req.layers = "ct,unc".parse().unwrap();
    let ov = render_overlay(vols, &req, &grid).unwrap();
    assert!(ov.colored > 0);
    assert!(ov.rgba.chunks(4).all(|p| p[3] == 255));
    let tinted = ov.rgba.chunks(4).filter(|p| *p != [128, 128, 128, 255]).count();
    assert_eq!(tinted, ov.colored);
}

#[test]
fn rejects_bad_requests() {
    let d = Dims::new(4, 6, 6);
    let u = random_unc(d, 6);
    let vols = OverlayVolumes { unc: Some(&u), ..Default::default() };
    let grid = BudgetGrid::default();
    assert!(render_overlay(vols, &unc_only(Axis::Z, 4, 1.0), &grid).is_err());
    assert!(render_overlay(vols, &unc_only(Axis::Z, 0, 0.25), &grid).is_err());
    assert!(render_overlay(vols, &unc_only(Axis::Z, 0, 7.0), &grid).is_err());
    assert!(render_overlay(OverlayVolumes::default(), &unc_only(Axis::Z, 0, 1.0), &grid).is_err());
    let other = random_unc(Dims::new(4, 6, 7), 6);
    let mixed = OverlayVolumes { unc: Some(&u), ct: Some(&other), ..Default::default() };
    assert!(render_overlay(mixed, &unc_only(Axis::Z, 0, 1.0), &grid).is_err());
}
