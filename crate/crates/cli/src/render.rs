//! Slice overlays: windowed CT, ground-truth and prediction outlines, and
//! the uncertainty layer of a review budget.

use std::fmt;
use std::str::FromStr;

use anyhow::{anyhow, bail, ensure, Result};
use budgetqa_core::metrics::{budget_threshold, BudgetGrid};
use budgetqa_core::{Dims, MaskGrid, ProbGrid};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    /// Fixed z; rows are y, columns x.
    Z,
    /// Fixed y; rows are z, columns x.
    Y,
    /// Fixed x; rows are z, columns y.
    X,
}

impl FromStr for Axis {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "z" | "axial" => Ok(Axis::Z),
            "y" | "coronal" => Ok(Axis::Y),
            "x" | "sagittal" => Ok(Axis::X),
            _ => bail!("unknown axis {s:?}; use z/axial, y/coronal or x/sagittal"),
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::Z => "z",
            Axis::Y => "y",
            Axis::X => "x",
        })
    }
}

impl Axis {
    pub fn extent(self, d: Dims) -> usize {
        match self {
            Axis::Z => d.nz,
            Axis::Y => d.ny,
            Axis::X => d.nx,
        }
    }

    /// Image `(width, height)` of a slice.
    pub fn shape(self, d: Dims) -> (usize, usize) {
        match self {
            Axis::Z => (d.nx, d.ny),
            Axis::Y => (d.nx, d.nz),
            Axis::X => (d.ny, d.nz),
        }
    }

    /// Linear voxel index of pixel `(row, col)` on slice `index`.
    pub fn voxel(self, d: Dims, index: usize, row: usize, col: usize) -> usize {
        match self {
            Axis::Z => d.index(index, row, col),
            Axis::Y => d.index(row, index, col),
            Axis::X => d.index(row, col, index),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layers {
    /// Grayscale base; without it the image background is transparent.
    pub ct: bool,
    pub gt: bool,
    pub pred: bool,
    pub unc: bool,
}

impl Default for Layers {
    fn default() -> Self {
        Layers {
            ct: true,
            gt: true,
            pred: true,
            unc: true,
        }
    }
}

impl FromStr for Layers {
    type Err = anyhow::Error;
    /// Comma-separated subset of `ct,gt,pred,unc`; empty means none.
    fn from_str(s: &str) -> Result<Self> {
        let mut l = Layers {
            ct: false,
            gt: false,
            pred: false,
            unc: false,
        };
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "ct" => l.ct = true,
                "gt" => l.gt = true,
                "pred" => l.pred = true,
                "unc" => l.unc = true,
                _ => bail!("unknown layer {part:?}; use ct, gt, pred, unc"),
            }
        }
        Ok(l)
    }
}

/// Color of a retained voxel with rescaled uncertainty `u'`:
/// `(255, round(green_span (1 - u')), 0, round(alpha_floor + alpha_span u'))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Colormap {
    pub green_span: f64,
    pub alpha_floor: f64,
    pub alpha_span: f64,
}

impl Default for Colormap {
    fn default() -> Self {
        Colormap {
            green_span: 200.0,
            alpha_floor: 55.0,
            alpha_span: 200.0,
        }
    }
}

impl Colormap {
    pub fn color(&self, u: f64) -> [u8; 4] {
        let u = u.clamp(0.0, 1.0);
        let c = |v: f64| v.round().clamp(0.0, 255.0) as u8;
        [
            255,
            c(self.green_span * (1.0 - u)),
            0,
            c(self.alpha_floor + self.alpha_span * u),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub center: f64,
    pub width: f64,
}

impl Default for Window {
    fn default() -> Self {
        Window {
            center: 40.0,
            width: 400.0,
        }
    }
}

impl Window {
    pub fn gray(&self, hu: f64) -> u8 {
        let lo = self.center - self.width / 2.0;
        (((hu - lo) / self.width).clamp(0.0, 1.0) * 255.0).round() as u8
    }
}

pub const MID_GRAY: u8 = 128;
pub const GT_COLOR: [u8; 4] = [0, 255, 0, 255];
pub const PRED_COLOR: [u8; 4] = [255, 0, 0, 255];
/// Opacity of the prediction when drawn filled.
pub const PRED_FILL_ALPHA: u8 = 96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredStyle {
    #[default]
    Contour,
    Fill,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderRequest {
    pub axis: Axis,
    pub index: usize,
    pub budget: f64,
    pub layers: Layers,
    pub window: Window,
    pub colormap: Colormap,
    pub pred_style: PredStyle,
}

impl RenderRequest {
    pub fn new(axis: Axis, index: usize, budget: f64) -> Self {
        RenderRequest {
            axis,
            index,
            budget,
            layers: Layers::default(),
            window: Window::default(),
            colormap: Colormap::default(),
            pred_style: PredStyle::default(),
        }
    }
}

/// Volumes of one (case, method) pair; any may be absent when its layer is off.
#[derive(Debug, Clone, Copy, Default)]
pub struct OverlayVolumes<'a> {
    pub ct: Option<&'a ProbGrid>,
    pub gt: Option<&'a MaskGrid>,
    pub pred: Option<&'a MaskGrid>,
    pub unc: Option<&'a ProbGrid>,
}

#[derive(Debug, Clone)]
pub struct Overlay {
    pub width: usize,
    pub height: usize,
    /// Uncertainty layer alone, straight-alpha RGBA per pixel.
    pub uncertainty: Vec<[u8; 4]>,
    /// All requested layers composited, row-major RGBA bytes.
    pub rgba: Vec<u8>,
    /// Pixels of the slice in the retained set.
    pub colored: usize,
    /// Uncertainty threshold of the budget; `None` at b = 0.
    pub threshold: Option<f64>,
}

/// Straight-alpha "over" compositing.
fn over(dst: [u8; 4], src: [u8; 4]) -> [u8; 4] {
    let sa = f64::from(src[3]) / 255.0;
    if sa == 0.0 {
        return dst;
    }
    let da = f64::from(dst[3]) / 255.0;
    let oa = sa + da * (1.0 - sa);
    let mut out = [0u8; 4];
    for c in 0..3 {
        let v = (f64::from(src[c]) * sa + f64::from(dst[c]) * da * (1.0 - sa)) / oa;
        out[c] = v.round() as u8;
    }
    out[3] = (oa * 255.0).round() as u8;
    out
}

/// In-slice outline: mask pixels with a 4-neighbor outside the mask or on
/// the image border.
fn outline(mask: &[bool], w: usize, h: usize) -> Vec<bool> {
    let mut out = vec![false; mask.len()];
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            if !mask[i] {
                continue;
            }
            out[i] = r == 0
                || c == 0
                || r + 1 == h
                || c + 1 == w
                || !mask[i - w]
                || !mask[i + w]
                || !mask[i - 1]
                || !mask[i + 1];
        }
    }
    out
}

/// Renders one slice. The uncertainty layer colors `{u >= tau_b}`, where
/// `tau_b` is the budget's threshold over the whole volume, so a plateau at
/// the threshold is drawn in full at `u' = 0` and the image is deterministic.
pub fn render_overlay(vols: OverlayVolumes<'_>, req: &RenderRequest, grid: &BudgetGrid) -> Result<Overlay> {
    let dims = [
        vols.ct.map(|g| (g.dims(), g.channels())),
        vols.gt.map(|g| (g.dims(), g.channels())),
        vols.pred.map(|g| (g.dims(), g.channels())),
        vols.unc.map(|g| (g.dims(), g.channels())),
    ];
    let mut present = dims.iter().flatten();
    let &(d, _) = present
        .next()
        .ok_or_else(|| anyhow!("nothing to render"))?;
    for &(o, ch) in dims.iter().flatten() {
        ensure!(o == d, "volumes of one overlay must share a grid");
        ensure!(ch == 1, "overlay volumes must have one channel");
    }
    ensure!(
        grid.position(req.budget).is_some(),
        "budget {}% is not on the grid",
        req.budget
    );
    let extent = req.axis.extent(d);
    ensure!(
        req.index < extent,
        "slice {} out of range for axis {} (0..{})",
        req.index,
        req.axis,
        extent
    );
    let (w, h) = req.axis.shape(d);
    let vox = |r: usize, c: usize| req.axis.voxel(d, req.index, r, c);

    let mut img = vec![[0u8; 4]; w * h];
    if req.layers.ct {
        for r in 0..h {
            for c in 0..w {
                let g = match vols.ct {
                    Some(ct) => req.window.gray(f64::from(ct.data()[vox(r, c)])),
                    None => MID_GRAY,
                };
                img[r * w + c] = [g, g, g, 255];
            }
        }
    }

    let mut uncertainty = vec![[0u8; 4]; w * h];
    let mut colored = 0;
    let mut threshold = None;
    if req.layers.unc {
        let unc = vols
            .unc
            .ok_or_else(|| anyhow!("uncertainty layer requested without an uncertainty map"))?;
        if let Some(tau) = budget_threshold(unc, req.budget)? {
            let tau = f64::from(tau);
            threshold = Some(tau);
            let max_u = unc.data().iter().fold(f64::NEG_INFINITY, |m, &v| m.max(f64::from(v)));
            let span = max_u - tau;
            for r in 0..h {
                for c in 0..w {
                    let u = f64::from(unc.data()[vox(r, c)]);
                    if u >= tau {
                        let up = if span > 0.0 { (u - tau) / span } else { 0.0 };
                        uncertainty[r * w + c] = req.colormap.color(up);
                        colored += 1;
                    }
                }
            }
        }
        for (p, u) in img.iter_mut().zip(&uncertainty) {
            *p = over(*p, *u);
        }
    }

    let slice_mask = |m: &MaskGrid| -> Vec<bool> {
        let mut out = vec![false; w * h];
        for r in 0..h {
            for c in 0..w {
                out[r * w + c] = m.data()[vox(r, c)] != 0;
            }
        }
        out
    };
    if req.layers.pred {
        let pred = vols
            .pred
            .ok_or_else(|| anyhow!("prediction layer requested without a prediction"))?;
        let m = slice_mask(pred);
        match req.pred_style {
            PredStyle::Contour => {
                for (p, on) in img.iter_mut().zip(outline(&m, w, h)) {
                    if on {
                        *p = PRED_COLOR;
                    }
                }
            }
            PredStyle::Fill => {
                let fill = [PRED_COLOR[0], PRED_COLOR[1], PRED_COLOR[2], PRED_FILL_ALPHA];
                for (p, on) in img.iter_mut().zip(m) {
                    if on {
                        *p = over(*p, fill);
                    }
                }
            }
        }
    }
    if req.layers.gt {
        let gt = vols
            .gt
            .ok_or_else(|| anyhow!("ground-truth layer requested without ground truth"))?;
        for (p, on) in img.iter_mut().zip(outline(&slice_mask(gt), w, h)) {
            if on {
                *p = GT_COLOR;
            }
        }
    }

    Ok(Overlay {
        width: w,
        height: h,
        uncertainty,
        rgba: img.into_iter().flatten().collect(),
        colored,
        threshold,
    })
}

/// 8-bit RGBA PNG.
pub fn encode_png(width: usize, height: usize, rgba: &[u8]) -> Result<Vec<u8>> {
    ensure!(rgba.len() == width * height * 4, "pixel buffer size mismatch");
    let mut buf = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut buf, width as u32, height as u32);
        enc.set_color(png::ColorType::Rgba);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header()?;
        w.write_image_data(rgba)?;
        w.finish()?;
    }
    Ok(buf)
}

impl Overlay {
    pub fn png(&self) -> Result<Vec<u8>> {
        encode_png(self.width, self.height, &self.rgba)
    }
}
