//! PNG panels: magnitude strip, contour overlay, phase triptych and velocity curves.

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use ndarray::{Array2, ArrayView2, Axis};

use super::evaluate::{evaluate_series, EvalOptions, Method, SeriesEvaluation, MASK_THRESHOLD};
use super::experiment::ExperimentReport;
use crate::baselines::BaselineMethod;
use crate::error::{Error, Result};
use crate::network::Checkpoint;
use crate::sampling::SeriesKey;
use crate::series::MvmSeries;
use crate::velocity::{Direction, VelocityCurves};

const SCALE: u32 = 2;
const GAP: u32 = 4;
const GT_COLOR: Rgb<u8> = Rgb([0, 220, 0]);
const PRED_COLOR: Rgb<u8> = Rgb([230, 30, 30]);
pub const DIFF_COLOR: Rgb<u8> = Rgb([255, 220, 0]);

fn gray(v: f64) -> Rgb<u8> {
    let g = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    Rgb([g, g, g])
}

struct Canvas {
    img: RgbImage,
}

impl Canvas {
    fn new(w: u32, h: u32) -> Self {
        Self {
            img: RgbImage::from_pixel(w, h, Rgb([255, 255, 255])),
        }
    }

    /// Blits `values` (already mapped through `color`) at panel offset, scaled by `SCALE`.
    fn panel<F: Fn(usize, usize) -> Rgb<u8>>(&mut self, x0: u32, y0: u32, h: usize, w: usize, color: F) {
        for y in 0..h {
            for x in 0..w {
                let c = color(y, x);
                for dy in 0..SCALE {
                    for dx in 0..SCALE {
                        self.img.put_pixel(x0 + x as u32 * SCALE + dx, y0 + y as u32 * SCALE + dy, c);
                    }
                }
            }
        }
    }

    fn line(&mut self, (x0, y0): (i64, i64), (x1, y1): (i64, i64), c: Rgb<u8>) {
        let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
        let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
        let (mut x, mut y, mut err) = (x0, y0, dx + dy);
        loop {
            if x >= 0 && y >= 0 && (x as u32) < self.img.width() && (y as u32) < self.img.height() {
                self.img.put_pixel(x as u32, y as u32, c);
            }
            if x == x1 && y == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x += sx;
            }
            if e2 <= dx {
                err += dx;
                y += sy;
            }
        }
    }

    fn save(&self, path: &Path) -> Result<()> {
        self.img.save(path)?;
        Ok(())
    }
}

fn side(n: usize) -> u32 {
    n as u32 * SCALE
}

/// Mask pixels with at least one 4-neighbour outside the mask.
pub fn contour(mask: ArrayView2<'_, f32>) -> Array2<bool> {
    let (h, w) = mask.dim();
    let inside = |y: isize, x: isize| {
        y >= 0 && x >= 0 && (y as usize) < h && (x as usize) < w && mask[[y as usize, x as usize]] > MASK_THRESHOLD
    };
    Array2::from_shape_fn((h, w), |(y, x)| {
        let (y, x) = (y as isize, x as isize);
        inside(y, x) && [(-1, 0), (1, 0), (0, -1), (0, 1)].iter().any(|&(dy, dx)| !inside(y + dy, x + dx))
    })
}

/// Three panels over `background`: gt contour, predicted contour, and the
/// pixels where the masks disagree. Returns the image and the highlighted count.
pub fn contour_overlay(background: ArrayView2<'_, f32>, gt: ArrayView2<'_, f32>, pred: ArrayView2<'_, f32>) -> (RgbImage, usize) {
    let (h, w) = background.dim();
    let (cg, cp) = (contour(gt), contour(pred));
    let diff = ndarray::Zip::from(gt).and(pred).map_collect(|&a, &b| (a > MASK_THRESHOLD) != (b > MASK_THRESHOLD));
    let highlighted = diff.iter().filter(|&&d| d).count();
    let mut c = Canvas::new(3 * side(w) + 2 * GAP, side(h));
    let bg = |y: usize, x: usize| gray(background[[y, x]] as f64);
    c.panel(0, 0, h, w, |y, x| if cg[[y, x]] { GT_COLOR } else { bg(y, x) });
    c.panel(side(w) + GAP, 0, h, w, |y, x| if cp[[y, x]] { PRED_COLOR } else { bg(y, x) });
    c.panel(2 * (side(w) + GAP), 0, h, w, |y, x| if diff[[y, x]] { DIFF_COLOR } else { bg(y, x) });
    (c.img, highlighted)
}

fn magnitude_strip(ev: &SeriesEvaluation, series: &MvmSeries) -> Canvas {
    let (h, w) = (series.height(), series.width());
    // First window: anchors and the three synthesised frames.
    let frames: Vec<usize> = (0..=4).collect();
    let cols = frames.len() as u32;
    let mut c = Canvas::new(cols * (side(w) + GAP) - GAP, 3 * (side(h) + GAP) - GAP);
    for (i, &t) in frames.iter().enumerate() {
        let x0 = i as u32 * (side(w) + GAP);
        let gt = series.magnitude_frame(t);
        let pred = ev.reconstructed.magnitude_frame(t);
        c.panel(x0, 0, h, w, |y, x| gray(gt[[y, x]] as f64));
        c.panel(x0, side(h) + GAP, h, w, |y, x| gray(pred[[y, x]] as f64));
        c.panel(x0, 2 * (side(h) + GAP), h, w, |y, x| gray(4.0 * (pred[[y, x]] - gt[[y, x]]).abs() as f64));
    }
    c
}

fn phase_triptych(ev: &SeriesEvaluation, series: &MvmSeries, t: usize) -> Canvas {
    let (h, w) = (series.height(), series.width());
    let mut c = Canvas::new(3 * (side(w) + GAP) - GAP, 3 * (side(h) + GAP) - GAP);
    let gt = series.phase_frame(t);
    let pred = ev.reconstructed.phase_frame(t);
    for d in 0..3 {
        let y0 = d as u32 * (side(h) + GAP);
        let (g, p) = (gt.index_axis(Axis(0), d), pred.index_axis(Axis(0), d));
        c.panel(0, y0, h, w, |y, x| gray(0.5 + 0.5 * g[[y, x]] as f64));
        c.panel(side(w) + GAP, y0, h, w, |y, x| gray(0.5 + 0.5 * p[[y, x]] as f64));
        c.panel(2 * (side(w) + GAP), y0, h, w, |y, x| gray(4.0 * (p[[y, x]] - g[[y, x]]).abs() as f64));
    }
    c
}

fn velocity_plot(pred: &VelocityCurves, truth: &VelocityCurves) -> Canvas {
    const PW: u32 = 320;
    const PH: u32 = 120;
    let mut c = Canvas::new(PW, 3 * (PH + GAP) - GAP);
    for (i, d) in [Direction::Longitudinal, Direction::Radial, Direction::Circumferential].into_iter().enumerate() {
        let y0 = i as i64 * (PH + GAP) as i64;
        let (p, t) = (pred.curve(d), truth.curve(d));
        let lim = p.iter().chain(t).fold(1e-9_f64, |m, v| m.max(v.abs()));
        let n = p.len().max(2);
        let to_px = |k: usize, v: f64| {
            let x = (k as f64 / (n - 1) as f64 * (PW - 1) as f64).round() as i64;
            let y = y0 + ((0.5 - 0.45 * v / lim) * (PH - 1) as f64).round() as i64;
            (x, y)
        };
        c.line((0, y0 + PH as i64 / 2), (PW as i64 - 1, y0 + PH as i64 / 2), Rgb([200, 200, 200]));
        for (curve, color) in [(t, Rgb([0, 0, 0])), (p, PRED_COLOR)] {
            for k in 1..curve.len() {
                c.line(to_px(k - 1, curve[k - 1]), to_px(k, curve[k]), color);
            }
        }
    }
    c
}

/// Curve plot of `curves` (red) over `reference` (black), one panel per direction.
pub fn save_velocity_plot(curves: &VelocityCurves, reference: Option<&VelocityCurves>, path: &Path) -> Result<()> {
    velocity_plot(curves, reference.unwrap_or(curves)).save(path)
}

/// File stem for a series: `subject_slice`, restricted to filename-safe characters.
pub fn figure_stem(series: &MvmSeries) -> String {
    SeriesKey::of(series)
        .to_string()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

/// Writes the four panels for `series`. Uses the model when a checkpoint is
/// given, otherwise linear interpolation. An empty report writes nothing.
pub fn emit_figures(
    report: &ExperimentReport,
    series: &MvmSeries,
    checkpoint: Option<&Checkpoint>,
    opts: &EvalOptions,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    if report.is_empty() {
        return Err(Error::Argument("report has no rows to illustrate".into()));
    }
    let method = checkpoint.map_or(Method::Baseline(BaselineMethod::Linear), |c| Method::Model(&c.network));
    let ev = evaluate_series(method, series, opts)?;
    std::fs::create_dir_all(out_dir)?;
    let stem = figure_stem(series);
    let t = ev.samples.get(1).map_or(0, |s| s.target_frame());
    let mut written = Vec::new();
    let mut save = |name: &str, c: &Canvas| -> Result<()> {
        let path = out_dir.join(format!("{stem}_{name}.png"));
        c.save(&path)?;
        written.push(path);
        Ok(())
    };
    save("magnitude_strip", &magnitude_strip(&ev, series))?;
    let (overlay, _) = contour_overlay(series.magnitude_frame(t), series.mask_frame(t), ev.reconstructed.mask_frame(t));
    save("contour_overlay", &Canvas { img: overlay })?;
    save("phase_triptych", &phase_triptych(&ev, series, t))?;
    save("velocity", &velocity_plot(&ev.predicted_curves, &ev.true_curves))?;
    Ok(written)
}
