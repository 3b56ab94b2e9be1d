//! Training losses with analytic gradients with respect to the predictions.
//!
//! Everything here works in `f64` on ndarray views; the harness feeds the
//! gradients back into the autograd tape as seeds.

use std::collections::VecDeque;

use ndarray::{Array2, Array3, ArrayView2, ArrayView3, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::SynthesisSample;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub w_syn: f64,
    pub w_seg: f64,
    pub weighted: bool,
    /// Weight floor `epsilon` added everywhere so background stays supervised.
    pub background_floor: f64,
    pub bg_threshold: f64,
    pub dilation_px: usize,
    pub dice_smooth: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            w_syn: 1.0,
            w_seg: 1.0,
            weighted: true,
            background_floor: 0.1,
            bg_threshold: 0.1,
            dilation_px: 2,
            dice_smooth: 1.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !finite_nonneg(self.w_syn) {
            return Err(Error::validation("w_syn", "must be finite and >= 0"));
        }
        if !finite_nonneg(self.w_seg) {
            return Err(Error::validation("w_seg", "must be finite and >= 0"));
        }
        if self.w_syn + self.w_seg <= 0.0 {
            return Err(Error::validation("w_syn", "w_syn + w_seg must be positive"));
        }
        if !finite_nonneg(self.background_floor) {
            return Err(Error::validation("background_floor", "must be finite and >= 0"));
        }
        if !self.bg_threshold.is_finite() {
            return Err(Error::validation("bg_threshold", "must be finite"));
        }
        if !finite_nonneg(self.dice_smooth) {
            return Err(Error::validation("dice_smooth", "must be finite and >= 0"));
        }
        Ok(())
    }
}

/// `omega_1`: 1 where the target magnitude exceeds `bg_threshold`.
pub fn denoise_weight_map(mag_target: ArrayView2<'_, f32>, bg_threshold: f64) -> Array2<f32> {
    mag_target.mapv(|v| ((v as f64) > bg_threshold) as u8 as f32)
}

/// Union of the masks with every enclosed background region filled in.
/// Background reachable from the border through 4-connected steps stays empty.
pub fn fill_holes(mask: ArrayView2<'_, bool>) -> Array2<bool> {
    let (h, w) = mask.dim();
    let mut reached = Array2::from_elem((h, w), false);
    let mut queue = VecDeque::new();
    let push = |y: usize, x: usize, reached: &mut Array2<bool>, q: &mut VecDeque<(usize, usize)>| {
        if !mask[[y, x]] && !reached[[y, x]] {
            reached[[y, x]] = true;
            q.push_back((y, x));
        }
    };
    for y in 0..h {
        push(y, 0, &mut reached, &mut queue);
        push(y, w - 1, &mut reached, &mut queue);
    }
    for x in 0..w {
        push(0, x, &mut reached, &mut queue);
        push(h - 1, x, &mut reached, &mut queue);
    }
    while let Some((y, x)) = queue.pop_front() {
        if y > 0 {
            push(y - 1, x, &mut reached, &mut queue);
        }
        if y + 1 < h {
            push(y + 1, x, &mut reached, &mut queue);
        }
        if x > 0 {
            push(y, x - 1, &mut reached, &mut queue);
        }
        if x + 1 < w {
            push(y, x + 1, &mut reached, &mut queue);
        }
    }
    reached.mapv(|r| !r)
}

/// Dilation with the Euclidean disk `dy^2 + dx^2 <= r^2` (13 pixels for r = 2).
pub fn dilate_disk(mask: ArrayView2<'_, bool>, radius: usize) -> Array2<bool> {
    let (h, w) = mask.dim();
    let r = radius as isize;
    let offsets: Vec<(isize, isize)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dy, dx)))
        .filter(|(dy, dx)| dy * dy + dx * dx <= r * r)
        .collect();
    let mut out = Array2::from_elem((h, w), false);
    for ((y, x), &m) in mask.indexed_iter() {
        if !m {
            continue;
        }
        for &(dy, dx) in &offsets {
            let (yy, xx) = (y as isize + dy, x as isize + dx);
            if yy >= 0 && xx >= 0 && (yy as usize) < h && (xx as usize) < w {
                out[[yy as usize, xx as usize]] = true;
            }
        }
    }
    out
}

/// `omega_2`: hole-filled union of the given masks, dilated by `dilation_px`.
pub fn myocardium_weight_map(masks: &[ArrayView2<'_, f32>], dilation_px: usize) -> Result<Array2<f32>> {
    let first = masks
        .first()
        .ok_or_else(|| Error::Argument("no masks given".into()))?;
    let dim = first.dim();
    let mut union = Array2::from_elem(dim, false);
    for m in masks {
        if m.dim() != dim {
            return Err(Error::Shape(format!("mask {:?} vs {:?}", m.dim(), dim)));
        }
        Zip::from(&mut union).and(m).for_each(|u, &v| *u |= v > 0.5);
    }
    if !union.iter().any(|&u| u) {
        log::warn!("myocardium weight map: all masks empty");
        return Ok(Array2::zeros(dim));
    }
    let filled = fill_holes(union.view());
    Ok(dilate_disk(filled.view(), dilation_px).mapv(|b| b as u8 as f32))
}

fn check_pair(pred: &ArrayView3<'_, f64>, target: &ArrayView3<'_, f64>, weight: &ArrayView2<'_, f64>) -> Result<()> {
    if pred.dim() != target.dim() {
        return Err(Error::Shape(format!("pred {:?} vs target {:?}", pred.dim(), target.dim())));
    }
    let (_, h, w) = pred.dim();
    if weight.dim() != (h, w) {
        return Err(Error::Shape(format!("weight {:?} vs image {:?}", weight.dim(), (h, w))));
    }
    Ok(())
}

/// `sum W |pred - target| / sum W`, with `W` broadcast over channels.
pub fn weighted_mae(pred: ArrayView3<'_, f64>, target: ArrayView3<'_, f64>, weight: ArrayView2<'_, f64>) -> Result<f64> {
    Ok(weighted_mae_grad(pred, target, weight)?.0)
}

pub fn weighted_mae_grad(
    pred: ArrayView3<'_, f64>,
    target: ArrayView3<'_, f64>,
    weight: ArrayView2<'_, f64>,
) -> Result<(f64, Array3<f64>)> {
    check_pair(&pred, &target, &weight)?;
    let total_w = weight.sum() * pred.dim().0 as f64;
    if total_w <= 0.0 || !total_w.is_finite() {
        return Err(Error::Numeric(format!("weight sum {total_w} is not positive")));
    }
    let mut loss = 0.0;
    let mut grad = Array3::zeros(pred.dim());
    for c in 0..pred.dim().0 {
        Zip::from(grad.index_axis_mut(Axis(0), c))
            .and(pred.index_axis(Axis(0), c))
            .and(target.index_axis(Axis(0), c))
            .and(weight)
            .for_each(|g, &p, &t, &w| {
                let d = p - t;
                loss += w * d.abs();
                *g = w * d.signum() * (d != 0.0) as u8 as f64 / total_w;
            });
    }
    Ok((loss / total_w, grad))
}

/// Soft Dice loss `1 - (2 sum pg + s) / (sum p + sum g + s)`.
pub fn dice_loss(prob: ArrayView3<'_, f64>, gt: ArrayView3<'_, f64>, smooth: f64) -> Result<f64> {
    Ok(dice_loss_grad(prob, gt, smooth)?.0)
}

pub fn dice_loss_grad(prob: ArrayView3<'_, f64>, gt: ArrayView3<'_, f64>, smooth: f64) -> Result<(f64, Array3<f64>)> {
    if prob.dim() != gt.dim() {
        return Err(Error::Shape(format!("prob {:?} vs gt {:?}", prob.dim(), gt.dim())));
    }
    let inter: f64 = prob.iter().zip(gt.iter()).map(|(p, g)| p * g).sum();
    let union = prob.sum() + gt.sum() + smooth;
    if union <= 0.0 {
        // Both empty with no smoothing: perfect agreement.
        return Ok((0.0, Array3::zeros(prob.dim())));
    }
    let num = 2.0 * inter + smooth;
    let grad = gt.mapv(|g| -(2.0 * g * union - num) / (union * union));
    Ok((1.0 - num / union, grad))
}

const EDT_INF: f64 = 1e20;

/// Squared distance transform of a 1-D sampled function (lower envelope of parabolas).
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * q as f64 - 2.0 * p as f64);
            if s <= z[k] && k > 0 {
                k -= 1;
                continue;
            }
            if s <= z[k] {
                // k == 0 and the new parabola dominates from the start.
                v[0] = q;
                z[0] = f64::NEG_INFINITY;
                z[1] = f64::INFINITY;
                break;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let d = q as f64 - p as f64;
        *o = d * d + f[p];
    }
}

/// Exact Euclidean distance from every pixel to the nearest `true` pixel.
pub fn distance_to(seeds: ArrayView2<'_, bool>) -> Array2<f64> {
    let (h, w) = seeds.dim();
    let mut grid = seeds.mapv(|s| if s { 0.0 } else { EDT_INF });
    let n = h.max(w);
    let (mut f, mut out, mut v, mut z) = (vec![0.0; n], vec![0.0; n], vec![0usize; n], vec![0.0; n + 1]);
    for x in 0..w {
        for y in 0..h {
            f[y] = grid[[y, x]];
        }
        edt_1d(&f[..h], &mut out[..h], &mut v, &mut z);
        for y in 0..h {
            grid[[y, x]] = out[y];
        }
    }
    for y in 0..h {
        for x in 0..w {
            f[x] = grid[[y, x]];
        }
        edt_1d(&f[..w], &mut out[..w], &mut v, &mut z);
        for x in 0..w {
            grid[[y, x]] = out[x];
        }
    }
    grid.mapv_into(f64::sqrt)
}

/// Signed distance map: `+d` to the nearest mask pixel outside, `-d` to the
/// nearest boundary pixel inside. Boundary pixels (mask pixels 4-adjacent to
/// background) are 0.
pub fn signed_distance_map(mask: ArrayView2<'_, f32>) -> Result<Array2<f64>> {
    let inside = mask.mapv(|v| v > 0.5);
    let count = inside.iter().filter(|&&b| b).count();
    if count == 0 {
        return Err(Error::Degenerate("signed distance map of an empty mask".into()));
    }
    if count == inside.len() {
        return Err(Error::Degenerate("signed distance map of a full mask".into()));
    }
    let (h, w) = inside.dim();
    let boundary = Array2::from_shape_fn((h, w), |(y, x)| {
        inside[[y, x]]
            && ((y > 0 && !inside[[y - 1, x]])
                || (y + 1 < h && !inside[[y + 1, x]])
                || (x > 0 && !inside[[y, x - 1]])
                || (x + 1 < w && !inside[[y, x + 1]]))
    });
    let to_inside = distance_to(inside.view());
    let to_boundary = distance_to(boundary.view());
    Ok(Array2::from_shape_fn((h, w), |p| {
        if inside[p] {
            -to_boundary[p]
        } else {
            to_inside[p]
        }
    }))
}

fn check_sdm(prob: &ArrayView3<'_, f64>, sdm: &ArrayView2<'_, f64>) -> Result<()> {
    let (_, h, w) = prob.dim();
    if sdm.dim() != (h, w) {
        return Err(Error::Shape(format!("sdm {:?} vs prob {:?}", sdm.dim(), prob.dim())));
    }
    Ok(())
}

/// Mean over pixels of `sdm * prob`.
pub fn boundary_loss(prob: ArrayView3<'_, f64>, sdm: ArrayView2<'_, f64>) -> Result<f64> {
    Ok(boundary_loss_grad(prob, sdm)?.0)
}

pub fn boundary_loss_grad(prob: ArrayView3<'_, f64>, sdm: ArrayView2<'_, f64>) -> Result<(f64, Array3<f64>)> {
    check_sdm(&prob, &sdm)?;
    let n = prob.len() as f64;
    let mut grad = Array3::zeros(prob.dim());
    let mut loss = 0.0;
    for c in 0..prob.dim().0 {
        Zip::from(grad.index_axis_mut(Axis(0), c))
            .and(prob.index_axis(Axis(0), c))
            .and(sdm)
            .for_each(|g, &p, &d| {
                loss += d * p;
                *g = d / n;
            });
    }
    Ok((loss / n, grad))
}

/// Per-sample supervision: targets, the combined weight map and the target SDM.
#[derive(Clone, Debug)]
pub struct LossTargets {
    pub mag: Array3<f64>,
    pub phase: Array3<f64>,
    pub mask: Array3<f64>,
    pub weight: Array2<f64>,
    pub sdm: Array2<f64>,
}

impl LossTargets {
    pub fn from_sample(sample: &SynthesisSample, cfg: &LossConfig) -> Result<Self> {
        let dim = (sample.height(), sample.width());
        let weight = if cfg.weighted {
            let w1 = denoise_weight_map(sample.mag_target.index_axis(Axis(0), 0), cfg.bg_threshold);
            let masks = [
                sample.mask_in.index_axis(Axis(0), 0),
                sample.mask_in.index_axis(Axis(0), 1),
                sample.mask_target.index_axis(Axis(0), 0),
            ];
            let w2 = myocardium_weight_map(&masks, cfg.dilation_px)?;
            Zip::from(&w1)
                .and(&w2)
                .map_collect(|&a, &b| cfg.background_floor + a as f64 + b as f64)
        } else {
            Array2::ones(dim)
        };
        Ok(Self {
            mag: sample.mag_target.mapv(f64::from),
            phase: sample.phase_target.mapv(f64::from),
            mask: sample.mask_target.mapv(f64::from),
            weight,
            sdm: signed_distance_map(sample.mask_target.index_axis(Axis(0), 0))?,
        })
    }
}

#[derive(Clone, Debug)]
pub struct Predictions {
    pub mag: Array3<f64>,
    pub phase: Array3<f64>,
    pub mask_prob: Array3<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub syn_mag: f64,
    pub syn_phase: f64,
    pub dice: f64,
    pub boundary: f64,
}

impl LossBreakdown {
    pub fn combine(cfg: &LossConfig, syn_mag: f64, syn_phase: f64, dice: f64, boundary: f64) -> Self {
        Self {
            total: cfg.w_syn * (syn_mag + syn_phase) + cfg.w_seg * (dice + boundary),
            syn_mag,
            syn_phase,
            dice,
            boundary,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LossGrads {
    pub mag: Array3<f64>,
    pub phase: Array3<f64>,
    pub mask_prob: Array3<f64>,
}

pub fn total_loss(pred: &Predictions, targets: &LossTargets, cfg: &LossConfig) -> Result<(LossBreakdown, LossGrads)> {
    let w = targets.weight.view();
    let (syn_mag, g_mag) = weighted_mae_grad(pred.mag.view(), targets.mag.view(), w)?;
    let (syn_phase, g_phase) = weighted_mae_grad(pred.phase.view(), targets.phase.view(), w)?;
    let (dice, g_dice) = dice_loss_grad(pred.mask_prob.view(), targets.mask.view(), cfg.dice_smooth)?;
    let (boundary, g_bd) = boundary_loss_grad(pred.mask_prob.view(), targets.sdm.view())?;
    let breakdown = LossBreakdown::combine(cfg, syn_mag, syn_phase, dice, boundary);
    Ok((
        breakdown,
        LossGrads {
            mag: g_mag * cfg.w_syn,
            phase: g_phase * cfg.w_syn,
            mask_prob: (g_dice + g_bd) * cfg.w_seg,
        },
    ))
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use ndarray::{arr2, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::phantom::{generate_phantom, PhantomConfig};
    use crate::sampling::build_sample;

    fn disk(n: usize, cy: f64, cx: f64, r: f64) -> Array2<f32> {
        Array2::from_shape_fn((n, n), |(y, x)| {
            (((y as f64 - cy).powi(2) + (x as f64 - cx).powi(2)).sqrt() <= r) as u8 as f32
        })
    }

    fn brute_sdm(mask: &Array2<f32>) -> Array2<f64> {
        let (h, w) = mask.dim();
        let inside = |y: isize, x: isize| {
            y >= 0 && x >= 0 && (y as usize) < h && (x as usize) < w && mask[[y as usize, x as usize]] > 0.5
        };
        let within = |y: isize, x: isize| y >= 0 && x >= 0 && (y as usize) < h && (x as usize) < w;
        let mut pts_in = vec![];
        let mut pts_bd = vec![];
        for y in 0..h as isize {
            for x in 0..w as isize {
                if inside(y, x) {
                    pts_in.push((y, x));
                    let nb = [(y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)];
                    if nb.iter().any(|&(a, b)| within(a, b) && !inside(a, b)) {
                        pts_bd.push((y, x));
                    }
                }
            }
        }
        let nearest = |pts: &[(isize, isize)], y: isize, x: isize| {
            pts.iter()
                .map(|&(a, b)| (((a - y).pow(2) + (b - x).pow(2)) as f64).sqrt())
                .fold(f64::INFINITY, f64::min)
        };
        Array2::from_shape_fn((h, w), |(y, x)| {
            let (y, x) = (y as isize, x as isize);
            if inside(y, x) {
                -nearest(&pts_bd, y, x)
            } else {
                nearest(&pts_in, y, x)
            }
        })
    }

    #[test]
    fn denoise_map_cases() {
        let z = Array2::<f32>::zeros((4, 4));
        assert!(denoise_weight_map(z.view(), 0.1).iter().all(|&v| v == 0.0));
        let o = Array2::<f32>::ones((4, 4));
        assert!(denoise_weight_map(o.view(), 0.1).iter().all(|&v| v == 1.0));
        let s = generate_phantom(&PhantomConfig::default()).unwrap();
        let frame = s.magnitude.index_axis(Axis(0), 7);
        let w1 = denoise_weight_map(frame, 0.1);
        for (p, &v) in frame.indexed_iter() {
            assert_eq!(w1[p] == 1.0, v > 0.1);
        }
        // Noise sigma 0.02 never lifts background past 0.1 here, so w1 is annulus plus pool.
        let m = s.mask.index_axis(Axis(0), 7);
        let filled = fill_holes(m.mapv(|v| v > 0.5).view());
        for (p, &v) in w1.indexed_iter() {
            assert_eq!(v == 1.0, filled[p], "{p:?}");
        }
    }

    #[test]
    fn single_pixel_dilation_is_thirteen_pixel_disk() {
        let mut m = Array2::<f32>::zeros((9, 9));
        m[[4, 4]] = 1.0;
        let w2 = myocardium_weight_map(&[m.view(), m.view(), m.view()], 2).unwrap();
        assert_eq!(w2.sum(), 13.0);
        for ((y, x), &v) in w2.indexed_iter() {
            let d2 = (y as isize - 4).pow(2) + (x as isize - 4).pow(2);
            assert_eq!(v == 1.0, d2 <= 4);
        }
    }

    #[test]
    fn annulus_fills_and_dilates() {
        let outer = disk(32, 15.5, 15.5, 9.0);
        let inner = disk(32, 15.5, 15.5, 5.0);
        let annulus = &outer - &inner;
        let w2 = myocardium_weight_map(&[annulus.view(), annulus.view(), annulus.view()], 2).unwrap();
        let expected = dilate_disk(outer.mapv(|v| v > 0.5).view(), 2).mapv(|b| b as u8 as f32);
        assert_eq!(w2, expected);
        let empty = Array2::<f32>::zeros((8, 8));
        let z = myocardium_weight_map(&[empty.view(), empty.view(), empty.view()], 2).unwrap();
        assert_eq!(z.sum(), 0.0);
    }

    #[test]
    fn weighted_mae_cases() {
        let pred = arr2(&[[1.0, 0.0], [0.0, 1.0]]).insert_axis(Axis(0));
        let target = Array3::<f64>::zeros((1, 2, 2));
        let w1 = arr2(&[[1.0, 0.0], [0.0, 0.0]]);
        let w = w1.mapv(|v| v + 0.1);
        assert_abs_diff_eq!(weighted_mae(pred.view(), target.view(), w.view()).unwrap(), 1.2 / 1.4, epsilon = 1e-12);
        assert_eq!(weighted_mae(pred.view(), pred.view(), w.view()).unwrap(), 0.0);
        let ones = Array2::ones((2, 2));
        assert_abs_diff_eq!(weighted_mae(pred.view(), target.view(), ones.view()).unwrap(), 0.5, epsilon = 1e-12);
        let zero = Array2::zeros((2, 2));
        assert!(matches!(weighted_mae(pred.view(), target.view(), zero.view()), Err(Error::Numeric(_))));
    }

    #[test]
    fn weighted_mae_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = Array3::from_shape_fn((2, 4, 4), |_| rng.random::<f64>());
        let t = Array3::from_shape_fn((2, 4, 4), |_| rng.random::<f64>());
        let w = Array2::from_shape_fn((4, 4), |_| rng.random::<f64>() + 0.1);
        let perm = |a: &Array3<f64>| Array3::from_shape_fn(a.dim(), |(c, y, x)| a[[c, 3 - x, y]]);
        let wp = Array2::from_shape_fn((4, 4), |(y, x)| w[[3 - x, y]]);
        let a = weighted_mae(p.view(), t.view(), w.view()).unwrap();
        let b = weighted_mae(perm(&p).view(), perm(&t).view(), wp.view()).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
    }

    #[test]
    fn dice_cases() {
        let g = Array3::from_shape_fn((1, 4, 4), |(_, y, _)| (y < 2) as u8 as f64);
        assert_abs_diff_eq!(dice_loss(g.view(), g.view(), 1.0).unwrap(), 0.0, epsilon = 1e-15);
        let half = Array3::from_elem((1, 4, 4), 0.5);
        assert_abs_diff_eq!(dice_loss(half.view(), g.view(), 1.0).unwrap(), 1.0 - 9.0 / 17.0, epsilon = 1e-15);
        let ones = Array3::ones((1, 4, 4));
        let zeros = Array3::zeros((1, 4, 4));
        assert_abs_diff_eq!(dice_loss(ones.view(), zeros.view(), 1.0).unwrap(), 1.0 - 1.0 / 17.0, epsilon = 1e-15);
    }

    #[test]
    fn sdm_single_pixel() {
        let mut m = Array2::<f32>::zeros((7, 7));
        m[[3, 3]] = 1.0;
        let d = signed_distance_map(m.view()).unwrap();
        assert_eq!(d[[3, 3]], 0.0);
        assert_abs_diff_eq!(d[[2, 3]], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d[[3, 4]], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d[[4, 4]], 2f64.sqrt(), epsilon = 1e-12);
        assert!(matches!(signed_distance_map(Array2::<f32>::ones((4, 4)).view()), Err(Error::Degenerate(_))));
        assert!(matches!(signed_distance_map(Array2::<f32>::zeros((4, 4)).view()), Err(Error::Degenerate(_))));
    }

    #[test]
    fn sdm_matches_brute_force() {
        for (cy, cx, r) in [(3.5, 3.5, 2.5), (2.0, 5.0, 3.0), (4.0, 4.0, 1.2)] {
            let m = disk(8, cy, cx, r);
            let fast = signed_distance_map(m.view()).unwrap();
            let slow = brute_sdm(&m);
            for (p, &v) in fast.indexed_iter() {
                assert_abs_diff_eq!(v, slow[p], epsilon = 1e-12);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = Array2::from_shape_fn((12, 10), |_| (rng.random::<f64>() < 0.3) as u8 as f32);
        let fast = signed_distance_map(m.view()).unwrap();
        let slow = brute_sdm(&m);
        for (p, &v) in fast.indexed_iter() {
            assert_abs_diff_eq!(v, slow[p], epsilon = 1e-12);
        }
    }

    #[test]
    fn sdm_of_complement_is_negated_up_to_boundary_layer() {
        let m = disk(16, 7.5, 7.5, 4.5);
        let c = m.mapv(|v| 1.0 - v);
        let a = signed_distance_map(m.view()).unwrap();
        let b = signed_distance_map(c.view()).unwrap();
        for (p, &v) in a.indexed_iter() {
            assert!((v + b[p]).abs() <= 1.0 + 1e-12, "{p:?}: {v} {}", b[p]);
        }
    }

    #[test]
    fn boundary_loss_cases() {
        let m = disk(8, 3.5, 3.5, 2.5);
        let sdm = signed_distance_map(m.view()).unwrap();
        let zero = Array3::zeros((1, 8, 8));
        assert_eq!(boundary_loss(zero.view(), sdm.view()).unwrap(), 0.0);
        let gt = m.mapv(f64::from).insert_axis(Axis(0));
        let comp = gt.mapv(|v| 1.0 - v);
        let a = boundary_loss(gt.view(), sdm.view()).unwrap();
        let b = boundary_loss(comp.view(), sdm.view()).unwrap();
        let inside: f64 = sdm.iter().zip(m.iter()).filter(|(_, &g)| g > 0.5).map(|(d, _)| d).sum();
        assert_abs_diff_eq!(a, inside / 64.0, epsilon = 1e-12);
        assert!(a < b);
        // Moving mass from a positive-sdm pixel to a negative one lowers the loss.
        let mut p = Array3::from_elem((1, 8, 8), 0.5);
        let before = boundary_loss(p.view(), sdm.view()).unwrap();
        p[[0, 0, 0]] -= 0.2;
        p[[0, 3, 3]] += 0.2;
        assert!(boundary_loss(p.view(), sdm.view()).unwrap() < before);
    }

    #[test]
    fn boundary_loss_decreases_along_path_to_gt() {
        let m = disk(16, 7.5, 7.5, 4.0);
        let sdm = signed_distance_map(m.view()).unwrap();
        let g = m.mapv(f64::from).insert_axis(Axis(0));
        let p0 = Array3::from_elem((1, 16, 16), 0.6);
        let mut last = f64::INFINITY;
        for i in 0..=10 {
            let l = i as f64 / 10.0;
            let p = &p0 * (1.0 - l) + &g * l;
            let v = boundary_loss(p.view(), sdm.view()).unwrap();
            assert!(v < last);
            last = v;
        }
    }

    fn random_case(seed: u64) -> (Predictions, LossTargets) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 16;
        let mask = disk(n, 7.0, 8.0, 4.5);
        let mut u = |c: usize| Array3::from_shape_fn((c, n, n), |_| rng.random::<f64>());
        let pred = Predictions {
            mag: u(1),
            phase: u(3).mapv(|v| 2.0 * v - 1.0),
            mask_prob: u(1).mapv(|v| 0.05 + 0.9 * v),
        };
        let targets = LossTargets {
            mag: u(1),
            phase: u(3).mapv(|v| 2.0 * v - 1.0),
            mask: mask.mapv(f64::from).insert_axis(Axis(0)),
            weight: u(1).index_axis(Axis(0), 0).mapv(|v| 0.1 + (v > 0.5) as u8 as f64),
            sdm: signed_distance_map(mask.view()).unwrap(),
        };
        (pred, targets)
    }

    #[test]
    fn total_loss_gradients_match_finite_differences() {
        let cfg = LossConfig { w_syn: 0.7, w_seg: 1.3, ..Default::default() };
        let (pred, targets) = random_case(21);
        let (_, grads) = total_loss(&pred, &targets, &cfg).unwrap();
        let h = 1e-4;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..30 {
            let which = rng.random_range(0..3);
            let (c, y, x) = (rng.random_range(0..if which == 1 { 3 } else { 1 }), rng.random_range(0..16), rng.random_range(0..16));
            let eval = |delta: f64| {
                let mut p = pred.clone();
                let arr = match which {
                    0 => &mut p.mag,
                    1 => &mut p.phase,
                    _ => &mut p.mask_prob,
                };
                arr[[c, y, x]] += delta;
                total_loss(&p, &targets, &cfg).unwrap().0.total
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let an = match which {
                0 => grads.mag[[c, y, x]],
                1 => grads.phase[[c, y, x]],
                _ => grads.mask_prob[[c, y, x]],
            };
            let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
            assert!(rel < 1e-3, "which {which} ({c},{y},{x}): fd {fd} an {an}");
        }
    }

    #[test]
    fn total_loss_fixture_and_reductions() {
        let n = 4;
        let mut mask = Array2::<f32>::zeros((n, n));
        mask[[1, 1]] = 1.0;
        mask[[1, 2]] = 1.0;
        let sdm = signed_distance_map(mask.view()).unwrap();
        let weight = Array2::from_shape_fn((n, n), |(y, x)| 0.1 + ((y + x) % 2) as f64);
        let targets = LossTargets {
            mag: Array3::from_shape_fn((1, n, n), |(_, y, x)| (y * n + x) as f64 / 16.0),
            phase: Array3::zeros((3, n, n)),
            mask: mask.mapv(f64::from).insert_axis(Axis(0)),
            weight: weight.clone(),
            sdm: sdm.clone(),
        };
        let pred = Predictions {
            mag: targets.mag.mapv(|v| v + 0.25),
            phase: Array3::from_shape_fn((3, n, n), |(c, _, _)| 0.1 * c as f64),
            mask_prob: Array3::from_elem((1, n, n), 0.25),
        };
        let cfg = LossConfig::default();
        let (b, _) = total_loss(&pred, &targets, &cfg).unwrap();
        // Independent scalar recomputation.
        let sw: f64 = weight.sum();
        let syn_mag = 0.25;
        let syn_phase = (0.0 + 0.1 + 0.2) * sw / (3.0 * sw);
        let dice = 1.0 - (2.0 * 0.5 + 1.0) / (4.0 + 2.0 + 1.0);
        let boundary = 0.25 * sdm.sum() / 16.0;
        assert_abs_diff_eq!(b.syn_mag, syn_mag, epsilon = 1e-6);
        assert_abs_diff_eq!(b.syn_phase, syn_phase, epsilon = 1e-6);
        assert_abs_diff_eq!(b.dice, dice, epsilon = 1e-6);
        assert_abs_diff_eq!(b.boundary, boundary, epsilon = 1e-6);
        assert_eq!(b.total, 1.0 * (b.syn_mag + b.syn_phase) + 1.0 * (b.dice + b.boundary));

        let seg_off = LossConfig { w_seg: 0.0, ..cfg.clone() };
        let (b2, _) = total_loss(&pred, &targets, &seg_off).unwrap();
        assert_eq!(b2.total, b2.syn_mag + b2.syn_phase);
    }

    #[test]
    fn perfect_prediction_leaves_boundary_term() {
        let s = generate_phantom(&PhantomConfig { frames: 8, ..Default::default() }).unwrap();
        let smp = build_sample(&s, 0, 2).unwrap();
        let cfg = LossConfig::default();
        let t = LossTargets::from_sample(&smp, &cfg).unwrap();
        let pred = Predictions { mag: t.mag.clone(), phase: t.phase.clone(), mask_prob: t.mask.clone() };
        let (b, _) = total_loss(&pred, &t, &cfg).unwrap();
        assert_eq!(b.syn_mag, 0.0);
        assert_eq!(b.syn_phase, 0.0);
        assert_abs_diff_eq!(b.dice, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b.total, boundary_loss(t.mask.view(), t.sdm.view()).unwrap(), epsilon = 1e-12);
        assert!(t.weight.iter().all(|&w| w >= 0.1));
        let unweighted = LossTargets::from_sample(&smp, &LossConfig { weighted: false, ..cfg }).unwrap();
        assert!(unweighted.weight.iter().all(|&w| w == 1.0));
    }

    #[test]
    fn config_validation() {
        assert!(LossConfig::default().validate().is_ok());
        let bad = LossConfig { w_syn: 0.0, w_seg: 0.0, ..Default::default() };
        assert_eq!(bad.validate().unwrap_err().field(), Some("w_syn"));
        let bad = LossConfig { w_seg: -1.0, ..Default::default() };
        assert_eq!(bad.validate().unwrap_err().field(), Some("w_seg"));
    }
}
