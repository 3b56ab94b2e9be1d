//! Classical frame interpolation: linear blending and Horn-Schunck optical
//! flow with a symmetric two-sided warp.

use ndarray::{Array2, Array3, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::sample_bilinear;
use crate::sampling::{SynthesisSample, ANCHOR_GAP, OFFSETS};

fn check_k(k: usize) -> Result<f64> {
    if !OFFSETS.contains(&k) {
        return Err(Error::Argument(format!("k must be 1, 2 or 3, got {k}")));
    }
    Ok(k as f64 / ANCHOR_GAP as f64)
}

fn check_same(a: &ArrayView2<'_, f32>, b: &ArrayView2<'_, f32>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!("{:?} vs {:?}", a.dim(), b.dim())));
    }
    Ok(())
}

/// `(1 - k/4) a + (k/4) b`.
pub fn linear_interpolate(a: ArrayView2<'_, f32>, b: ArrayView2<'_, f32>, k: usize) -> Result<Array2<f32>> {
    let t = check_k(k)?;
    check_same(&a, &b)?;
    Ok(Zip::from(a)
        .and(b)
        .map_collect(|&x, &y| ((1.0 - t) * x as f64 + t * y as f64) as f32))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HSConfig {
    pub alpha: f64,
    pub iterations: usize,
    /// Stop once the mean of `|du| + |dv|` over one sweep falls below this.
    pub stop_tol: f64,
    /// Images are multiplied by this before differentiation. `alpha` is
    /// expressed in 8-bit intensity units, so unit-range inputs use 255.
    pub intensity_scale: f64,
}

impl Default for HSConfig {
    fn default() -> Self {
        Self {
            alpha: 10.0,
            iterations: 200,
            stop_tol: 1e-4,
            intensity_scale: 255.0,
        }
    }
}

impl HSConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::validation("alpha", "must be positive"));
        }
        if self.iterations == 0 {
            return Err(Error::validation("iterations", "must be at least 1"));
        }
        if !(self.stop_tol >= 0.0) {
            return Err(Error::validation("stop_tol", "must be >= 0"));
        }
        if !(self.intensity_scale > 0.0 && self.intensity_scale.is_finite()) {
            return Err(Error::validation("intensity_scale", "must be positive"));
        }
        Ok(())
    }
}

/// Displacement in pixels over the anchor gap: `u` along x (columns), `v` along y.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    pub u: Array2<f64>,
    pub v: Array2<f64>,
}

impl FlowField {
    pub fn zeros(h: usize, w: usize) -> Self {
        Self {
            u: Array2::zeros((h, w)),
            v: Array2::zeros((h, w)),
        }
    }

    pub fn constant(h: usize, w: usize, u: f64, v: f64) -> Self {
        Self {
            u: Array2::from_elem((h, w), u),
            v: Array2::from_elem((h, w), v),
        }
    }
}

/// Weighted 3x3 neighbourhood mean: 1/6 for edge neighbours, 1/12 for corners.
fn neighbour_mean(f: &Array2<f64>, out: &mut Array2<f64>) {
    let (h, w) = f.dim();
    let at = |y: isize, x: isize| f[[y.clamp(0, h as isize - 1) as usize, x.clamp(0, w as isize - 1) as usize]];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let edge = at(y - 1, x) + at(y + 1, x) + at(y, x - 1) + at(y, x + 1);
            let corner = at(y - 1, x - 1) + at(y - 1, x + 1) + at(y + 1, x - 1) + at(y + 1, x + 1);
            out[[y as usize, x as usize]] = edge / 6.0 + corner / 12.0;
        }
    }
}

pub fn horn_schunck_flow(img1: ArrayView2<'_, f32>, img2: ArrayView2<'_, f32>, cfg: &HSConfig) -> Result<FlowField> {
    cfg.validate()?;
    check_same(&img1, &img2)?;
    if img1.iter().chain(img2.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite pixel in flow input".into()));
    }
    let (h, w) = img1.dim();
    let s = cfg.intensity_scale;
    let e1 = |y: usize, x: usize| img1[[y.min(h - 1), x.min(w - 1)]] as f64 * s;
    let e2 = |y: usize, x: usize| img2[[y.min(h - 1), x.min(w - 1)]] as f64 * s;
    let mut ix = Array2::zeros((h, w));
    let mut iy = Array2::zeros((h, w));
    let mut it = Array2::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            ix[[y, x]] = 0.25
                * (e1(y, x + 1) - e1(y, x) + e1(y + 1, x + 1) - e1(y + 1, x)
                    + e2(y, x + 1) - e2(y, x) + e2(y + 1, x + 1) - e2(y + 1, x));
            iy[[y, x]] = 0.25
                * (e1(y + 1, x) - e1(y, x) + e1(y + 1, x + 1) - e1(y, x + 1)
                    + e2(y + 1, x) - e2(y, x) + e2(y + 1, x + 1) - e2(y, x + 1));
            it[[y, x]] = 0.25
                * (e2(y, x) - e1(y, x) + e2(y + 1, x) - e1(y + 1, x)
                    + e2(y, x + 1) - e1(y, x + 1) + e2(y + 1, x + 1) - e1(y + 1, x + 1));
        }
    }
    let a2 = cfg.alpha * cfg.alpha;
    let mut flow = FlowField::zeros(h, w);
    let (mut ubar, mut vbar) = (Array2::zeros((h, w)), Array2::zeros((h, w)));
    for _ in 0..cfg.iterations {
        neighbour_mean(&flow.u, &mut ubar);
        neighbour_mean(&flow.v, &mut vbar);
        let mut change = 0.0;
        for y in 0..h {
            for x in 0..w {
                let (gx, gy, gt) = (ix[[y, x]], iy[[y, x]], it[[y, x]]);
                let (ub, vb) = (ubar[[y, x]], vbar[[y, x]]);
                let r = (gx * ub + gy * vb + gt) / (a2 + gx * gx + gy * gy);
                let (nu, nv) = (ub - gx * r, vb - gy * r);
                change += (nu - flow.u[[y, x]]).abs() + (nv - flow.v[[y, x]]).abs();
                flow.u[[y, x]] = nu;
                flow.v[[y, x]] = nv;
            }
        }
        if change / ((h * w) as f64) < cfg.stop_tol {
            break;
        }
    }
    Ok(flow)
}

/// Warp both anchors towards time `t` and blend:
/// `(1-t) a(x - t f) + t b(x + (1-t) f)`.
pub fn flow_interpolate_t(a: ArrayView2<'_, f32>, b: ArrayView2<'_, f32>, flow: &FlowField, t: f64) -> Result<Array2<f32>> {
    check_same(&a, &b)?;
    if flow.u.dim() != a.dim() || flow.v.dim() != a.dim() {
        return Err(Error::Shape(format!("flow {:?} vs image {:?}", flow.u.dim(), a.dim())));
    }
    Ok(Array2::from_shape_fn(a.dim(), |(y, x)| {
        let (u, v) = (flow.u[[y, x]], flow.v[[y, x]]);
        let (yf, xf) = (y as f64, x as f64);
        let from_a = sample_bilinear(a, yf - t * v, xf - t * u);
        let from_b = sample_bilinear(b, yf + (1.0 - t) * v, xf + (1.0 - t) * u);
        ((1.0 - t) * from_a + t * from_b) as f32
    }))
}

pub fn flow_interpolate(a: ArrayView2<'_, f32>, b: ArrayView2<'_, f32>, flow: &FlowField, k: usize) -> Result<Array2<f32>> {
    flow_interpolate_t(a, b, flow, check_k(k)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMethod {
    Linear,
    HsFlow,
}

impl BaselineMethod {
    pub const ALL: [BaselineMethod; 2] = [BaselineMethod::Linear, BaselineMethod::HsFlow];

    pub fn name(self) -> &'static str {
        match self {
            BaselineMethod::Linear => "linear",
            BaselineMethod::HsFlow => "hs_flow",
        }
    }
}

impl std::str::FromStr for BaselineMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(BaselineMethod::Linear),
            "hs_flow" | "hs" => Ok(BaselineMethod::HsFlow),
            other => Err(Error::Argument(format!("unknown baseline method {other:?}"))),
        }
    }
}

/// Magnitude `[1,H,W]` and phase `[3,H,W]` predictions for one sample. The
/// Horn-Schunck flow is estimated on the magnitude anchors and reused for phase.
pub fn baseline_synthesize(sample: &SynthesisSample, method: BaselineMethod, hs: &HSConfig) -> Result<(Array3<f32>, Array3<f32>)> {
    let (h, w) = (sample.height(), sample.width());
    let k = sample.k;
    let ma = sample.mag_in.index_axis(Axis(0), 0);
    let mb = sample.mag_in.index_axis(Axis(0), 1);
    let flow = match method {
        BaselineMethod::Linear => None,
        BaselineMethod::HsFlow => Some(horn_schunck_flow(ma, mb, hs)?),
    };
    let interp = |a: ArrayView2<'_, f32>, b: ArrayView2<'_, f32>| match &flow {
        None => linear_interpolate(a, b, k),
        Some(f) => flow_interpolate(a, b, f, k),
    };
    let mut mag = Array3::zeros((1, h, w));
    mag.index_axis_mut(Axis(0), 0).assign(&interp(ma, mb)?);
    let mut phase = Array3::zeros((3, h, w));
    for d in 0..3 {
        let pa = sample.phase_in.index_axis(Axis(0), 2 * d);
        let pb = sample.phase_in.index_axis(Axis(0), 2 * d + 1);
        phase.index_axis_mut(Axis(0), d).assign(&interp(pa, pb)?);
    }
    Ok((mag, phase))
}
