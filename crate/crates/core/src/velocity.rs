//! Global myocardial velocity curves from phase images and masks.
//!
//! Sign conventions: radial is outward-positive, so contraction is negative.
//! The circumferential unit vector is the radial one turned by +90 degrees in
//! the `(x, y)` image frame, `c = (-r_y, r_x)`.

use ndarray::{Array3, ArrayView2, ArrayView3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::pearson;
use crate::series::MvmSeries;

/// Pixels closer than this to the centroid carry no in-plane direction.
pub const CENTROID_EXCLUSION_PX: f64 = 0.5;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VelocityCurves {
    pub longitudinal: Vec<f64>,
    pub radial: Vec<f64>,
    pub circumferential: Vec<f64>,
    /// Velocity unit; phase times venc.
    pub units: String,
    /// Frames whose velocities could not be computed (values there are 0).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub frame_errors: Vec<FrameError>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameError {
    pub frame: usize,
    pub reason: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Longitudinal,
    Radial,
    Circumferential,
}

impl Direction {
    pub const ALL: [Direction; 3] = [
        Direction::Longitudinal,
        Direction::Radial,
        Direction::Circumferential,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Direction::Longitudinal => "longitudinal",
            Direction::Radial => "radial",
            Direction::Circumferential => "circumferential",
        }
    }
}

impl VelocityCurves {
    pub const DEFAULT_UNITS: &'static str = "mm per time unit of venc";

    pub fn with_len(t: usize) -> Self {
        Self {
            longitudinal: vec![0.0; t],
            radial: vec![0.0; t],
            circumferential: vec![0.0; t],
            units: Self::DEFAULT_UNITS.to_string(),
            frame_errors: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.longitudinal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.longitudinal.is_empty()
    }

    pub fn is_valid(&self) -> bool {
        self.frame_errors.is_empty()
    }

    pub fn curve(&self, d: Direction) -> &[f64] {
        match d {
            Direction::Longitudinal => &self.longitudinal,
            Direction::Radial => &self.radial,
            Direction::Circumferential => &self.circumferential,
        }
    }
}

/// Mean foreground `(row, column)` coordinate.
pub fn myocardium_centroid(mask: ArrayView2<'_, f32>) -> Result<(f64, f64)> {
    let (mut sy, mut sx, mut n) = (0.0, 0.0, 0usize);
    for ((y, x), &m) in mask.indexed_iter() {
        if m > 0.5 {
            sy += y as f64;
            sx += x as f64;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Degenerate("empty myocardium mask".into()));
    }
    Ok((sy / n as f64, sx / n as f64))
}

/// Mean `(longitudinal, radial, circumferential)` velocity over the mask.
pub fn decompose_velocity(
    phase: ArrayView3<'_, f32>,
    mask: ArrayView2<'_, f32>,
    venc: [f64; 3],
    spacing_mm: [f64; 2],
) -> Result<(f64, f64, f64)> {
    if phase.dim() != (3, mask.dim().0, mask.dim().1) {
        return Err(Error::Shape(format!(
            "phase {:?} vs mask {:?}",
            phase.dim(),
            mask.dim()
        )));
    }
    let (cy, cx) = myocardium_centroid(mask)?;
    let (mut vl, mut vr, mut vc) = (0.0, 0.0, 0.0);
    let (mut n_all, mut n_plane) = (0usize, 0usize);
    for ((y, x), &m) in mask.indexed_iter() {
        if m <= 0.5 {
            continue;
        }
        let vx = phase[[0, y, x]] as f64 * venc[0];
        let vy = phase[[1, y, x]] as f64 * venc[1];
        let vz = phase[[2, y, x]] as f64 * venc[2];
        vl += vz;
        n_all += 1;
        let (px, py) = (x as f64 - cx, y as f64 - cy);
        if px.hypot(py) < CENTROID_EXCLUSION_PX {
            continue;
        }
        let (dx, dy) = (px * spacing_mm[1], py * spacing_mm[0]);
        let r = dx.hypot(dy);
        let (rx, ry) = (dx / r, dy / r);
        vr += vx * rx + vy * ry;
        vc += -vx * ry + vy * rx;
        n_plane += 1;
    }
    if n_plane == 0 {
        return Err(Error::Degenerate(
            "all mask pixels fall within the centroid exclusion radius".into(),
        ));
    }
    Ok((vl / n_all as f64, vr / n_plane as f64, vc / n_plane as f64))
}

/// Per-frame velocities of `series` over `masks` (`[T, H, W]`, typically the
/// series' own masks or predicted ones).
pub fn velocity_curves(series: &MvmSeries, masks: &Array3<f32>) -> Result<VelocityCurves> {
    let t = series.frames();
    if masks.dim() != series.mask.dim() {
        return Err(Error::Shape(format!(
            "masks {:?} vs series {:?}",
            masks.dim(),
            series.mask.dim()
        )));
    }
    let mut curves = VelocityCurves::with_len(t);
    for f in 0..t {
        match decompose_velocity(
            series.phase_frame(f),
            masks.index_axis(ndarray::Axis(0), f),
            series.venc,
            series.pixel_spacing_mm,
        ) {
            Ok((l, r, c)) => {
                curves.longitudinal[f] = l;
                curves.radial[f] = r;
                curves.circumferential[f] = c;
            }
            Err(e) => curves.frame_errors.push(FrameError {
                frame: f,
                reason: e.to_string(),
            }),
        }
    }
    Ok(curves)
}

/// Pearson correlation per direction.
pub fn direction_correlations(pred: &VelocityCurves, truth: &VelocityCurves) -> Result<[f64; 3]> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!(
            "curve lengths {} vs {}",
            pred.len(),
            truth.len()
        )));
    }
    for (c, who) in [(pred, "predicted"), (truth, "true")] {
        if !c.is_valid() {
            return Err(Error::Degenerate(format!(
                "{who} curves invalid at frames {:?}",
                c.frame_errors.iter().map(|e| e.frame).collect::<Vec<_>>()
            )));
        }
    }
    let mut out = [0.0; 3];
    for (i, d) in Direction::ALL.into_iter().enumerate() {
        out[i] = pearson(pred.curve(d), truth.curve(d)).map_err(|e| match e {
            Error::Degenerate(m) => Error::Degenerate(format!("{} curve: {m}", d.name())),
            other => other,
        })?;
    }
    Ok(out)
}

/// Mean of the three per-direction Pearson correlations.
pub fn velocity_coefficient(pred: &VelocityCurves, truth: &VelocityCurves) -> Result<f64> {
    let r = direction_correlations(pred, truth)?;
    Ok(r.iter().sum::<f64>() / 3.0)
}

#[cfg(test)]
mod tests {
    use ndarray::{s, Array2};

    use super::*;
    use crate::phantom::{analytic_velocity_curves, generate_phantom, PhantomConfig};

    fn annulus(n: usize, c: f64, r0: f64, r1: f64) -> Array2<f32> {
        Array2::from_shape_fn((n, n), |(y, x)| {
            let r = (x as f64 - c).hypot(y as f64 - c);
            (r >= r0 && r <= r1) as u8 as f32
        })
    }

    #[test]
    fn centroid_cases() {
        let a = annulus(65, 32.0, 8.0, 14.0);
        let (cy, cx) = myocardium_centroid(a.view()).unwrap();
        assert!((cy - 32.0).abs() <= 0.5 && (cx - 32.0).abs() <= 0.5);
        let mut m = Array2::zeros((32, 32));
        m[[10, 20]] = 1.0;
        assert_eq!(myocardium_centroid(m.view()).unwrap(), (10.0, 20.0));
        let mut m = Array2::zeros((32, 32));
        m[[0, 0]] = 1.0;
        m[[0, 2]] = 1.0;
        assert_eq!(myocardium_centroid(m.view()).unwrap(), (0.0, 1.0));
        assert!(myocardium_centroid(Array2::zeros((4, 4)).view()).is_err());
    }

    fn field(mask: &Array2<f32>, f: impl Fn(f64, f64) -> [f64; 3]) -> Array3<f32> {
        let (h, w) = mask.dim();
        let (cy, cx) = myocardium_centroid(mask.view()).unwrap();
        let mut p = Array3::zeros((3, h, w));
        for y in 0..h {
            for x in 0..w {
                let v = f(x as f64 - cx, y as f64 - cy);
                for d in 0..3 {
                    p[[d, y, x]] = v[d] as f32;
                }
            }
        }
        p
    }

    #[test]
    fn pure_radial_field() {
        let m = annulus(64, 31.3, 7.0, 13.0);
        let a = 0.3;
        let p = field(&m, |dx, dy| {
            let r = dx.hypot(dy);
            [a * dx / r, a * dy / r, 0.0]
        });
        let (l, r, c) = decompose_velocity(p.view(), m.view(), [1.0; 3], [1.0, 1.0]).unwrap();
        assert!((r - a).abs() < 1e-6);
        assert!(c.abs() < 1e-6 && l == 0.0);
    }

    #[test]
    fn rigid_rotation_gives_circumferential_speed() {
        let m = annulus(64, 32.0, 7.0, 13.0);
        let omega = 0.02;
        let p = field(&m, |dx, dy| [-omega * dy, omega * dx, 0.0]);
        let (_, r, c) = decompose_velocity(p.view(), m.view(), [1.0; 3], [1.0, 1.0]).unwrap();
        // Brute-force mean radius over the mask pixels.
        let (cy, cx) = myocardium_centroid(m.view()).unwrap();
        let (mut sum, mut n) = (0.0, 0.0);
        for ((y, x), &v) in m.indexed_iter() {
            if v > 0.0 {
                sum += (x as f64 - cx).hypot(y as f64 - cy);
                n += 1.0;
            }
        }
        assert!(r.abs() < 1e-6);
        assert!((c - omega * sum / n).abs() < 1e-6);
    }

    #[test]
    fn uniform_through_plane() {
        let m = annulus(64, 30.0, 5.0, 12.0);
        let p = field(&m, |_, _| [0.0, 0.0, 0.25]);
        let (l, _, _) = decompose_velocity(p.view(), m.view(), [1.0, 1.0, 2.0], [1.0, 1.0]).unwrap();
        assert!((l - 0.5).abs() < 1e-12);
    }

    #[test]
    fn single_pixel_mask_is_degenerate_in_plane() {
        let mut m = Array2::zeros((32, 32));
        m[[5, 5]] = 1.0;
        let p = Array3::zeros((3, 32, 32));
        assert!(matches!(
            decompose_velocity(p.view(), m.view(), [1.0; 3], [1.0, 1.0]),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn rotation_by_quarter_turn_is_invariant() {
        let m = annulus(48, 23.5, 6.0, 12.0);
        let p = field(&m, |dx, dy| [0.1 * dx - 0.05 * dy + 0.02, 0.07 * dy + 0.03 * dx, 0.1]);
        let (_, r0, c0) = decompose_velocity(p.view(), m.view(), [1.0; 3], [1.0, 1.0]).unwrap();
        // Rotate the grid: new(y, x) = old(x, n-1-y).
        let n = 48;
        let m2 = Array2::from_shape_fn((n, n), |(y, x)| m[[x, n - 1 - y]]);
        let mut p2 = Array3::zeros((3, n, n));
        for y in 0..n {
            for x in 0..n {
                let (vx, vy) = (p[[0, x, n - 1 - y]], p[[1, x, n - 1 - y]]);
                // Old displacement (dx, dy) becomes (dy, -dx) under this map.
                p2[[0, y, x]] = vy;
                p2[[1, y, x]] = -vx;
                p2[[2, y, x]] = p[[2, x, n - 1 - y]];
            }
        }
        let (_, r1, c1) = decompose_velocity(p2.view(), m2.view(), [1.0; 3], [1.0, 1.0]).unwrap();
        assert!((r0 - r1).abs() < 1e-6, "{r0} {r1}");
        assert!((c0 - c1).abs() < 1e-6, "{c0} {c1}");
    }

    #[test]
    fn longitudinal_is_independent_of_centroid() {
        let a = annulus(64, 25.0, 4.0, 9.0);
        let b = annulus(64, 38.0, 4.0, 9.0);
        let p = field(&a, |_, _| [0.0, 0.0, -0.4]);
        let la = decompose_velocity(p.view(), a.view(), [1.0; 3], [1.0, 1.0]).unwrap().0;
        let lb = decompose_velocity(p.view(), b.view(), [1.0; 3], [1.0, 1.0]).unwrap().0;
        assert!((la - lb).abs() < 1e-12);
    }

    #[test]
    fn noise_free_phantom_reproduces_analytic_curves() {
        let cfg = PhantomConfig { noise_sigma: 0.0, ..Default::default() };
        let s = generate_phantom(&cfg).unwrap();
        let measured = velocity_curves(&s, &s.mask).unwrap();
        let truth = analytic_velocity_curves(&cfg).unwrap();
        assert_eq!(measured.len(), 50);
        for d in Direction::ALL {
            let r = pearson(measured.curve(d), truth.curve(d)).unwrap();
            assert!(r >= 0.999, "{} r={r}", d.name());
            let peak = truth.curve(d).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let dev = measured
                .curve(d)
                .iter()
                .zip(truth.curve(d))
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(dev <= 0.02 * peak, "{} dev {dev} peak {peak}", d.name());
        }
    }

    #[test]
    fn static_phantom_curves_are_flat() {
        let cfg = PhantomConfig {
            radial_amplitude: 0.0,
            twist_amplitude_rad: 0.0,
            longitudinal_amplitude: 0.0,
            ..Default::default()
        };
        let s = generate_phantom(&cfg).unwrap();
        let c = velocity_curves(&s, &s.mask).unwrap();
        for d in Direction::ALL {
            assert!(c.curve(d).iter().all(|v| v.abs() < 5.0 * cfg.noise_sigma / 10.0));
        }
    }

    #[test]
    fn empty_frame_marks_curves_invalid() {
        let cfg = PhantomConfig { frames: 6, ..Default::default() };
        let s = generate_phantom(&cfg).unwrap();
        let mut masks = s.mask.clone();
        masks.slice_mut(s![2, .., ..]).fill(0.0);
        let c = velocity_curves(&s, &masks).unwrap();
        assert!(!c.is_valid());
        assert_eq!(c.frame_errors[0].frame, 2);
        assert!(velocity_coefficient(&c, &c).is_err());
    }

    fn curves(l: Vec<f64>, r: Vec<f64>, c: Vec<f64>) -> VelocityCurves {
        VelocityCurves {
            longitudinal: l,
            radial: r,
            circumferential: c,
            ..Default::default()
        }
    }

    #[test]
    fn coefficient_examples() {
        let x: Vec<f64> = (0..10).map(|i| (i as f64 * 0.7).sin()).collect();
        let y: Vec<f64> = (0..10).map(|i| (i as f64 * 0.3).cos()).collect();
        let z: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let truth = curves(x.clone(), y.clone(), z.clone());
        assert!((velocity_coefficient(&truth, &truth).unwrap() - 1.0).abs() < 1e-12);
        let neg = |v: &Vec<f64>| v.iter().map(|a| -a).collect::<Vec<_>>();
        let flipped = curves(neg(&x), neg(&y), neg(&z));
        assert!((velocity_coefficient(&flipped, &truth).unwrap() + 1.0).abs() < 1e-12);
        // Affine rescaling per direction leaves the coefficient unchanged.
        let scaled = curves(
            x.iter().map(|v| 3.0 * v + 1.0).collect(),
            y.iter().map(|v| 0.5 * v).collect(),
            z.clone(),
        );
        assert!((velocity_coefficient(&scaled, &truth).unwrap() - 1.0).abs() < 1e-12);
        let flat = curves(vec![1.0; 10], y.clone(), z.clone());
        let err = velocity_coefficient(&flat, &truth).unwrap_err();
        assert!(err.to_string().contains("longitudinal"));
    }

    #[test]
    fn coefficient_is_mean_of_directions() {
        // y = 0.7 x_hat + sqrt(0.51) e_hat with e orthogonal to the centred x has r = 0.7.
        let x = vec![1.0, 2.0, 3.0, 4.0];
        let x_hat: Vec<f64> = x.iter().map(|v| (v - 2.5) / 5f64.sqrt()).collect();
        let e_hat = [0.5, -0.5, -0.5, 0.5];
        let y: Vec<f64> = x_hat
            .iter()
            .zip(e_hat)
            .map(|(a, b)| 0.7 * a + 0.51f64.sqrt() * b)
            .collect();
        let truth = curves(x.clone(), x.clone(), x.clone());
        let pred = curves(x.clone(), y.clone(), y);
        let r = direction_correlations(&pred, &truth).unwrap();
        assert!((r[1] - 0.7).abs() < 1e-12 && (r[2] - 0.7).abs() < 1e-12);
        assert!((velocity_coefficient(&pred, &truth).unwrap() - 0.8).abs() < 1e-12);
        assert_eq!(
            velocity_coefficient(&pred, &truth).unwrap(),
            velocity_coefficient(&truth, &pred).unwrap()
        );
    }
}
