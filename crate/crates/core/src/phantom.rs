//! Analytic contracting and twisting annulus phantom.
//!
//! Radii scale by `s(t) = 1 - a sin(2 pi t / T)` and the annulus rotates by
//! `theta(t) = phi sin(2 pi t / T)`, so a material point at rest position `p0`
//! sits at `s R(theta) p0` (relative to the centre). Its in-plane velocity at the
//! current position `p` is `s'/s * p + theta' * J p`, where `J` turns `(x, y)`
//! into `(-y, x)`. Through-plane velocity `L sin(2 pi t / T)` is uniform on the
//! annulus. Time is counted in frame intervals.

use std::f64::consts::PI;
use std::path::Path;

use ndarray::{Array3, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{save_series, DatasetSplit, MvmSeries, SeriesRef};
use crate::velocity::VelocityCurves;

pub const MYOCARDIUM_INTENSITY: f32 = 0.8;
pub const BLOOD_POOL_INTENSITY: f32 = 0.4;
const MARGIN_PX: f64 = 4.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomConfig {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    /// `(cy, cx)` in pixels.
    pub center: [f64; 2],
    pub endo_radius_mm: f64,
    pub epi_radius_mm: f64,
    pub radial_amplitude: f64,
    pub twist_amplitude_rad: f64,
    /// Peak through-plane velocity, mm per frame interval.
    pub longitudinal_amplitude: f64,
    pub noise_sigma: f64,
    pub venc: [f64; 3],
    pub pixel_spacing_mm: [f64; 2],
    pub seed: u64,
    pub subject_id: Option<String>,
    pub slice_id: Option<String>,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self {
            frames: 50,
            height: 64,
            width: 64,
            center: [32.0, 32.0],
            endo_radius_mm: 13.0,
            epi_radius_mm: 22.0,
            radial_amplitude: 0.2,
            twist_amplitude_rad: 0.1,
            longitudinal_amplitude: 0.5,
            noise_sigma: 0.02,
            venc: [1.0, 1.0, 1.0],
            pixel_spacing_mm: [1.7, 1.7],
            seed: 0,
            subject_id: None,
            slice_id: None,
        }
    }
}

impl PhantomConfig {
    pub fn validate(&self) -> Result<()> {
        let arg = |m: String| Err(Error::Argument(m));
        if self.frames == 0 {
            return arg("frames must be positive".into());
        }
        if self.height < crate::series::MIN_SIDE || self.width < crate::series::MIN_SIDE {
            return arg(format!("image {}x{} below 32x32", self.height, self.width));
        }
        if !(self.endo_radius_mm > 0.0 && self.endo_radius_mm < self.epi_radius_mm) {
            return arg(format!(
                "need 0 < endo_radius_mm ({}) < epi_radius_mm ({})",
                self.endo_radius_mm, self.epi_radius_mm
            ));
        }
        if !(0.0..0.5).contains(&self.radial_amplitude) {
            return arg(format!("radial_amplitude {} outside [0, 0.5)", self.radial_amplitude));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return arg(format!("noise_sigma {} must be >= 0", self.noise_sigma));
        }
        if !self.venc.iter().all(|v| *v > 0.0) || !self.pixel_spacing_mm.iter().all(|v| *v > 0.0) {
            return arg("venc and pixel spacing must be positive".into());
        }
        if !(self.twist_amplitude_rad.is_finite() && self.longitudinal_amplitude.is_finite()) {
            return arg("motion amplitudes must be finite".into());
        }
        let min_spacing = self.pixel_spacing_mm[0].min(self.pixel_spacing_mm[1]);
        let reach = self.epi_radius_mm * (1.0 + self.radial_amplitude) / min_spacing + MARGIN_PX;
        let [cy, cx] = self.center;
        let room = cy
            .min(cx)
            .min(self.height as f64 - 1.0 - cy)
            .min(self.width as f64 - 1.0 - cx);
        if reach > room {
            return arg(format!(
                "annulus reach {reach:.1} px (with {MARGIN_PX} px margin) exceeds room {room:.1} px"
            ));
        }
        Ok(())
    }

    fn omega(&self) -> f64 {
        2.0 * PI / self.frames as f64
    }

    /// Radius scale `s(t)`.
    pub fn scale(&self, t: f64) -> f64 {
        1.0 - self.radial_amplitude * (self.omega() * t).sin()
    }

    /// `ds/dt`.
    pub fn scale_rate(&self, t: f64) -> f64 {
        -self.radial_amplitude * self.omega() * (self.omega() * t).cos()
    }

    /// `dtheta/dt`.
    pub fn twist_rate(&self, t: f64) -> f64 {
        self.twist_amplitude_rad * self.omega() * (self.omega() * t).cos()
    }

    pub fn longitudinal_velocity(&self, t: f64) -> f64 {
        self.longitudinal_amplitude * (self.omega() * t).sin()
    }

    /// Area-weighted mean radius of the rest-state annulus, mm.
    pub fn rest_mean_radius_mm(&self) -> f64 {
        let (a, b) = (self.endo_radius_mm, self.epi_radius_mm);
        2.0 / 3.0 * (b.powi(3) - a.powi(3)) / (b * b - a * a)
    }

    /// In-plane `(vx, vy)` at offset `(dx, dy)` mm from the centre, frame `t`.
    pub fn in_plane_velocity(&self, t: f64, dx: f64, dy: f64) -> (f64, f64) {
        let radial = self.scale_rate(t) / self.scale(t);
        let twist = self.twist_rate(t);
        (radial * dx - twist * dy, radial * dy + twist * dx)
    }
}

/// Renders the phantom series. Deterministic in `config.seed`.
pub fn generate_phantom(config: &PhantomConfig) -> Result<MvmSeries> {
    config.validate()?;
    let (t_len, h, w) = (config.frames, config.height, config.width);
    let [sy, sx] = config.pixel_spacing_mm;
    let [cy, cx] = config.center;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noise = Normal::new(0.0, config.noise_sigma.max(0.0))
        .map_err(|e| Error::Argument(e.to_string()))?;
    let draw = |rng: &mut ChaCha8Rng| -> f64 {
        if config.noise_sigma > 0.0 {
            noise.sample(rng)
        } else {
            0.0
        }
    };

    let mut magnitude = Array3::zeros((t_len, h, w));
    let mut phase = Array4::zeros((t_len, 3, h, w));
    let mut mask = Array3::zeros((t_len, h, w));
    for f in 0..t_len {
        let t = f as f64;
        let s = config.scale(t);
        let (inner, outer) = (config.endo_radius_mm * s, config.epi_radius_mm * s);
        let vz = config.longitudinal_velocity(t);
        for y in 0..h {
            for x in 0..w {
                let dx = (x as f64 - cx) * sx;
                let dy = (y as f64 - cy) * sy;
                let r = dx.hypot(dy);
                let in_wall = r >= inner && r <= outer;
                let bg = draw(&mut rng).abs().min(1.0) as f32;
                magnitude[[f, y, x]] = if in_wall {
                    MYOCARDIUM_INTENSITY
                } else if r < inner {
                    BLOOD_POOL_INTENSITY
                } else {
                    bg
                };
                let v = if in_wall {
                    mask[[f, y, x]] = 1.0;
                    let (vx, vy) = config.in_plane_velocity(t, dx, dy);
                    [vx, vy, vz]
                } else {
                    [0.0; 3]
                };
                for d in 0..3 {
                    let clean = (v[d] / config.venc[d]).clamp(-1.0, 1.0);
                    phase[[f, d, y, x]] = (clean + draw(&mut rng)).clamp(-1.0, 1.0) as f32;
                }
            }
        }
    }
    let series = MvmSeries {
        subject_id: config
            .subject_id
            .clone()
            .unwrap_or_else(|| format!("phantom-{}", config.seed)),
        slice_id: config.slice_id.clone().unwrap_or_else(|| "mid".into()),
        magnitude,
        phase,
        mask,
        pixel_spacing_mm: config.pixel_spacing_mm,
        venc: config.venc,
    };
    series.validate()?;
    Ok(series)
}

/// Closed-form per-frame myocardial mean velocities of the motion model,
/// averaged over the continuous annulus.
pub fn analytic_velocity_curves(config: &PhantomConfig) -> Result<VelocityCurves> {
    config.validate()?;
    let rbar = config.rest_mean_radius_mm();
    let mut curves = VelocityCurves::with_len(config.frames);
    for f in 0..config.frames {
        let t = f as f64;
        curves.radial[f] = config.scale_rate(t) * rbar;
        curves.circumferential[f] = config.twist_rate(t) * config.scale(t) * rbar;
        curves.longitudinal[f] = config.longitudinal_velocity(t);
    }
    Ok(curves)
}

/// A population of phantom subjects with per-subject anatomy and motion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CohortConfig {
    pub base: PhantomConfig,
    pub train_subjects: usize,
    pub val_subjects: usize,
    pub test_subjects: usize,
    /// Slices per subject; all slices of a subject land in the same split.
    pub slices_per_subject: usize,
    pub seed: u64,
    /// Randomise centre, radii and motion amplitudes per subject.
    pub vary_subjects: bool,
}

impl Default for CohortConfig {
    fn default() -> Self {
        Self {
            base: PhantomConfig::default(),
            train_subjects: 20,
            val_subjects: 5,
            test_subjects: 5,
            slices_per_subject: 1,
            seed: 2021,
            vary_subjects: true,
        }
    }
}

impl CohortConfig {
    pub fn subjects(&self) -> usize {
        self.train_subjects + self.val_subjects + self.test_subjects
    }

    /// Per-series configs, ordered subject-major.
    pub fn series_configs(&self) -> Vec<PhantomConfig> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut out = Vec::new();
        for subject in 0..self.subjects() {
            let mut anatomy = self.base.clone();
            if self.vary_subjects {
                anatomy.center = [
                    self.base.center[0] + rng.random_range(-3.0..=3.0),
                    self.base.center[1] + rng.random_range(-3.0..=3.0),
                ];
                anatomy.epi_radius_mm = rng.random_range(19.0..=24.0);
                anatomy.endo_radius_mm = anatomy.epi_radius_mm - rng.random_range(7.0..=10.0);
                anatomy.radial_amplitude = rng.random_range(0.12..=0.22);
                let twist: f64 = rng.random_range(0.05..=0.15);
                anatomy.twist_amplitude_rad = if rng.random_bool(0.5) { twist } else { -twist };
                anatomy.longitudinal_amplitude = rng.random_range(0.3..=0.6);
            }
            for slice in 0..self.slices_per_subject {
                let mut cfg = anatomy.clone();
                if slice > 0 && self.vary_subjects {
                    // Slices towards the apex are smaller.
                    let shrink = 1.0 - 0.08 * slice as f64;
                    cfg.epi_radius_mm *= shrink;
                    cfg.endo_radius_mm *= shrink;
                }
                cfg.seed = rng.random();
                cfg.subject_id = Some(format!("subject-{subject:03}"));
                cfg.slice_id = Some(format!("slice-{slice}"));
                out.push(cfg);
            }
        }
        out
    }

    /// Generates all series under `dir` and writes `dir/split.json`.
    pub fn write(&self, dir: &Path) -> Result<DatasetSplit> {
        let mut refs: Vec<SeriesRef> = Vec::new();
        for cfg in self.series_configs() {
            let series = generate_phantom(&cfg)?;
            let rel = format!("{}_{}", series.subject_id, series.slice_id);
            save_series(&series, &dir.join(&rel))?;
            refs.push(SeriesRef {
                subject_id: series.subject_id,
                path: rel.into(),
            });
        }
        let per = self.slices_per_subject;
        let (a, b) = (self.train_subjects * per, (self.train_subjects + self.val_subjects) * per);
        let split = DatasetSplit::new(refs[..a].to_vec(), refs[a..b].to_vec(), refs[b..].to_vec())?;
        split.save(&dir.join("split.json"))?;
        Ok(split)
    }
}
