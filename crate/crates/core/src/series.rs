//! Cine velocity-mapping series: data model, validation, the on-disk archive
//! and spatial resampling.
//!
//! An archive is a directory holding `manifest.json` plus three raw
//! little-endian `f32` files (`magnitude.f32`, `phase.f32`, `mask.f32`), each
//! row-major with index order `[t, (dir,) y, x]`.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{s, Array3, Array4, ArrayView2, ArrayView3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::imaging::{resize_bilinear, resize_nearest};

pub const ARCHIVE_VERSION: &str = "1";
pub const MIN_SIDE: usize = 32;

const MANIFEST: &str = "manifest.json";
const MAGNITUDE_FILE: &str = "magnitude.f32";
const PHASE_FILE: &str = "phase.f32";
const MASK_FILE: &str = "mask.f32";

/// One slice's cine series.
///
/// Phase is stored normalised to `[-1, 1]`; physical velocity is `phase * venc`
/// per direction. Directions are ordered x (in-plane, columns), y (in-plane,
/// rows), z (through-plane).
#[derive(Clone, Debug, PartialEq)]
pub struct MvmSeries {
    pub subject_id: String,
    pub slice_id: String,
    /// `[T, H, W]`, values in `[0, 1]`.
    pub magnitude: Array3<f32>,
    /// `[T, 3, H, W]`, values in `[-1, 1]`.
    pub phase: Array4<f32>,
    /// `[T, H, W]`, values in `{0, 1}`.
    pub mask: Array3<f32>,
    /// Row (y) and column (x) spacing.
    pub pixel_spacing_mm: [f64; 2],
    /// Velocity represented by a phase value of 1, per direction.
    pub venc: [f64; 3],
}

impl MvmSeries {
    pub fn frames(&self) -> usize {
        self.magnitude.dim().0
    }

    pub fn height(&self) -> usize {
        self.magnitude.dim().1
    }

    pub fn width(&self) -> usize {
        self.magnitude.dim().2
    }

    pub fn magnitude_frame(&self, t: usize) -> ArrayView2<'_, f32> {
        self.magnitude.slice(s![t, .., ..])
    }

    pub fn phase_frame(&self, t: usize) -> ArrayView3<'_, f32> {
        self.phase.slice(s![t, .., .., ..])
    }

    pub fn mask_frame(&self, t: usize) -> ArrayView2<'_, f32> {
        self.mask.slice(s![t, .., ..])
    }

    /// Checks every structural and value invariant. Degenerate (empty-mask)
    /// frames are not an error; see [`MvmSeries::degenerate_frames`].
    pub fn validate(&self) -> Result<()> {
        let (t, h, w) = self.magnitude.dim();
        if t == 0 {
            return Err(Error::validation("magnitude", "series has no frames"));
        }
        if h < MIN_SIDE || w < MIN_SIDE {
            return Err(Error::validation(
                "magnitude",
                format!("spatial size {h}x{w} below {MIN_SIDE}x{MIN_SIDE}"),
            ));
        }
        if self.phase.dim() != (t, 3, h, w) {
            return Err(Error::validation(
                "phase",
                format!("shape {:?} != ({t}, 3, {h}, {w})", self.phase.dim()),
            ));
        }
        if self.mask.dim() != (t, h, w) {
            return Err(Error::validation(
                "mask",
                format!("shape {:?} != ({t}, {h}, {w})", self.mask.dim()),
            ));
        }
        if let Some(v) = self.magnitude.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::validation("magnitude", format!("value {v} outside [0, 1]")));
        }
        if let Some(v) = self.phase.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(Error::validation("phase", format!("value {v} outside [-1, 1]")));
        }
        if let Some(v) = self.mask.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::validation("mask", format!("non-binary value {v}")));
        }
        if !self.pixel_spacing_mm.iter().all(|s| s.is_finite() && *s > 0.0) {
            return Err(Error::validation(
                "pixel_spacing_mm",
                format!("{:?} must be positive", self.pixel_spacing_mm),
            ));
        }
        if !self.venc.iter().all(|s| s.is_finite() && *s > 0.0) {
            return Err(Error::validation("venc", format!("{:?} must be positive", self.venc)));
        }
        Ok(())
    }

    /// Frames whose mask has no foreground pixel.
    pub fn degenerate_frames(&self) -> Vec<usize> {
        (0..self.frames())
            .filter(|&t| self.mask_frame(t).iter().all(|&v| v == 0.0))
            .collect()
    }

    pub fn is_degenerate(&self) -> bool {
        !self.degenerate_frames().is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub file: String,
    pub shape: Vec<usize>,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayTable {
    pub magnitude: ArrayEntry,
    pub phase: ArrayEntry,
    pub mask: ArrayEntry,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub subject_id: String,
    pub slice_id: String,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub pixel_spacing_mm: [f64; 2],
    pub venc: [f64; 3],
    pub arrays: ArrayTable,
}

fn f32_bytes<'a>(values: impl Iterator<Item = &'a f32>) -> Vec<u8> {
    values.flat_map(|v| v.to_le_bytes()).collect()
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `series` as an archive directory, creating it if needed.
pub fn save_series(series: &MvmSeries, dir: &Path) -> Result<()> {
    series.validate()?;
    fs::create_dir_all(dir)?;
    let (t, h, w) = series.magnitude.dim();
    let write = |name: &str, shape: Vec<usize>, bytes: Vec<u8>| -> Result<ArrayEntry> {
        fs::write(dir.join(name), &bytes)?;
        Ok(ArrayEntry {
            file: name.to_string(),
            shape,
            sha256: sha256_hex(&bytes),
        })
    };
    // `iter()` on standard-layout arrays visits elements in row-major order.
    let arrays = ArrayTable {
        magnitude: write(MAGNITUDE_FILE, vec![t, h, w], f32_bytes(series.magnitude.iter()))?,
        phase: write(PHASE_FILE, vec![t, 3, h, w], f32_bytes(series.phase.iter()))?,
        mask: write(MASK_FILE, vec![t, h, w], f32_bytes(series.mask.iter()))?,
    };
    let manifest = Manifest {
        version: ARCHIVE_VERSION.to_string(),
        subject_id: series.subject_id.clone(),
        slice_id: series.slice_id.clone(),
        frames: t,
        height: h,
        width: w,
        pixel_spacing_mm: series.pixel_spacing_mm,
        venc: series.venc,
        arrays,
    };
    fs::write(dir.join(MANIFEST), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}

fn read_array(dir: &Path, entry: &ArrayEntry, expected: &[usize], name: &str) -> Result<Vec<f32>> {
    if entry.shape != expected {
        return Err(Error::Shape(format!(
            "{name}: manifest array shape {:?} disagrees with dims {expected:?}",
            entry.shape
        )));
    }
    let path = dir.join(&entry.file);
    if !path.is_file() {
        return Err(Error::MissingFile(path));
    }
    let bytes = fs::read(&path)?;
    let count: usize = expected.iter().product();
    if bytes.len() != count * 4 {
        return Err(Error::Shape(format!(
            "{name}: file holds {} bytes, manifest dims {expected:?} need {}",
            bytes.len(),
            count * 4
        )));
    }
    if sha256_hex(&bytes) != entry.sha256 {
        return Err(Error::Checksum(entry.file.clone()));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    if !path.is_file() {
        return Err(Error::MissingFile(path));
    }
    let raw: serde_json::Value = serde_json::from_slice(&fs::read(&path)?)?;
    let version = raw
        .get("version")
        .and_then(|v| v.as_str())
        .unwrap_or_default()
        .to_string();
    if version != ARCHIVE_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            expected: ARCHIVE_VERSION.to_string(),
        });
    }
    Ok(serde_json::from_value(raw)?)
}

/// Reads an archive written by [`save_series`].
pub fn load_series(dir: &Path) -> Result<MvmSeries> {
    let m = read_manifest(dir)?;
    let (t, h, w) = (m.frames, m.height, m.width);
    let magnitude = read_array(dir, &m.arrays.magnitude, &[t, h, w], "magnitude")?;
    let phase = read_array(dir, &m.arrays.phase, &[t, 3, h, w], "phase")?;
    let mask = read_array(dir, &m.arrays.mask, &[t, h, w], "mask")?;
    let shape_err = |e: ndarray::ShapeError| Error::Shape(e.to_string());
    let series = MvmSeries {
        subject_id: m.subject_id,
        slice_id: m.slice_id,
        magnitude: Array3::from_shape_vec((t, h, w), magnitude).map_err(shape_err)?,
        phase: Array4::from_shape_vec((t, 3, h, w), phase).map_err(shape_err)?,
        mask: Array3::from_shape_vec((t, h, w), mask).map_err(shape_err)?,
        pixel_spacing_mm: m.pixel_spacing_mm,
        venc: m.venc,
    };
    series.validate()?;
    Ok(series)
}

/// Upsamples every frame by an integer `factor`: bilinear for magnitude and
/// phase, nearest-neighbour for the mask. Pixel spacing is divided by `factor`.
pub fn resample_bilinear(series: &MvmSeries, factor: usize) -> Result<MvmSeries> {
    if factor == 0 {
        return Err(Error::Argument("resample factor must be >= 1".into()));
    }
    let (t, h, w) = series.magnitude.dim();
    let (oh, ow) = (h * factor, w * factor);
    let mut magnitude = Array3::zeros((t, oh, ow));
    let mut phase = Array4::zeros((t, 3, oh, ow));
    let mut mask = Array3::zeros((t, oh, ow));
    for f in 0..t {
        magnitude
            .slice_mut(s![f, .., ..])
            .assign(&resize_bilinear(series.magnitude_frame(f), oh, ow));
        mask.slice_mut(s![f, .., ..])
            .assign(&resize_nearest(series.mask_frame(f), oh, ow));
        for d in 0..3 {
            phase
                .slice_mut(s![f, d, .., ..])
                .assign(&resize_bilinear(series.phase.slice(s![f, d, .., ..]), oh, ow));
        }
    }
    Ok(MvmSeries {
        subject_id: series.subject_id.clone(),
        slice_id: series.slice_id.clone(),
        magnitude,
        phase,
        mask,
        pixel_spacing_mm: [
            series.pixel_spacing_mm[0] / factor as f64,
            series.pixel_spacing_mm[1] / factor as f64,
        ],
        venc: series.venc,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeriesRef {
    pub subject_id: String,
    pub path: PathBuf,
}

/// Train/validation/test partition, disjoint by subject.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<SeriesRef>,
    pub val: Vec<SeriesRef>,
    pub test: Vec<SeriesRef>,
}

impl DatasetSplit {
    pub fn new(train: Vec<SeriesRef>, val: Vec<SeriesRef>, test: Vec<SeriesRef>) -> Result<Self> {
        let split = Self { train, val, test };
        split.validate()?;
        Ok(split)
    }

    pub fn validate(&self) -> Result<()> {
        let subjects = |refs: &[SeriesRef]| -> HashSet<String> {
            refs.iter().map(|r| r.subject_id.clone()).collect()
        };
        let (tr, va, te) = (subjects(&self.train), subjects(&self.val), subjects(&self.test));
        for (a, b, name) in [(&tr, &va, "train/val"), (&tr, &te, "train/test"), (&va, &te, "val/test")] {
            if let Some(s) = a.intersection(b).next() {
                return Err(Error::validation(
                    "split",
                    format!("subject {s} appears in both {name}"),
                ));
            }
        }
        Ok(())
    }

    /// Reads `split.json`; relative series paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut split: DatasetSplit = serde_json::from_slice(&fs::read(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for r in split
            .train
            .iter_mut()
            .chain(split.val.iter_mut())
            .chain(split.test.iter_mut())
        {
            if r.path.is_relative() {
                r.path = base.join(&r.path);
            }
        }
        split.validate()?;
        Ok(split)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }
}

pub fn load_all(refs: &[SeriesRef]) -> Result<Vec<MvmSeries>> {
    refs.iter().map(|r| load_series(&r.path)).collect()
}
