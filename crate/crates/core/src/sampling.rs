//! Conditional synthesis samples: anchors at `tau` and `tau + 4`, target at
//! `tau + k` for `k` in 1..=3.

use ndarray::{s, Array3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::MvmSeries;

/// Frame gap between the two anchors.
pub const ANCHOR_GAP: usize = 4;
pub const CONDITION_SIZE: usize = 32;
pub const OFFSETS: [usize; 3] = [1, 2, 3];

/// Two constant channels: `tau / T` and `k / 4`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionMap {
    pub values: Array3<f32>,
}

impl ConditionMap {
    pub fn tau_fraction(&self) -> f32 {
        self.values[[0, 0, 0]]
    }

    pub fn k_fraction(&self) -> f32 {
        self.values[[1, 0, 0]]
    }
}

fn check_offset(k: usize) -> Result<()> {
    if !OFFSETS.contains(&k) {
        return Err(Error::Argument(format!("k must be 1, 2 or 3, got {k}")));
    }
    Ok(())
}

pub fn build_condition_map(tau: usize, k: usize, frames: usize) -> Result<ConditionMap> {
    check_offset(k)?;
    if tau + ANCHOR_GAP >= frames {
        return Err(Error::Argument(format!(
            "tau {tau} leaves anchor {} outside {frames} frames",
            tau + ANCHOR_GAP
        )));
    }
    let mut values = Array3::zeros((2, CONDITION_SIZE, CONDITION_SIZE));
    values.index_axis_mut(Axis(0), 0).fill((tau as f64 / frames as f64) as f32);
    values.index_axis_mut(Axis(0), 1).fill((k as f64 / ANCHOR_GAP as f64) as f32);
    Ok(ConditionMap { values })
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SeriesKey {
    pub subject_id: String,
    pub slice_id: String,
}

impl SeriesKey {
    pub fn of(series: &MvmSeries) -> Self {
        Self {
            subject_id: series.subject_id.clone(),
            slice_id: series.slice_id.clone(),
        }
    }
}

impl std::fmt::Display for SeriesKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.subject_id, self.slice_id)
    }
}

/// One training or evaluation example. `phase_in` is direction-major:
/// channel `2 * d + a` holds direction `d` of anchor `a`.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthesisSample {
    pub mag_in: Array3<f32>,
    pub phase_in: Array3<f32>,
    pub mask_in: Array3<f32>,
    pub mag_target: Array3<f32>,
    pub phase_target: Array3<f32>,
    pub mask_target: Array3<f32>,
    pub condition: ConditionMap,
    pub tau: usize,
    pub k: usize,
    pub series_ref: SeriesKey,
}

impl SynthesisSample {
    pub fn height(&self) -> usize {
        self.mag_in.dim().1
    }

    pub fn width(&self) -> usize {
        self.mag_in.dim().2
    }

    pub fn target_frame(&self) -> usize {
        self.tau + self.k
    }
}

/// Lightweight handle that defers copying frames until the sample is needed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SampleKey {
    pub series: usize,
    pub tau: usize,
    pub k: usize,
}

pub fn build_sample(series: &MvmSeries, tau: usize, k: usize) -> Result<SynthesisSample> {
    let t = series.frames();
    let condition = build_condition_map(tau, k, t)?;
    let (h, w) = (series.height(), series.width());
    let (a, b, tgt) = (tau, tau + ANCHOR_GAP, tau + k);

    let pair = |arr: &Array3<f32>| {
        let mut out = Array3::zeros((2, h, w));
        out.index_axis_mut(Axis(0), 0).assign(&arr.index_axis(Axis(0), a));
        out.index_axis_mut(Axis(0), 1).assign(&arr.index_axis(Axis(0), b));
        out
    };
    let mut phase_in = Array3::zeros((6, h, w));
    for d in 0..3 {
        phase_in
            .index_axis_mut(Axis(0), 2 * d)
            .assign(&series.phase.slice(s![a, d, .., ..]));
        phase_in
            .index_axis_mut(Axis(0), 2 * d + 1)
            .assign(&series.phase.slice(s![b, d, .., ..]));
    }
    Ok(SynthesisSample {
        mag_in: pair(&series.magnitude),
        phase_in,
        mask_in: pair(&series.mask),
        mag_target: series.magnitude.slice(s![tgt..tgt + 1, .., ..]).to_owned(),
        phase_target: series.phase.index_axis(Axis(0), tgt).to_owned(),
        mask_target: series.mask.slice(s![tgt..tgt + 1, .., ..]).to_owned(),
        condition,
        tau,
        k,
        series_ref: SeriesKey::of(series),
    })
}

/// All `(tau, k)` pairs in order: `tau` ascending, then `k`.
pub fn sample_keys(series_index: usize, frames: usize) -> Vec<SampleKey> {
    if frames <= ANCHOR_GAP {
        return Vec::new();
    }
    (0..frames - ANCHOR_GAP)
        .flat_map(|tau| OFFSETS.iter().map(move |&k| SampleKey { series: series_index, tau, k }))
        .collect()
}

pub fn enumerate_samples(series: &MvmSeries) -> Vec<SynthesisSample> {
    if series.frames() <= ANCHOR_GAP {
        log::warn!(
            "series {} has {} frames; need at least {} for a sample",
            SeriesKey::of(series),
            series.frames(),
            ANCHOR_GAP + 1
        );
        return Vec::new();
    }
    sample_keys(0, series.frames())
        .into_iter()
        .map(|key| build_sample(series, key.tau, key.k).expect("keys are in range"))
        .collect()
}
