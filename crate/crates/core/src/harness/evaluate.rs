use ndarray::{s, Array2, Array3, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::evaluation_windows;
use crate::baselines::{baseline_synthesize, BaselineMethod, HSConfig};
use crate::error::Result;
use crate::metrics::{dice_score, mae, psnr, ssim, MetricReport, ModalityMetrics, SampleMetrics, SeriesVelocity};
use crate::network::{Network, Prediction};
use crate::sampling::{build_sample, SeriesKey, SynthesisSample};
use crate::series::MvmSeries;
use crate::velocity::{velocity_coefficient, velocity_curves, VelocityCurves};

pub const DATA_RANGE: f64 = 1.0;
pub const MASK_THRESHOLD: f32 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub hs: HSConfig,
    /// Score the model's velocity curves on ground-truth masks instead of its own.
    pub gt_masks_for_velocity: bool,
    pub batch_size: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            hs: HSConfig::default(),
            gt_masks_for_velocity: false,
            batch_size: 8,
        }
    }
}

#[derive(Clone, Copy)]
pub enum Method<'a> {
    Baseline(BaselineMethod),
    Model(&'a Network),
}

impl Method<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Baseline(b) => b.name(),
            Method::Model(_) => "model",
        }
    }
}

fn modality(pred: ArrayView2<'_, f32>, target: ArrayView2<'_, f32>) -> Result<ModalityMetrics> {
    Ok(ModalityMetrics {
        mae: mae(&pred, &target)?,
        psnr: psnr(&pred, &target, DATA_RANGE)?,
        ssim: ssim(pred, target, DATA_RANGE)?,
    })
}

/// Metrics for one prediction; phase values are the mean over the three directions.
pub fn score_sample(sample: &SynthesisSample, pred: &Prediction, with_dice: bool) -> Result<SampleMetrics> {
    let magnitude = modality(pred.mag.index_axis(Axis(0), 0), sample.mag_target.index_axis(Axis(0), 0))?;
    let mut phase = ModalityMetrics::default();
    for d in 0..3 {
        let m = modality(pred.phase.index_axis(Axis(0), d), sample.phase_target.index_axis(Axis(0), d))?;
        phase.mae += m.mae / 3.0;
        phase.psnr += m.psnr / 3.0;
        phase.ssim += m.ssim / 3.0;
    }
    let dice = if with_dice {
        Some(dice_score(&pred.mask_prob, &sample.mask_target)?)
    } else {
        None
    };
    Ok(SampleMetrics {
        series: sample.series_ref.to_string(),
        tau: sample.tau,
        k: sample.k,
        magnitude,
        phase,
        dice,
    })
}

pub fn binarize(prob: &Array3<f32>) -> Array3<f32> {
    prob.mapv(|p| (p > MASK_THRESHOLD) as u8 as f32)
}

/// Samples of the tiling windows `tau = 0, 4, 8, ...` for one series.
pub fn window_samples(series: &MvmSeries) -> Result<Vec<SynthesisSample>> {
    let mut out = Vec::new();
    for tau in evaluation_windows(series.frames()) {
        for k in 1..=3 {
            out.push(build_sample(series, tau, k)?);
        }
    }
    Ok(out)
}

/// Predictions for `samples`. Baselines return the ground-truth mask.
pub fn predict_samples(method: Method<'_>, samples: &[SynthesisSample], opts: &EvalOptions) -> Result<Vec<Prediction>> {
    match method {
        Method::Baseline(b) => samples
            .par_iter()
            .map(|s| {
                let (mag, phase) = baseline_synthesize(s, b, &opts.hs)?;
                Ok(Prediction {
                    mag,
                    phase,
                    mask_prob: s.mask_target.clone(),
                })
            })
            .collect(),
        Method::Model(net) => {
            let chunks: Vec<&[SynthesisSample]> = samples.chunks(opts.batch_size.max(1)).collect();
            let parts = chunks
                .par_iter()
                .map(|c| net.predict(&c.iter().collect::<Vec<_>>(), c.len()))
                .collect::<Result<Vec<_>>>()?;
            Ok(parts.into_iter().flatten().collect())
        }
    }
}

/// Ground-truth series with every synthesised frame replaced by its prediction.
/// Anchor frames and frames beyond the last window stay ground truth.
pub fn reconstruct_series(series: &MvmSeries, samples: &[SynthesisSample], preds: &[Prediction], predicted_masks: bool) -> MvmSeries {
    let mut out = series.clone();
    for (s, p) in samples.iter().zip(preds) {
        let t = s.target_frame();
        out.magnitude.index_axis_mut(Axis(0), t).assign(&p.mag.index_axis(Axis(0), 0));
        out.phase.slice_mut(s![t, .., .., ..]).assign(&p.phase);
        if predicted_masks {
            out.mask.index_axis_mut(Axis(0), t).assign(&binarize(&p.mask_prob).index_axis(Axis(0), 0));
        }
    }
    out
}

/// Per-series evaluation artefacts, kept for figures.
#[derive(Clone, Debug)]
pub struct SeriesEvaluation {
    pub samples: Vec<SynthesisSample>,
    pub predictions: Vec<Prediction>,
    pub metrics: Vec<SampleMetrics>,
    pub reconstructed: MvmSeries,
    pub predicted_curves: VelocityCurves,
    pub true_curves: VelocityCurves,
    pub velocity_coefficient: Result<f64, String>,
}

pub fn evaluate_series(method: Method<'_>, series: &MvmSeries, opts: &EvalOptions) -> Result<SeriesEvaluation> {
    let samples = window_samples(series)?;
    let predictions = predict_samples(method, &samples, opts)?;
    let is_model = matches!(method, Method::Model(_));
    let metrics = samples
        .iter()
        .zip(&predictions)
        .map(|(s, p)| score_sample(s, p, is_model))
        .collect::<Result<Vec<_>>>()?;
    let use_pred_masks = is_model && !opts.gt_masks_for_velocity;
    let reconstructed = reconstruct_series(series, &samples, &predictions, use_pred_masks);
    let predicted_curves = velocity_curves(&reconstructed, &reconstructed.mask)?;
    let true_curves = velocity_curves(series, &series.mask)?;
    let velocity_coefficient = velocity_coefficient(&predicted_curves, &true_curves).map_err(|e| e.to_string());
    Ok(SeriesEvaluation {
        samples,
        predictions,
        metrics,
        reconstructed,
        predicted_curves,
        true_curves,
        velocity_coefficient,
    })
}

/// Scores one method over all test series. Failures are recorded, not fatal.
pub fn evaluate_method(method: Method<'_>, test: &[MvmSeries], opts: &EvalOptions) -> MetricReport {
    let mut samples = Vec::new();
    let mut velocity = Vec::new();
    let mut failures = Vec::new();
    for series in test {
        let key = SeriesKey::of(series).to_string();
        match evaluate_series(method, series, opts) {
            Ok(ev) => {
                samples.extend(ev.metrics);
                match ev.velocity_coefficient {
                    Ok(c) => velocity.push(SeriesVelocity {
                        series: key,
                        coefficient: c,
                    }),
                    Err(e) => failures.push(format!("{key}: velocity: {e}")),
                }
            }
            Err(e) => failures.push(format!("{key}: {e}")),
        }
    }
    MetricReport::new(method.name(), samples, velocity, failures)
}

/// Pixels where two masks disagree after thresholding, and their count.
pub fn mask_difference(a: ArrayView2<'_, f32>, b: ArrayView2<'_, f32>) -> (Array2<bool>, usize) {
    let diff = ndarray::Zip::from(a).and(b).map_collect(|&x, &y| (x > MASK_THRESHOLD) != (y > MASK_THRESHOLD));
    let n = diff.iter().filter(|&&d| d).count();
    (diff, n)
}
