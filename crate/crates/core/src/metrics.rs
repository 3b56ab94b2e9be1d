//! Evaluation metrics: MAE, PSNR, SSIM, Dice and Pearson correlation, plus the
//! per-method report they are aggregated into.

use ndarray::{Array2, ArrayBase, ArrayView2, Data, Dimension};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn check_shapes<S1, S2, D>(a: &ArrayBase<S1, D>, b: &ArrayBase<S2, D>) -> Result<()>
where
    S1: Data<Elem = f32>,
    S2: Data<Elem = f32>,
    D: Dimension,
{
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    if a.is_empty() {
        return Err(Error::Shape("empty arrays".into()));
    }
    Ok(())
}

pub fn mae<S1, S2, D>(pred: &ArrayBase<S1, D>, target: &ArrayBase<S2, D>) -> Result<f64>
where
    S1: Data<Elem = f32>,
    S2: Data<Elem = f32>,
    D: Dimension,
{
    check_shapes(pred, target)?;
    let sum: f64 = pred
        .iter()
        .zip(target.iter())
        .map(|(&a, &b)| (a as f64 - b as f64).abs())
        .sum();
    Ok(sum / pred.len() as f64)
}

pub fn mse<S1, S2, D>(pred: &ArrayBase<S1, D>, target: &ArrayBase<S2, D>) -> Result<f64>
where
    S1: Data<Elem = f32>,
    S2: Data<Elem = f32>,
    D: Dimension,
{
    check_shapes(pred, target)?;
    let sum: f64 = pred
        .iter()
        .zip(target.iter())
        .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
        .sum();
    Ok(sum / pred.len() as f64)
}

/// PSNR from a mean squared error; `f64::INFINITY` when `mse == 0`.
pub fn psnr_from_mse(mse: f64, data_range: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (data_range * data_range / mse).log10()
    }
}

/// Peak signal-to-noise ratio in dB; identical inputs give `f64::INFINITY`.
pub fn psnr<S1, S2, D>(pred: &ArrayBase<S1, D>, target: &ArrayBase<S2, D>, data_range: f64) -> Result<f64>
where
    S1: Data<Elem = f32>,
    S2: Data<Elem = f32>,
    D: Dimension,
{
    Ok(psnr_from_mse(mse(pred, target)?, data_range))
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        *v = (-(i as f64 - c).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian filter over every fully contained window position.
fn filter_valid(img: &Array2<f64>, k: &[f64; SSIM_WINDOW]) -> Array2<f64> {
    let (h, w) = img.dim();
    let (oh, ow) = (h + 1 - SSIM_WINDOW, w + 1 - SSIM_WINDOW);
    let mut rows = Array2::<f64>::zeros((h, ow));
    for y in 0..h {
        for x in 0..ow {
            rows[[y, x]] = (0..SSIM_WINDOW).map(|i| k[i] * img[[y, x + i]]).sum::<f64>();
        }
    }
    Array2::from_shape_fn((oh, ow), |(y, x)| {
        (0..SSIM_WINDOW).map(|i| k[i] * rows[[y + i, x]]).sum()
    })
}

/// Mean structural similarity over all 11x11 Gaussian windows (sigma 1.5).
pub fn ssim(pred: ArrayView2<'_, f32>, target: ArrayView2<'_, f32>, data_range: f64) -> Result<f64> {
    check_shapes(&pred, &target)?;
    let (h, w) = pred.dim();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Shape(format!(
            "image {h}x{w} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"
        )));
    }
    let k = gaussian_kernel();
    let a = pred.mapv(|v| v as f64);
    let b = target.mapv(|v| v as f64);
    let mu_a = filter_valid(&a, &k);
    let mu_b = filter_valid(&b, &k);
    let aa = filter_valid(&(&a * &a), &k);
    let bb = filter_valid(&(&b * &b), &k);
    let ab = filter_valid(&(&a * &b), &k);
    let c1 = (SSIM_K1 * data_range).powi(2);
    let c2 = (SSIM_K2 * data_range).powi(2);
    let mut total = 0.0;
    for (((&ma, &mb), (&saa, &sbb)), &sab) in mu_a
        .iter()
        .zip(mu_b.iter())
        .zip(aa.iter().zip(bb.iter()))
        .zip(ab.iter())
    {
        let va = saa - ma * ma;
        let vb = sbb - mb * mb;
        let cov = sab - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
            / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / mu_a.len() as f64)
}

/// `2|A n B| / (|A| + |B|)` for masks thresholded at 0.5. Two empty masks score 1.
pub fn dice_score<S1, S2, D>(a: &ArrayBase<S1, D>, b: &ArrayBase<S2, D>) -> Result<f64>
where
    S1: Data<Elem = f32>,
    S2: Data<Elem = f32>,
    D: Dimension,
{
    check_shapes(a, b)?;
    let (mut inter, mut na, mut nb) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.iter().zip(b.iter()) {
        let (x, y) = (x > 0.5, y > 0.5);
        na += x as usize;
        nb += y as usize;
        inter += (x && y) as usize;
    }
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (na + nb) as f64)
}

/// Sample Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("lengths {} vs {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::Argument("pearson needs at least two points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("constant series has no correlation".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Serialises non-finite values (PSNR of identical images) as strings.
mod lenient_f64 {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(match Repr::deserialize(d)? {
            Repr::Num(v) => v,
            Repr::Text(t) => match t.as_str() {
                "inf" => f64::INFINITY,
                "-inf" => f64::NEG_INFINITY,
                _ => f64::NAN,
            },
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModalityMetrics {
    pub mae: f64,
    #[serde(with = "lenient_f64")]
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub series: String,
    pub tau: usize,
    pub k: usize,
    pub magnitude: ModalityMetrics,
    pub phase: ModalityMetrics,
    pub dice: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    #[serde(with = "lenient_f64")]
    pub mean: f64,
    #[serde(with = "lenient_f64")]
    pub sd: f64,
    pub n: usize,
}

impl Summary {
    /// Mean and sample standard deviation (0 for a single value).
    pub fn of(values: &[f64]) -> Summary {
        let n = values.len();
        if n == 0 {
            return Summary { mean: f64::NAN, sd: f64::NAN, n };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 && mean.is_finite() {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Summary { mean, sd, n }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModalitySummary {
    pub mae: Summary,
    pub psnr: Summary,
    pub ssim: Summary,
}

impl ModalitySummary {
    fn of<'a>(items: impl Iterator<Item = &'a ModalityMetrics> + Clone) -> Self {
        let col = |f: fn(&ModalityMetrics) -> f64| Summary::of(&items.clone().map(f).collect::<Vec<_>>());
        Self {
            mae: col(|m| m.mae),
            psnr: col(|m| m.psnr),
            ssim: col(|m| m.ssim),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesVelocity {
    pub series: String,
    pub coefficient: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub magnitude: ModalitySummary,
    pub phase: ModalitySummary,
    pub dice: Option<Summary>,
    pub velocity_coefficient: Option<Summary>,
}

/// Per-sample metrics of one method plus their aggregate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub method: String,
    pub samples: Vec<SampleMetrics>,
    pub velocity: Vec<SeriesVelocity>,
    /// Samples or series whose evaluation failed, with the reason.
    #[serde(default)]
    pub failures: Vec<String>,
    pub aggregate: AggregateMetrics,
}

impl MetricReport {
    pub fn new(
        method: impl Into<String>,
        samples: Vec<SampleMetrics>,
        velocity: Vec<SeriesVelocity>,
        failures: Vec<String>,
    ) -> Self {
        let aggregate = Self::aggregate_of(&samples, &velocity);
        Self {
            method: method.into(),
            samples,
            velocity,
            failures,
            aggregate,
        }
    }

    pub fn aggregate_of(samples: &[SampleMetrics], velocity: &[SeriesVelocity]) -> AggregateMetrics {
        let dice: Vec<f64> = samples.iter().filter_map(|s| s.dice).collect();
        let vel: Vec<f64> = velocity.iter().map(|v| v.coefficient).collect();
        AggregateMetrics {
            magnitude: ModalitySummary::of(samples.iter().map(|s| &s.magnitude)),
            phase: ModalitySummary::of(samples.iter().map(|s| &s.phase)),
            dice: (!dice.is_empty()).then(|| Summary::of(&dice)),
            velocity_coefficient: (!vel.is_empty()).then(|| Summary::of(&vel)),
        }
    }
}
