//! C ABI over `mvmsynth`.
//!
//! Every fallible call returns an [`MvmsStatus`]; on failure the message is
//! available from [`mvms_last_error`] on the same thread. Handles are opaque
//! and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use mvmsynth::baselines::{horn_schunck_flow, HSConfig};
use mvmsynth::metrics::{dice_score, pearson, psnr, ssim};
use mvmsynth::network::{load_checkpoint, Network, NetworkConfig};
use mvmsynth::phantom::{generate_phantom, PhantomConfig};
use mvmsynth::sampling::build_sample;
use mvmsynth::series::{load_series, MvmSeries};
use mvmsynth::velocity::{velocity_coefficient, velocity_curves};
use mvmsynth::Error;
use ndarray::{ArrayView1, ArrayView2};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MvmsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Numeric = 4,
    Degenerate = 5,
    Io = 6,
    Format = 7,
    Panic = 8,
}

/// Opaque cine series.
pub struct MvmsSeries(MvmSeries);

/// Opaque synthesis network.
pub struct MvmsModel(Network);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> MvmsStatus {
    match e {
        Error::Validation { .. } | Error::Argument(_) => MvmsStatus::InvalidArgument,
        Error::Shape(_) => MvmsStatus::Shape,
        Error::Numeric(_) => MvmsStatus::Numeric,
        Error::Degenerate(_) => MvmsStatus::Degenerate,
        Error::Io(_) | Error::MissingFile(_) => MvmsStatus::Io,
        Error::UnsupportedVersion { .. }
        | Error::Checksum(_)
        | Error::CheckpointMismatch(_)
        | Error::Json(_)
        | Error::Image(_) => MvmsStatus::Format,
    }
}

struct Fail(MvmsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> MvmsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MvmsStatus::Ok,
        Ok(Err(Fail(s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            MvmsStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(MvmsStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(MvmsStatus::InvalidArgument, msg.into())
}

unsafe fn slice<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn slice_mut<'a, T>(p: *mut T, n: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, n))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn path<'a>(p: *const c_char) -> Result<&'a Path, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Path::new)
        .map_err(|_| invalid("path is not UTF-8"))
}

fn image<'a>(data: &'a [f32], h: usize, w: usize) -> Result<ArrayView2<'a, f32>, Fail> {
    ArrayView2::from_shape((h, w), data).map_err(|e| Fail(MvmsStatus::Shape, e.to_string()))
}

/// Message of the last failed call on this thread, or null. Valid until the next failing call.
#[no_mangle]
pub extern "C" fn mvms_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mvms_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Generates a default phantom series with the given size and seed. The
/// default annulus needs at least 64x64 pixels.
///
/// # Safety
/// `out_series` must be a valid pointer; the handle it receives must be freed with [`mvms_series_free`].
#[no_mangle]
pub unsafe extern "C" fn mvms_phantom_generate(
    frames: usize,
    height: usize,
    width: usize,
    seed: u64,
    out_series: *mut *mut MvmsSeries,
) -> MvmsStatus {
    guard(|| {
        let dst = out(out_series, "out_series")?;
        let cfg = PhantomConfig {
            frames,
            height,
            width,
            center: [height as f64 / 2.0, width as f64 / 2.0],
            seed,
            ..PhantomConfig::default()
        };
        *dst = Box::into_raw(Box::new(MvmsSeries(generate_phantom(&cfg)?)));
        Ok(())
    })
}

/// Loads a series archive directory.
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out_series` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mvms_series_load(dir: *const c_char, out_series: *mut *mut MvmsSeries) -> MvmsStatus {
    guard(|| {
        let dst = out(out_series, "out_series")?;
        *dst = Box::into_raw(Box::new(MvmsSeries(load_series(path(dir)?)?)));
        Ok(())
    })
}

/// # Safety
/// `series` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn mvms_series_free(series: *mut MvmsSeries) {
    if !series.is_null() {
        drop(Box::from_raw(series));
    }
}

/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mvms_series_dims(
    series: *const MvmsSeries,
    frames: *mut usize,
    height: *mut usize,
    width: *mut usize,
) -> MvmsStatus {
    guard(|| {
        let s = &series.as_ref().ok_or_else(|| null("series"))?.0;
        *out(frames, "frames")? = s.frames();
        *out(height, "height")? = s.height();
        *out(width, "width")? = s.width();
        Ok(())
    })
}

/// Copies magnitude frame `t` (`height * width` values) into `dst`.
///
/// # Safety
/// `dst` must hold `len` floats.
#[no_mangle]
pub unsafe extern "C" fn mvms_series_magnitude(series: *const MvmsSeries, t: usize, dst: *mut f32, len: usize) -> MvmsStatus {
    guard(|| {
        let s = &series.as_ref().ok_or_else(|| null("series"))?.0;
        if t >= s.frames() {
            return Err(invalid(format!("frame {t} out of range")));
        }
        let n = s.height() * s.width();
        if len != n {
            return Err(Fail(MvmsStatus::Shape, format!("buffer holds {len}, frame has {n}")));
        }
        let dst = slice_mut(dst, len, "dst")?;
        for (d, v) in dst.iter_mut().zip(s.magnitude_frame(t).iter()) {
            *d = *v;
        }
        Ok(())
    })
}

/// Mean-of-directions velocity coefficient of two series scored on their own masks.
///
/// # Safety
/// Handles must be valid; `out_value` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mvms_velocity_coefficient(
    predicted: *const MvmsSeries,
    truth: *const MvmsSeries,
    out_value: *mut f64,
) -> MvmsStatus {
    guard(|| {
        let p = &predicted.as_ref().ok_or_else(|| null("predicted"))?.0;
        let t = &truth.as_ref().ok_or_else(|| null("truth"))?.0;
        let v = velocity_coefficient(&velocity_curves(p, &p.mask)?, &velocity_curves(t, &t.mask)?)?;
        *out(out_value, "out_value")? = v;
        Ok(())
    })
}

/// # Safety
/// `pred` and `target` must hold `n` floats.
#[no_mangle]
pub unsafe extern "C" fn mvms_psnr(pred: *const f32, target: *const f32, n: usize, data_range: f64, out_value: *mut f64) -> MvmsStatus {
    guard(|| {
        let (a, b) = (slice(pred, n, "pred")?, slice(target, n, "target")?);
        *out(out_value, "out_value")? = psnr(&ArrayView1::from(a), &ArrayView1::from(b), data_range)?;
        Ok(())
    })
}

/// # Safety
/// `pred` and `target` must hold `height * width` floats.
#[no_mangle]
pub unsafe extern "C" fn mvms_ssim(
    pred: *const f32,
    target: *const f32,
    height: usize,
    width: usize,
    data_range: f64,
    out_value: *mut f64,
) -> MvmsStatus {
    guard(|| {
        let n = height * width;
        let a = image(slice(pred, n, "pred")?, height, width)?;
        let b = image(slice(target, n, "target")?, height, width)?;
        *out(out_value, "out_value")? = ssim(a, b, data_range)?;
        Ok(())
    })
}

/// Dice of two masks thresholded at 0.5.
///
/// # Safety
/// `a` and `b` must hold `n` floats.
#[no_mangle]
pub unsafe extern "C" fn mvms_dice(a: *const f32, b: *const f32, n: usize, out_value: *mut f64) -> MvmsStatus {
    guard(|| {
        let (a, b) = (slice(a, n, "a")?, slice(b, n, "b")?);
        *out(out_value, "out_value")? = dice_score(&ArrayView1::from(a), &ArrayView1::from(b))?;
        Ok(())
    })
}

/// # Safety
/// `x` and `y` must hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn mvms_pearson(x: *const f64, y: *const f64, n: usize, out_value: *mut f64) -> MvmsStatus {
    guard(|| {
        *out(out_value, "out_value")? = pearson(slice(x, n, "x")?, slice(y, n, "y")?)?;
        Ok(())
    })
}

/// Horn–Schunck flow from `img1` to `img2`. `u`/`v` receive column/row displacement.
///
/// # Safety
/// Image buffers and `u`, `v` must hold `height * width` floats.
#[no_mangle]
pub unsafe extern "C" fn mvms_horn_schunck(
    img1: *const f32,
    img2: *const f32,
    height: usize,
    width: usize,
    alpha: f64,
    iterations: usize,
    u: *mut f32,
    v: *mut f32,
) -> MvmsStatus {
    guard(|| {
        let n = height * width;
        let a = image(slice(img1, n, "img1")?, height, width)?;
        let b = image(slice(img2, n, "img2")?, height, width)?;
        let cfg = HSConfig {
            alpha,
            iterations,
            ..HSConfig::default()
        };
        let flow = horn_schunck_flow(a, b, &cfg)?;
        let (u, v) = (slice_mut(u, n, "u")?, slice_mut(v, n, "v")?);
        for (d, s) in u.iter_mut().zip(flow.u.iter()) {
            *d = *s as f32;
        }
        for (d, s) in v.iter_mut().zip(flow.v.iter()) {
            *d = *s as f32;
        }
        Ok(())
    })
}

/// Freshly initialised full network.
///
/// # Safety
/// `out_model` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mvms_model_new(base_channels: usize, seed: u64, out_model: *mut *mut MvmsModel) -> MvmsStatus {
    guard(|| {
        let dst = out(out_model, "out_model")?;
        let cfg = NetworkConfig {
            base_channels,
            ..NetworkConfig::default()
        };
        *dst = Box::into_raw(Box::new(MvmsModel(Network::new(cfg, seed)?)));
        Ok(())
    })
}

/// Loads a checkpoint file.
///
/// # Safety
/// `file` must be a NUL-terminated string and `out_model` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mvms_model_load(file: *const c_char, out_model: *mut *mut MvmsModel) -> MvmsStatus {
    guard(|| {
        let dst = out(out_model, "out_model")?;
        *dst = Box::into_raw(Box::new(MvmsModel(load_checkpoint(path(file)?, None)?.network)));
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn mvms_model_free(model: *mut MvmsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Synthesises frame `tau + k` of `series` from anchors `tau` and `tau + 4`.
/// `mag` and `mask` receive `height * width` values, `phase` three times that.
///
/// # Safety
/// Handles must be valid and buffers sized as described.
#[no_mangle]
pub unsafe extern "C" fn mvms_model_synthesize(
    model: *const MvmsModel,
    series: *const MvmsSeries,
    tau: usize,
    k: usize,
    mag: *mut f32,
    phase: *mut f32,
    mask: *mut f32,
) -> MvmsStatus {
    guard(|| {
        let net = &model.as_ref().ok_or_else(|| null("model"))?.0;
        let s = &series.as_ref().ok_or_else(|| null("series"))?.0;
        let n = s.height() * s.width();
        let sample = build_sample(s, tau, k)?;
        let pred = net.predict(&[&sample], 1)?.remove(0);
        for (dst, src, len, what) in [
            (mag, &pred.mag, n, "mag"),
            (phase, &pred.phase, 3 * n, "phase"),
            (mask, &pred.mask_prob, n, "mask"),
        ] {
            let d = slice_mut(dst, len, what)?;
            for (a, b) in d.iter_mut().zip(src.iter()) {
                *a = *b;
            }
        }
        Ok(())
    })
}
