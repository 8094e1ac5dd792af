//! C ABI over the `hsvt` crate.
//!
//! Every fallible function returns an [`HsvtStatus`]; on failure the message
//! is kept per thread and can be copied out with [`hsvt_last_error`].
//! Objects are opaque handles created by `*_new`/`*_read` functions and
//! released with the matching `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use hsvt::autodiff::{checkpoint, Tensor};
use hsvt::backbone::{BlockState, ModelConfig};
use hsvt::detect::{decode, Detector, HeadConfig};
use hsvt::events::{accumulate, read_events, Event, EventFormat, EventStream, Polarity, WindowRange, WindowSpec};
use hsvt::layers::ForwardCtx;
use hsvt::profiler::{energy_ann, energy_snn, sops};
use hsvt::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HsvtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Shape = 5,
    NonFinite = 6,
    Diverged = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// One detected box, top-left corner and size in pixels.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HsvtDetection {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub class_id: u32,
    pub score: f64,
}

/// Opaque time-sorted event stream.
pub struct HsvtEventStream {
    inner: EventStream,
}

/// Opaque detector with its recurrent state.
pub struct HsvtDetector {
    det: Detector,
    state: BlockState,
    head: HeadConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> HsvtStatus {
    match e {
        Error::Io { .. } => HsvtStatus::Io,
        Error::Parse { .. } => HsvtStatus::Parse,
        Error::Shape { .. } | Error::NonScalarLoss(_) => HsvtStatus::Shape,
        Error::NonFinite { .. } => HsvtStatus::NonFinite,
        Error::Diverged { .. } => HsvtStatus::Diverged,
        Error::Invalid { .. } => HsvtStatus::InvalidArgument,
    }
}

struct Fail(HsvtStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> HsvtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HsvtStatus::Ok,
        Ok(Err(Fail(s, m))) => {
            set_error(m);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            HsvtStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(HsvtStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(HsvtStatus::InvalidArgument, msg.into())
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not UTF-8")))
}

/// Copy the calling thread's last error message (NUL-terminated, truncated
/// to `len`) into `buf`. Returns the full message length without the NUL.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn hsvt_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hsvt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Energy of `flops` dense operations at 4.6 pJ each, in mJ.
#[no_mangle]
pub extern "C" fn hsvt_energy_ann_mj(flops: u64) -> f64 {
    energy_ann(flops).mj()
}

/// Energy of `sops` synaptic operations at 0.9 pJ each, in mJ.
#[no_mangle]
pub extern "C" fn hsvt_energy_snn_mj(sops: u64) -> f64 {
    energy_snn(sops).mj()
}

/// `fr × T × FLOPs` rounded to whole operations.
#[no_mangle]
pub extern "C" fn hsvt_sops(firing_rate: f64, timesteps: usize, flops: u64) -> u64 {
    sops(firing_rate, timesteps, flops)
}

/// Read an event file (`.csv` or binary, chosen by extension).
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hsvt_event_stream_read(path: *const c_char, out: *mut *mut HsvtEventStream) -> HsvtStatus {
    guard(|| {
        let path = PathBuf::from(str_arg(path, "path")?);
        if out.is_null() {
            return Err(null("out"));
        }
        let (inner, _) = read_events(&path, EventFormat::from_path(&path), None)?;
        *out = Box::into_raw(Box::new(HsvtEventStream { inner }));
        Ok(())
    })
}

/// Build a stream from parallel arrays; `p` holds +1 or -1.
///
/// # Safety
/// The four arrays must each hold `n` elements; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hsvt_event_stream_from_arrays(
    width: u16,
    height: u16,
    t: *const u64,
    x: *const u16,
    y: *const u16,
    p: *const i8,
    n: usize,
    out: *mut *mut HsvtEventStream,
) -> HsvtStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if n > 0 && (t.is_null() || x.is_null() || y.is_null() || p.is_null()) {
            return Err(null("event array"));
        }
        let mut events = Vec::with_capacity(n);
        for i in 0..n {
            let pol = Polarity::from_sign(*p.add(i) as i64).ok_or_else(|| invalid(format!("polarity {} at {i}", *p.add(i))))?;
            events.push(Event::new(*t.add(i), *x.add(i), *y.add(i), pol));
        }
        let (inner, _) = EventStream::from_events(width, height, events)?;
        *out = Box::into_raw(Box::new(HsvtEventStream { inner }));
        Ok(())
    })
}

/// # Safety
/// `stream` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hsvt_event_stream_len(stream: *const HsvtEventStream) -> usize {
    stream.as_ref().map_or(0, |s| s.inner.len())
}

/// # Safety
/// `stream` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hsvt_event_stream_free(stream: *mut HsvtEventStream) {
    if !stream.is_null() {
        drop(Box::from_raw(stream));
    }
}

/// Number of `delta_t_ms` windows from t = 0 covering every event.
///
/// # Safety
/// `stream` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hsvt_window_count(stream: *const HsvtEventStream, delta_t_ms: f64, out: *mut usize) -> HsvtStatus {
    guard(|| {
        let s = stream.as_ref().ok_or_else(|| null("stream"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let spec = WindowSpec::new(delta_t_ms, 1, s.inner.height() as usize, s.inner.width() as usize)?;
        *out = WindowRange::covering(&s.inner, &spec).count;
        Ok(())
    })
}

/// Histogram window `window` into `buf`, laid out `[2·t_bins × H × W]`.
/// `buf_len` must be at least `2·t_bins·H·W`.
///
/// # Safety
/// `stream` must be valid and `buf` valid for `buf_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn hsvt_accumulate(
    stream: *const HsvtEventStream,
    delta_t_ms: f64,
    t_bins: usize,
    window: usize,
    buf: *mut f64,
    buf_len: usize,
) -> HsvtStatus {
    guard(|| {
        let s = stream.as_ref().ok_or_else(|| null("stream"))?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let spec = WindowSpec::new(delta_t_ms, t_bins, s.inner.height() as usize, s.inner.width() as usize)?;
        let need = spec.channels() * spec.height * spec.width;
        if buf_len < need {
            return Err(Fail(HsvtStatus::BufferTooSmall, format!("need {need} values, got {buf_len}")));
        }
        let range = WindowRange {
            t0: window as u64 * spec.delta_t_us,
            count: 1,
        };
        let frames = accumulate(&s.inner, &spec, range)?;
        std::slice::from_raw_parts_mut(buf, need).copy_from_slice(&frames.frames[0]);
        Ok(())
    })
}

/// Create a detector from a TOML model config (null: the 64×64 desk-scale
/// model) with deterministic initial weights.
///
/// # Safety
/// `config_toml` must be null or NUL-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hsvt_detector_new(config_toml: *const c_char, seed: u64, out: *mut *mut HsvtDetector) -> HsvtStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = if config_toml.is_null() {
            ModelConfig::desk_scale()
        } else {
            ModelConfig::from_toml(str_arg(config_toml, "config")?)?
        };
        let det = Detector::new(&cfg, seed)?;
        *out = Box::into_raw(Box::new(HsvtDetector {
            det,
            state: BlockState::new(),
            head: HeadConfig::default(),
        }));
        Ok(())
    })
}

/// # Safety
/// `det` must be valid and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn hsvt_detector_load_checkpoint(det: *mut HsvtDetector, path: *const c_char) -> HsvtStatus {
    guard(|| {
        let d = det.as_mut().ok_or_else(|| null("detector"))?;
        let path = PathBuf::from(str_arg(path, "path")?);
        checkpoint::load(&d.det, &path)?;
        Ok(())
    })
}

/// Input channels the detector expects (`2·t_bins`).
///
/// # Safety
/// `det` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn hsvt_detector_input_channels(det: *const HsvtDetector) -> usize {
    det.as_ref().map_or(0, |d| d.det.config().input_channels())
}

/// Forget the recurrent state (start of a new recording).
///
/// # Safety
/// `det` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hsvt_detector_reset(det: *mut HsvtDetector) -> HsvtStatus {
    guard(|| {
        let d = det.as_mut().ok_or_else(|| null("detector"))?;
        d.state = BlockState::new();
        Ok(())
    })
}

/// Run one window `[channels × h × w]` through the detector, advancing its
/// state, and write up to `cap` detections. `count` receives the number of
/// detections found; if it exceeds `cap` the status is `BufferTooSmall`,
/// the best `cap` are written and the state is still advanced.
///
/// # Safety
/// `frame` must hold `channels·h·w` doubles, `out` `cap` entries.
#[no_mangle]
pub unsafe extern "C" fn hsvt_detector_detect(
    det: *mut HsvtDetector,
    frame: *const f64,
    channels: usize,
    h: usize,
    w: usize,
    out: *mut HsvtDetection,
    cap: usize,
    count: *mut usize,
) -> HsvtStatus {
    guard(|| {
        let d = det.as_mut().ok_or_else(|| null("detector"))?;
        if frame.is_null() || count.is_null() || (cap > 0 && out.is_null()) {
            return Err(null("frame, out or count"));
        }
        let data = std::slice::from_raw_parts(frame, channels * h * w).to_vec();
        let x = Tensor::new(&[1, channels, h, w], data)?;
        let preds = d.det.forward(&mut ForwardCtx::inference(), &x, &mut d.state)?;
        let dets = decode(&preds, d.det.config().num_classes, &d.head)?.remove(0);
        *count = dets.len();
        for (i, dt) in dets.iter().take(cap).enumerate() {
            *out.add(i) = HsvtDetection {
                x: dt.bbox.x,
                y: dt.bbox.y,
                w: dt.bbox.w,
                h: dt.bbox.h,
                class_id: dt.class_id as u32,
                score: dt.score,
            };
        }
        if dets.len() > cap {
            return Err(Fail(HsvtStatus::BufferTooSmall, format!("{} detections, room for {cap}", dets.len())));
        }
        Ok(())
    })
}

/// # Safety
/// `det` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hsvt_detector_free(det: *mut HsvtDetector) {
    if !det.is_null() {
        drop(Box::from_raw(det));
    }
}
