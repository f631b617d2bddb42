//! C interface to `piste`.
//!
//! Every function returns a [`PisteStatus`]; on failure a description is kept
//! per thread and can be read with [`piste_last_error_message`]. Engines are
//! opaque handles created by `piste_engine_new*` and released with
//! [`piste_engine_free`]. Frames are passed as tightly packed 8-bit RGB.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use piste::geom::{compose, GeomError, Homography, Point2};
use piste::ransac::{estimate, RansacConfig, RansacError};
use piste::reconstruction::{smooth, Engine, EngineConfig, FrameDiagnostics, PointFlag};
use piste::tracking::{footpoint, BBox, TrackingError};
use piste::{Correspondence, Error, Frame};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PisteStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    PointAtInfinity = 3,
    SingularMatrix = 4,
    DegenerateConfiguration = 5,
    InsufficientData = 6,
    NoConsensus = 7,
    InvalidBox = 8,
    InvalidFrame = 9,
    DimensionMismatch = 10,
    Io = 11,
    Parse = 12,
    BufferTooSmall = 13,
    Panic = 14,
    Internal = 15,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PistePoint {
    pub x: f64,
    pub y: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PisteBBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

/// Row-major 3×3 matrix, canonical scale.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PisteHomography {
    pub m: [f64; 9],
}

/// Trajectory point provenance.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PistePointFlag {
    Measured = 0,
    Interpolated = 1,
    OffHorizon = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PisteEngineConfig {
    pub seed: u64,
    pub snow_filter: bool,
    pub max_keypoints: u32,
    pub nms_radius: u32,
    pub inlier_threshold: f64,
    pub min_matches: u32,
    pub bbox_margin: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PisteFrameDiagnostics {
    pub frame: u64,
    pub bbox: PisteBBox,
    pub tracker_lost: bool,
    pub bridged: bool,
    pub keypoints: u64,
    pub matches: u64,
    pub inliers: u64,
    /// False for frame 0.
    pub has_homography: bool,
    pub homography: PisteHomography,
}

/// Opaque engine handle.
pub struct PisteEngine {
    inner: Engine,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).unwrap_or_default());
}

fn fail(status: PisteStatus, msg: impl Into<String>) -> PisteStatus {
    set_error(msg);
    status
}

fn geom_status(e: &GeomError) -> PisteStatus {
    match e {
        GeomError::PointAtInfinity { .. } => PisteStatus::PointAtInfinity,
        GeomError::SingularMatrix { .. } => PisteStatus::SingularMatrix,
        GeomError::DegenerateConfiguration(_) => PisteStatus::DegenerateConfiguration,
        GeomError::InsufficientData(_) => PisteStatus::InsufficientData,
        GeomError::NonFinite(_) => PisteStatus::InvalidArgument,
    }
}

fn error_status(e: &Error) -> PisteStatus {
    match e {
        Error::Geom(g) => geom_status(g),
        Error::Frame(_) => PisteStatus::InvalidFrame,
        Error::Mask(_) | Error::DimensionMismatch { .. } => PisteStatus::DimensionMismatch,
        Error::Ransac(RansacError::InsufficientData(_)) => PisteStatus::InsufficientData,
        Error::Ransac(RansacError::InvalidConfig(_)) => PisteStatus::InvalidArgument,
        Error::Ransac(_) => PisteStatus::NoConsensus,
        Error::Tracking(TrackingError::InvalidBox { .. }) => PisteStatus::InvalidBox,
        Error::Tracking(TrackingError::FrameSize { .. }) => PisteStatus::DimensionMismatch,
        Error::Io { .. } | Error::EmptyDirectory(_) => PisteStatus::Io,
        Error::Csv(_) | Error::Parse { .. } | Error::Decode { .. } => PisteStatus::Parse,
        Error::Config(_) | Error::LengthMismatch(_) => PisteStatus::InvalidArgument,
        _ => PisteStatus::Internal,
    }
}

fn report(e: Error) -> PisteStatus {
    fail(error_status(&e), e.to_string())
}

/// Runs `f`, turning panics into `Panic`.
fn guard(f: impl FnOnce() -> PisteStatus) -> PisteStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == PisteStatus::Ok {
                set_error("");
            }
            s
        }
        Err(_) => fail(PisteStatus::Panic, "internal panic"),
    }
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(PisteStatus::NullPointer, concat!("`", stringify!($p), "` is null"));
        })+
    };
}

impl From<PistePoint> for Point2 {
    fn from(p: PistePoint) -> Self {
        Point2::new(p.x, p.y)
    }
}

impl From<Point2> for PistePoint {
    fn from(p: Point2) -> Self {
        PistePoint { x: p.x, y: p.y }
    }
}

impl From<PisteBBox> for BBox {
    fn from(b: PisteBBox) -> Self {
        BBox::new(b.x, b.y, b.w, b.h)
    }
}

impl From<BBox> for PisteBBox {
    fn from(b: BBox) -> Self {
        PisteBBox {
            x: b.x,
            y: b.y,
            w: b.w,
            h: b.h,
        }
    }
}

impl From<&Homography> for PisteHomography {
    fn from(h: &Homography) -> Self {
        PisteHomography { m: h.to_row_major() }
    }
}

impl PisteHomography {
    fn to_homography(self) -> Result<Homography, PisteStatus> {
        Homography::from_row_major(self.m).map_err(|e| fail(geom_status(&e), e.to_string()))
    }
}

impl Default for PisteEngineConfig {
    fn default() -> Self {
        let d = EngineConfig::default();
        Self {
            seed: d.ransac.seed,
            snow_filter: d.snow.enabled,
            max_keypoints: d.detector.max_keypoints as u32,
            nms_radius: d.detector.nms_radius as u32,
            inlier_threshold: d.ransac.inlier_threshold,
            min_matches: d.min_matches as u32,
            bbox_margin: d.bbox_margin,
        }
    }
}

impl PisteEngineConfig {
    fn to_config(self) -> EngineConfig {
        let mut cfg = EngineConfig::with_seed(self.seed);
        cfg.snow.enabled = self.snow_filter;
        cfg.detector.max_keypoints = self.max_keypoints as usize;
        cfg.detector.nms_radius = self.nms_radius as usize;
        cfg.ransac.inlier_threshold = self.inlier_threshold;
        cfg.min_matches = self.min_matches as usize;
        cfg.bbox_margin = self.bbox_margin;
        cfg
    }
}

fn flag_code(f: PointFlag) -> PistePointFlag {
    match f {
        PointFlag::Measured => PistePointFlag::Measured,
        PointFlag::Interpolated => PistePointFlag::Interpolated,
        PointFlag::OffHorizon => PistePointFlag::OffHorizon,
    }
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn piste_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread (empty after a success).
/// Valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn piste_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Writes the library defaults into `out`.
///
/// # Safety
/// `out` must be null or point to writable memory for one config.
#[no_mangle]
pub unsafe extern "C" fn piste_engine_config_default(out: *mut PisteEngineConfig) -> PisteStatus {
    non_null!(out);
    *out = PisteEngineConfig::default();
    PisteStatus::Ok
}

/// Bottom-centre of a box.
///
/// # Safety
/// `b` and `out` must be null or valid pointers.
#[no_mangle]
pub unsafe extern "C" fn piste_footpoint(b: *const PisteBBox, out: *mut PistePoint) -> PisteStatus {
    non_null!(b, out);
    guard(|| {
        let b: BBox = (*b).into();
        if let Err(e) = b.validate() {
            return report(e.into());
        }
        *out = footpoint(&b).into();
        PisteStatus::Ok
    })
}

/// Maps `p` through `h`.
///
/// # Safety
/// `h` and `out` must be null or valid pointers.
#[no_mangle]
pub unsafe extern "C" fn piste_homography_apply(
    h: *const PisteHomography,
    p: PistePoint,
    out: *mut PistePoint,
) -> PisteStatus {
    non_null!(h, out);
    guard(|| {
        let h = match (*h).to_homography() {
            Ok(h) => h,
            Err(s) => return s,
        };
        match h.apply(p.into()) {
            Ok(q) => {
                *out = q.into();
                PisteStatus::Ok
            }
            Err(e) => fail(geom_status(&e), e.to_string()),
        }
    })
}

/// `out = h2 · h1` (apply `h1` first).
///
/// # Safety
/// All pointers must be null or valid; `out` may alias an input.
#[no_mangle]
pub unsafe extern "C" fn piste_homography_compose(
    h2: *const PisteHomography,
    h1: *const PisteHomography,
    out: *mut PisteHomography,
) -> PisteStatus {
    non_null!(h2, h1, out);
    guard(|| {
        let (a, b) = match ((*h2).to_homography(), (*h1).to_homography()) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        *out = (&compose(&a, &b)).into();
        PisteStatus::Ok
    })
}

/// # Safety
/// `h` and `out` must be null or valid; `out` may alias `h`.
#[no_mangle]
pub unsafe extern "C" fn piste_homography_invert(
    h: *const PisteHomography,
    out: *mut PisteHomography,
) -> PisteStatus {
    non_null!(h, out);
    guard(|| {
        let h = match (*h).to_homography() {
            Ok(h) => h,
            Err(s) => return s,
        };
        match h.inverse() {
            Ok(inv) => {
                *out = (&inv).into();
                PisteStatus::Ok
            }
            Err(e) => fail(geom_status(&e), e.to_string()),
        }
    })
}

/// Robustly fits `src[i] → dst[i]` with default settings and `seed`.
/// `inlier_flags` (optional) receives `n` bytes, 1 for inliers.
///
/// # Safety
/// `src` and `dst` must hold `n` points; `inlier_flags` must be null or hold
/// `n` bytes; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn piste_estimate_homography(
    src: *const PistePoint,
    dst: *const PistePoint,
    n: usize,
    seed: u64,
    out: *mut PisteHomography,
    inlier_flags: *mut u8,
) -> PisteStatus {
    non_null!(src, dst, out);
    guard(|| {
        let (s, d) = (slice::from_raw_parts(src, n), slice::from_raw_parts(dst, n));
        let corrs: Vec<Correspondence> = s
            .iter()
            .zip(d)
            .map(|(a, b)| Correspondence::new((*a).into(), (*b).into()))
            .collect();
        match estimate(&corrs, &RansacConfig::with_seed(seed)) {
            Ok(r) => {
                *out = (&r.h).into();
                if !inlier_flags.is_null() {
                    let flags = slice::from_raw_parts_mut(inlier_flags, n);
                    for (f, &v) in flags.iter_mut().zip(&r.inlier_flags) {
                        *f = v as u8;
                    }
                }
                PisteStatus::Ok
            }
            Err(e) => report(e.into()),
        }
    })
}

unsafe fn frame_from_raw(rgb: *const u8, width: u32, height: u32) -> Result<Frame, PisteStatus> {
    let len = (width as usize)
        .checked_mul(height as usize)
        .and_then(|n| n.checked_mul(3))
        .ok_or_else(|| fail(PisteStatus::InvalidFrame, "frame size overflows"))?;
    let data = slice::from_raw_parts(rgb, len).to_vec();
    Frame::from_rgb(width as usize, height as usize, data).map_err(|e| report(e.into()))
}

unsafe fn new_engine(
    rgb: *const u8,
    width: u32,
    height: u32,
    b0: *const PisteBBox,
    config: *const PisteEngineConfig,
    out: *mut *mut PisteEngine,
    manual: bool,
) -> PisteStatus {
    non_null!(rgb, b0, out);
    guard(|| {
        *out = ptr::null_mut();
        let frame = match frame_from_raw(rgb, width, height) {
            Ok(f) => f,
            Err(s) => return s,
        };
        let cfg = if config.is_null() {
            EngineConfig::default()
        } else {
            (*config).to_config()
        };
        let b0: BBox = (*b0).into();
        let engine = if manual {
            Engine::start_manual(&frame, b0, cfg)
        } else {
            Engine::start(&frame, b0, cfg)
        };
        match engine {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(PisteEngine { inner }));
                PisteStatus::Ok
            }
            Err(e) => report(e),
        }
    })
}

/// Starts an engine that follows the athlete with the built-in tracker.
/// `config` may be null for defaults. On success `*out` owns a new handle.
///
/// # Safety
/// `rgb` must hold `width * height * 3` bytes; other pointers valid or null.
#[no_mangle]
pub unsafe extern "C" fn piste_engine_new(
    rgb: *const u8,
    width: u32,
    height: u32,
    b0: *const PisteBBox,
    config: *const PisteEngineConfig,
    out: *mut *mut PisteEngine,
) -> PisteStatus {
    new_engine(rgb, width, height, b0, config, out, false)
}

/// Starts an engine whose boxes are supplied with
/// [`piste_engine_step_with_box`].
///
/// # Safety
/// As for [`piste_engine_new`].
#[no_mangle]
pub unsafe extern "C" fn piste_engine_new_manual(
    rgb: *const u8,
    width: u32,
    height: u32,
    b0: *const PisteBBox,
    config: *const PisteEngineConfig,
    out: *mut *mut PisteEngine,
) -> PisteStatus {
    new_engine(rgb, width, height, b0, config, out, true)
}

/// Processes the next frame with the built-in tracker.
///
/// # Safety
/// `engine` must be a live handle; `rgb` must hold `width * height * 3` bytes.
#[no_mangle]
pub unsafe extern "C" fn piste_engine_step(
    engine: *mut PisteEngine,
    rgb: *const u8,
    width: u32,
    height: u32,
) -> PisteStatus {
    non_null!(engine, rgb);
    guard(|| {
        let frame = match frame_from_raw(rgb, width, height) {
            Ok(f) => f,
            Err(s) => return s,
        };
        match (*engine).inner.step(&frame) {
            Ok(_) => PisteStatus::Ok,
            Err(e) => report(e),
        }
    })
}

/// Processes the next frame with a caller-supplied athlete box.
///
/// # Safety
/// As for [`piste_engine_step`]; `bbox` must be valid.
#[no_mangle]
pub unsafe extern "C" fn piste_engine_step_with_box(
    engine: *mut PisteEngine,
    rgb: *const u8,
    width: u32,
    height: u32,
    bbox: *const PisteBBox,
) -> PisteStatus {
    non_null!(engine, rgb, bbox);
    guard(|| {
        let frame = match frame_from_raw(rgb, width, height) {
            Ok(f) => f,
            Err(s) => return s,
        };
        match (*engine).inner.step_with_box(&frame, (*bbox).into()) {
            Ok(_) => PisteStatus::Ok,
            Err(e) => report(e),
        }
    })
}

/// Number of trajectory points (frames processed so far); 0 for null.
///
/// # Safety
/// `engine` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn piste_engine_trajectory_len(engine: *const PisteEngine) -> usize {
    if engine.is_null() {
        return 0;
    }
    (*engine).inner.trajectory().len()
}

/// Copies the trajectory (current-frame coordinates) into `points` and,
/// if non-null, the per-point flags into `flags`. Fails with
/// `BufferTooSmall` when `capacity` is below the trajectory length.
///
/// # Safety
/// `points` (and `flags` if non-null) must hold `capacity` elements.
#[no_mangle]
pub unsafe extern "C" fn piste_engine_trajectory_copy(
    engine: *const PisteEngine,
    points: *mut PistePoint,
    flags: *mut PistePointFlag,
    capacity: usize,
) -> PisteStatus {
    non_null!(engine, points);
    guard(|| {
        let traj = (*engine).inner.trajectory();
        if capacity < traj.len() {
            return fail(
                PisteStatus::BufferTooSmall,
                format!("need {} points, capacity {capacity}", traj.len()),
            );
        }
        let dst = slice::from_raw_parts_mut(points, traj.len());
        for (d, p) in dst.iter_mut().zip(&traj.points) {
            *d = (*p).into();
        }
        if !flags.is_null() {
            let dst = slice::from_raw_parts_mut(flags, traj.len());
            for (d, f) in dst.iter_mut().zip(&traj.flags) {
                *d = flag_code(*f);
            }
        }
        PisteStatus::Ok
    })
}

/// Smoothed drawing polyline. `*needed` always receives the required
/// length; `out` may be null to query it.
///
/// # Safety
/// `out` must be null or hold `capacity` points; `needed` must be valid.
#[no_mangle]
pub unsafe extern "C" fn piste_engine_smooth(
    engine: *const PisteEngine,
    samples_per_segment: u32,
    out: *mut PistePoint,
    capacity: usize,
    needed: *mut usize,
) -> PisteStatus {
    non_null!(engine, needed);
    guard(|| {
        let pts = smooth((*engine).inner.trajectory(), samples_per_segment as usize);
        *needed = pts.len();
        if out.is_null() || capacity < pts.len() {
            return fail(
                PisteStatus::BufferTooSmall,
                format!("need {} points, capacity {capacity}", pts.len()),
            );
        }
        let dst = slice::from_raw_parts_mut(out, pts.len());
        for (d, p) in dst.iter_mut().zip(&pts) {
            *d = (*p).into();
        }
        PisteStatus::Ok
    })
}

/// Writes the trajectory export document to `path` (UTF-8).
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn piste_engine_export(engine: *const PisteEngine, path: *const c_char) -> PisteStatus {
    non_null!(engine, path);
    guard(|| {
        let Ok(path) = CStr::from_ptr(path).to_str() else {
            return fail(PisteStatus::InvalidArgument, "path is not UTF-8");
        };
        let e = &(*engine).inner;
        match piste::io::export_trajectory(e.trajectory(), e.diagnostics(), path) {
            Ok(()) => PisteStatus::Ok,
            Err(err) => report(err),
        }
    })
}

fn diag_to_c(d: &FrameDiagnostics) -> PisteFrameDiagnostics {
    PisteFrameDiagnostics {
        frame: d.frame as u64,
        bbox: d.bbox.into(),
        tracker_lost: d.tracker_lost,
        bridged: d.bridged,
        keypoints: d.keypoints as u64,
        matches: d.matches as u64,
        inliers: d.inliers as u64,
        has_homography: d.homography.is_some(),
        homography: d.homography.as_ref().map(PisteHomography::from).unwrap_or_default(),
    }
}

/// Diagnostics of the most recently processed frame.
///
/// # Safety
/// `engine` must be a live handle; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn piste_engine_last_diagnostics(
    engine: *const PisteEngine,
    out: *mut PisteFrameDiagnostics,
) -> PisteStatus {
    non_null!(engine, out);
    guard(|| {
        match (*engine).inner.diagnostics().last() {
            Some(d) => {
                *out = diag_to_c(d);
                PisteStatus::Ok
            }
            None => fail(PisteStatus::Internal, "engine has no diagnostics"),
        }
    })
}

/// Releases an engine; null is ignored.
///
/// # Safety
/// `engine` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn piste_engine_free(engine: *mut PisteEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}
