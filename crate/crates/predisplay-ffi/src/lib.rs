//! C ABI for the delay-compensation pipeline.
//!
//! Conventions:
//! - Objects cross the boundary as opaque handles created and destroyed by
//!   this library; callers never see their layout.
//! - Every fallible call returns a [`PdStatus`]; `PD_STATUS_OK` is zero. On
//!   failure a human-readable message is stored per thread and readable via
//!   [`pd_last_error`] until the next failing call on the same thread.
//! - No call unwinds across the boundary: panics are caught and reported as
//!   `PD_STATUS_INTERNAL`.
//! - Image buffers are caller-allocated, row-major, 8-bit RGB (3 bytes per
//!   pixel); hole masks are 1 byte per pixel, 255 = hole.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use predisplay::depth::{load_frame, plane_for_bundle_name, DepthSource};
use predisplay::io::SequenceBundle;
use predisplay::kinematics::{predict, CommandBuffer, KinematicParams, PlanarPose};
use predisplay::pipeline::{compensate_frame, Method, PipelineConfig};

/// Result of a C-API call. Zero is success; anything else is an error whose
/// detail is available from `pd_last_error()` on the calling thread.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PdStatus {
    /// The call succeeded.
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// An argument value was out of its documented domain.
    InvalidArgument = 2,
    /// The sequence could not be read (missing or malformed files).
    IoError = 3,
    /// A frame index or index + delay lies outside the sequence.
    OutOfRange = 4,
    /// A caller-provided buffer is smaller than required.
    BufferTooSmall = 5,
    /// Rendering or prediction failed.
    RenderError = 6,
    /// An internal invariant failed; the library caught a panic.
    Internal = 7,
}

/// Compensation method selector.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PdMethod {
    /// Depth back-projection, sphere splatting, hole inpainting.
    Pointcloud = 0,
    /// Single-plane homography warp; the plane is inferred from the
    /// sequence name (frontal bundles use their plane, everything else the
    /// ground plane at the preset mount height).
    Homography = 1,
    /// Image-space crop-and-scale from planar displacement.
    CropScale = 2,
}

/// Static facts about an opened sequence.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PdSequenceInfo {
    /// Frame width in pixels.
    pub width: u32,
    /// Frame height in pixels.
    pub height: u32,
    /// Number of frames in the sequence.
    pub frame_count: u64,
    /// Native capture rate, Hz.
    pub frame_rate: f64,
}

/// Planar robot pose / displacement: meters, meters, radians.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PdPlanarPose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

/// An opened sequence bundle. Opaque; create with `pd_sequence_open`,
/// destroy with `pd_sequence_close`.
pub struct PdSequence {
    source: DepthSource,
    commands: CommandBuffer,
    name: String,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl std::fmt::Display) {
    let text = message.to_string().replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(text).expect("NULs stripped above");
    });
}

fn fail(status: PdStatus, message: impl std::fmt::Display) -> PdStatus {
    set_error(message);
    status
}

/// Runs a body, converting panics into `PD_STATUS_INTERNAL` instead of
/// letting them unwind into C.
fn guarded(body: impl FnOnce() -> PdStatus) -> PdStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(payload) => {
            let detail = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(PdStatus::Internal, format!("internal error: {detail}"))
        }
    }
}

/// Message describing the most recent failure on this thread, as a
/// NUL-terminated UTF-8 string. Never null. The pointer stays valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pd_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Opens a sequence bundle directory (manifest, frames, poses, commands)
/// and returns a handle through `out`. On failure `*out` is untouched.
///
/// # Safety
/// `path` must be a valid NUL-terminated string; `out` must be a valid
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn pd_sequence_open(
    path: *const c_char,
    out: *mut *mut PdSequence,
) -> PdStatus {
    guarded(|| {
        if path.is_null() || out.is_null() {
            return fail(PdStatus::NullPointer, "pd_sequence_open: null argument");
        }
        let path = match unsafe { CStr::from_ptr(path) }.to_str() {
            Ok(p) => p,
            Err(_) => return fail(PdStatus::InvalidArgument, "path is not valid UTF-8"),
        };
        let bundle = match SequenceBundle::open(Path::new(path)) {
            Ok(b) => b,
            Err(e) => return fail(PdStatus::IoError, e),
        };
        let handle = PdSequence {
            commands: bundle.commands().clone(),
            name: bundle.manifest().name.clone(),
            source: DepthSource::FileDepth(bundle),
        };
        unsafe { *out = Box::into_raw(Box::new(handle)) };
        PdStatus::Ok
    })
}

/// Releases a handle returned by `pd_sequence_open`. Null is a no-op.
///
/// # Safety
/// `seq` must be null or a pointer previously returned by
/// `pd_sequence_open` that has not been closed yet.
#[no_mangle]
pub unsafe extern "C" fn pd_sequence_close(seq: *mut PdSequence) {
    if !seq.is_null() {
        drop(unsafe { Box::from_raw(seq) });
    }
}

/// Fills `out` with the sequence dimensions, length, and frame rate.
///
/// # Safety
/// `seq` must be a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pd_sequence_info(
    seq: *const PdSequence,
    out: *mut PdSequenceInfo,
) -> PdStatus {
    guarded(|| {
        let (Some(seq), false) = (unsafe { seq.as_ref() }, out.is_null()) else {
            return fail(PdStatus::NullPointer, "pd_sequence_info: null argument");
        };
        let intr = seq.source.intrinsics();
        unsafe {
            *out = PdSequenceInfo {
                width: intr.width,
                height: intr.height,
                frame_count: seq.source.frame_count() as u64,
                frame_rate: seq.source.frame_rate(),
            };
        }
        PdStatus::Ok
    })
}

fn method_for(seq: &PdSequence, method: PdMethod) -> Method {
    match method {
        PdMethod::Pointcloud => Method::Pointcloud,
        PdMethod::CropScale => Method::CropScale,
        PdMethod::Homography => {
            let (normal, offset) = plane_for_bundle_name(&seq.name);
            Method::Homography { normal, offset }
        }
    }
}

/// Compensates recorded frame `frame` to the recorded camera pose of frame
/// `frame + delay` and writes the result as 8-bit RGB into `rgb_out`
/// (`width * height * 3` bytes required). If `holes_out` is non-null it
/// receives the pre-inpainting hole mask, one byte per pixel, 255 where the
/// renderer had no data (`width * height` bytes required). If
/// `hole_fraction_out` is non-null it receives the hole fraction in [0, 1].
///
/// # Safety
/// `seq` must be a live handle and the buffers valid for their stated
/// lengths.
#[no_mangle]
pub unsafe extern "C" fn pd_compensate_to_recorded_pose(
    seq: *const PdSequence,
    frame: u64,
    delay: u64,
    method: PdMethod,
    rgb_out: *mut u8,
    rgb_len: usize,
    holes_out: *mut u8,
    holes_len: usize,
    hole_fraction_out: *mut f64,
) -> PdStatus {
    guarded(|| {
        let Some(seq) = (unsafe { seq.as_ref() }) else {
            return fail(PdStatus::NullPointer, "pd_compensate_to_recorded_pose: null handle");
        };
        if rgb_out.is_null() {
            return fail(PdStatus::NullPointer, "pd_compensate_to_recorded_pose: null rgb_out");
        }
        let intr = seq.source.intrinsics();
        let pixels = intr.width as usize * intr.height as usize;
        if rgb_len < pixels * 3 {
            return fail(
                PdStatus::BufferTooSmall,
                format!("rgb_out needs {} bytes, got {rgb_len}", pixels * 3),
            );
        }
        if !holes_out.is_null() && holes_len < pixels {
            return fail(
                PdStatus::BufferTooSmall,
                format!("holes_out needs {pixels} bytes, got {holes_len}"),
            );
        }
        let count = seq.source.frame_count() as u64;
        let Some(target) = frame.checked_add(delay).filter(|t| *t < count && frame < count)
        else {
            return fail(
                PdStatus::OutOfRange,
                format!("frame {frame} + delay {delay} outside sequence of {count} frames"),
            );
        };

        let src = match load_frame(&seq.source, frame as usize) {
            Ok(f) => f,
            Err(e) => return fail(PdStatus::IoError, e),
        };
        let dst = match load_frame(&seq.source, target as usize) {
            Ok(f) => f,
            Err(e) => return fail(PdStatus::IoError, e),
        };
        let cfg = PipelineConfig {
            method: method_for(seq, method),
            ..PipelineConfig::default()
        };
        let compensated = match compensate_frame(&src, &dst.pose, &intr, &cfg) {
            Ok(c) => c,
            Err(e) => return fail(PdStatus::RenderError, e),
        };

        let data = compensated.image.data();
        for (i, v) in data.iter().enumerate() {
            let byte = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
            unsafe { *rgb_out.add(i) = byte };
        }
        if !holes_out.is_null() {
            for (i, hole) in compensated.holes.data().iter().enumerate() {
                unsafe { *holes_out.add(i) = if *hole { 255 } else { 0 } };
            }
        }
        if !hole_fraction_out.is_null() {
            unsafe { *hole_fraction_out = compensated.hole_fraction };
        }
        PdStatus::Ok
    })
}

/// Integrates the sequence's recorded command stream to predict the robot's
/// planar displacement from `from_time` over `horizon` seconds, writing the
/// relative (x, y, heading) into `out`. A zero horizon yields the zero
/// displacement.
///
/// # Safety
/// `seq` must be a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pd_predict_planar_displacement(
    seq: *const PdSequence,
    from_time: f64,
    horizon: f64,
    out: *mut PdPlanarPose,
) -> PdStatus {
    guarded(|| {
        let (Some(seq), false) = (unsafe { seq.as_ref() }, out.is_null()) else {
            return fail(PdStatus::NullPointer, "pd_predict_planar_displacement: null argument");
        };
        if !(from_time.is_finite() && horizon.is_finite() && horizon >= 0.0) {
            return fail(
                PdStatus::InvalidArgument,
                format!("need finite from_time and horizon >= 0, got {from_time}, {horizon}"),
            );
        }
        let predicted = predict(
            PlanarPose::origin(),
            from_time,
            &seq.commands,
            from_time + horizon,
            &KinematicParams::default(),
        );
        unsafe {
            *out = PdPlanarPose {
                x: predicted.pose.x,
                y: predicted.pose.y,
                theta: predicted.pose.theta,
            };
        }
        PdStatus::Ok
    })
}
