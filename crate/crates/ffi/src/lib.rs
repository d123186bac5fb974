//! C ABI over `vomask-core`.
//!
//! Masks and frame sequences cross the boundary as opaque handles created by
//! `*_new` / `*_read` calls and released with the matching `*_free`. Every
//! fallible call returns a [`VomaskStatus`]; on failure the message is
//! available from [`vomask_last_error`] on the same thread until the next
//! failing call. Output handles are written only on success.
//!
//! Pixel buffers are row-major `frames x height x width (x channels)`, one
//! byte per value; mask bytes must be 0 or 1.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use vomask::degrade::{self, DegradeSpec};
use vomask::metrics::{self, EvalFlags, FrameSequence};
use vomask::randmask::{self, MaskGenSpec};
use vomask::{muse, seqio, Error, MaskSequence, StructuringElement};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VomaskStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Config = 4,
    EmptyRegion = 5,
    /// Malformed `.mseq`, image or manifest data.
    Format = 6,
    Io = 7,
    Json = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VomaskCompressionMode {
    Union = 0,
    Nearest = 1,
}

/// Opaque binary mask volume.
pub struct VomaskMask(MaskSequence);

/// Opaque 8-bit frame sequence.
pub struct VomaskFrames(FrameSequence);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> VomaskStatus {
    match e {
        Error::DimensionMismatch { .. } => VomaskStatus::DimensionMismatch,
        Error::InvalidArgument(_) => VomaskStatus::InvalidArgument,
        Error::Config(_) => VomaskStatus::Config,
        Error::EmptyRegion(_) => VomaskStatus::EmptyRegion,
        Error::BadMagic { .. }
        | Error::BadVersion(_)
        | Error::Truncated { .. }
        | Error::DirtyPadding { .. }
        | Error::TrailingBytes(_)
        | Error::Image { .. }
        | Error::Manifest(_) => VomaskStatus::Format,
        Error::Write { .. } | Error::MissingFrame { .. } | Error::Io(_) => VomaskStatus::Io,
        Error::Json(_) => VomaskStatus::Json,
    }
}

struct Fail(VomaskStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(VomaskStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> VomaskStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VomaskStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic".into());
            VomaskStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(VomaskStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn emit<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn buffer<'a>(data: *const u8, len: usize) -> Result<&'a [u8], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(null("data"));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

fn volume(dims: &[usize]) -> Result<usize, Fail> {
    dims.iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .ok_or_else(|| Fail(VomaskStatus::InvalidArgument, "dimensions overflow".into()))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread; do not free.
#[no_mangle]
pub extern "C" fn vomask_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version, static string.
#[no_mangle]
pub extern "C" fn vomask_version() -> *const c_char {
    static V: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    V.as_ptr().cast()
}

/// New mask from `frames * height * width` bytes, or all zeros when `data`
/// is null.
///
/// # Safety
/// `data` must be null or point to `frames * height * width` readable bytes;
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vomask_mask_new(
    frames: usize,
    height: usize,
    width: usize,
    data: *const u8,
    out: *mut *mut VomaskMask,
) -> VomaskStatus {
    guard(|| {
        let m = if data.is_null() {
            MaskSequence::zeros(frames, height, width)?
        } else {
            let n = volume(&[frames, height, width])?;
            MaskSequence::new(frames, height, width, buffer(data, n)?.to_vec())?
        };
        emit(out, VomaskMask(m))
    })
}

/// # Safety
/// `m` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vomask_mask_free(m: *mut VomaskMask) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `m` must be a live handle; the out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn vomask_mask_dims(
    m: *const VomaskMask,
    frames: *mut usize,
    height: *mut usize,
    width: *mut usize,
) -> VomaskStatus {
    guard(|| {
        let m = &deref(m, "mask")?.0;
        if frames.is_null() || height.is_null() || width.is_null() {
            return Err(null("output pointer"));
        }
        (*frames, *height, *width) = m.dims();
        Ok(())
    })
}

/// Number of set pixels.
///
/// # Safety
/// `m` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vomask_mask_count(m: *const VomaskMask, out: *mut usize) -> VomaskStatus {
    guard(|| {
        let m = &deref(m, "mask")?.0;
        if out.is_null() {
            return Err(null("output pointer"));
        }
        *out = m.count_ones();
        Ok(())
    })
}

/// Copies the mask bytes into `buf`, which must hold exactly
/// `frames * height * width` bytes.
///
/// # Safety
/// `m` must be a live handle; `buf` must point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn vomask_mask_copy(m: *const VomaskMask, buf: *mut u8, len: usize) -> VomaskStatus {
    guard(|| {
        let m = &deref(m, "mask")?.0;
        if len != m.as_slice().len() {
            return Err(Fail(
                VomaskStatus::DimensionMismatch,
                format!("buffer holds {len} bytes, mask has {}", m.as_slice().len()),
            ));
        }
        if buf.is_null() {
            return Err(null("buffer"));
        }
        ptr::copy_nonoverlapping(m.as_slice().as_ptr(), buf, len);
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vomask_mseq_read(path: *const c_char, out: *mut *mut VomaskMask) -> VomaskStatus {
    guard(|| {
        let m = seqio::load_mseq(str_arg(path, "path")?)?;
        emit(out, VomaskMask(m))
    })
}

/// # Safety
/// `m` must be a live handle; `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn vomask_mseq_write(m: *const VomaskMask, path: *const c_char) -> VomaskStatus {
    guard(|| {
        let m = &deref(m, "mask")?.0;
        seqio::save_mseq(m, str_arg(path, "path")?)?;
        Ok(())
    })
}

unsafe fn unary(
    m: *const VomaskMask,
    out: *mut *mut VomaskMask,
    f: impl FnOnce(&MaskSequence) -> Result<MaskSequence, Fail>,
) -> VomaskStatus {
    guard(|| {
        let r = f(&deref(m, "mask")?.0)?;
        emit(out, VomaskMask(r))
    })
}

/// Compresses onto `1 + ceil((F - 1) / ratio)` latent frames.
///
/// # Safety
/// `m` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vomask_compress(
    m: *const VomaskMask,
    ratio: usize,
    mode: VomaskCompressionMode,
    out: *mut *mut VomaskMask,
) -> VomaskStatus {
    unary(m, out, |m| {
        Ok(match mode {
            VomaskCompressionMode::Union => muse::compress_union(m, ratio)?,
            VomaskCompressionMode::Nearest => muse::compress_nearest(m, ratio)?,
        })
    })
}

/// Windowed union expanded back to the input length.
///
/// # Safety
/// `m` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vomask_preprocess(m: *const VomaskMask, ratio: usize, out: *mut *mut VomaskMask) -> VomaskStatus {
    unary(m, out, |m| Ok(muse::muse_preprocess(m, ratio)?))
}

/// # Safety
/// `m` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vomask_erode(m: *const VomaskMask, radius: usize, out: *mut *mut VomaskMask) -> VomaskStatus {
    unary(m, out, |m| Ok(m.erode(StructuringElement::square(radius)?)))
}

/// # Safety
/// `m` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vomask_dilate(m: *const VomaskMask, radius: usize, out: *mut *mut VomaskMask) -> VomaskStatus {
    unary(m, out, |m| Ok(m.dilate(StructuringElement::square(radius)?)))
}

/// Replaces each frame by its filled bounding box.
///
/// # Safety
/// `m` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vomask_bbox_fit(m: *const VomaskMask, out: *mut *mut VomaskMask) -> VomaskStatus {
    unary(m, out, |m| Ok(m.bbox_fit()))
}

/// Keeps frames `0, k, 2k, ...`.
///
/// # Safety
/// `m` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vomask_subsample(m: *const VomaskMask, k: usize, out: *mut *mut VomaskMask) -> VomaskStatus {
    unary(m, out, |m| Ok(m.temporal_subsample(k)?))
}

/// Pixelwise OR of two masks of equal dimensions.
///
/// # Safety
/// `a` and `b` must be live handles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vomask_union(a: *const VomaskMask, b: *const VomaskMask, out: *mut *mut VomaskMask) -> VomaskStatus {
    guard(|| {
        let r = deref(a, "mask a")?.0.union(&deref(b, "mask b")?.0)?;
        emit(out, VomaskMask(r))
    })
}

/// Degrades a mask with a JSON degradation spec (same fields as the CLI
/// config).
///
/// # Safety
/// `m` must be a live handle; `spec_json` NUL-terminated; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn vomask_degrade(m: *const VomaskMask, spec_json: *const c_char, out: *mut *mut VomaskMask) -> VomaskStatus {
    guard(|| {
        let spec: DegradeSpec = serde_json::from_str(str_arg(spec_json, "spec")?).map_err(Error::from)?;
        let r = degrade::apply(&deref(m, "mask")?.0, &spec)?;
        emit(out, VomaskMask(r))
    })
}

/// Generates a random mask from a JSON generation spec.
///
/// # Safety
/// `spec_json` must be NUL-terminated; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn vomask_randmask(spec_json: *const c_char, out: *mut *mut VomaskMask) -> VomaskStatus {
    guard(|| {
        let spec: MaskGenSpec = serde_json::from_str(str_arg(spec_json, "spec")?).map_err(Error::from)?;
        emit(out, VomaskMask(randmask::generate(&spec)?))
    })
}

/// New frame sequence from `frames * height * width * channels` bytes;
/// `channels` is 1 or 3.
///
/// # Safety
/// `data` must point to that many readable bytes; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vomask_frames_new(
    frames: usize,
    height: usize,
    width: usize,
    channels: usize,
    data: *const u8,
    out: *mut *mut VomaskFrames,
) -> VomaskStatus {
    guard(|| {
        let n = volume(&[frames, height, width, channels])?;
        let f = FrameSequence::new(frames, height, width, channels, buffer(data, n)?.to_vec())?;
        emit(out, VomaskFrames(f))
    })
}

/// Reads a PGM/PPM frame directory.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vomask_frames_read(path: *const c_char, out: *mut *mut VomaskFrames) -> VomaskStatus {
    guard(|| {
        let f = seqio::load_frames(str_arg(path, "path")?)?;
        emit(out, VomaskFrames(f))
    })
}

/// # Safety
/// `f` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vomask_frames_free(f: *mut VomaskFrames) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

unsafe fn region<'a>(r: *const VomaskMask) -> Option<&'a MaskSequence> {
    r.as_ref().map(|m| &m.0)
}

unsafe fn scalar(out: *mut f64, f: impl FnOnce() -> Result<f64, Fail>) -> VomaskStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("output pointer"));
        }
        *out = f()?;
        Ok(())
    })
}

/// Mean per-frame PSNR in dB, capped at 100. `exclude` may be null; set
/// pixels are left out.
///
/// # Safety
/// `a`, `b` live handles; `exclude` null or live; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn vomask_psnr(
    a: *const VomaskFrames,
    b: *const VomaskFrames,
    exclude: *const VomaskMask,
    out: *mut f64,
) -> VomaskStatus {
    scalar(out, || {
        Ok(metrics::psnr(&deref(a, "a")?.0, &deref(b, "b")?.0, region(exclude))?.mean)
    })
}

/// Mean per-frame SSIM. `exclude` may be null.
///
/// # Safety
/// As [`vomask_psnr`].
#[no_mangle]
pub unsafe extern "C" fn vomask_ssim(
    a: *const VomaskFrames,
    b: *const VomaskFrames,
    exclude: *const VomaskMask,
    out: *mut f64,
) -> VomaskStatus {
    scalar(out, || {
        Ok(metrics::ssim(&deref(a, "a")?.0, &deref(b, "b")?.0, region(exclude))?.mean)
    })
}

/// Mean absolute consecutive-frame difference over 255. `exclude` may be null.
///
/// # Safety
/// `v` live handle; `exclude` null or live; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn vomask_temporal_flicker(v: *const VomaskFrames, exclude: *const VomaskMask, out: *mut f64) -> VomaskStatus {
    scalar(out, || Ok(metrics::temporal_flicker(&deref(v, "video")?.0, region(exclude))?.mean))
}

/// Region-consistency score of the `target` region in `v`.
///
/// # Safety
/// `v`, `target` live handles; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn vomask_region_consistency(v: *const VomaskFrames, target: *const VomaskMask, out: *mut f64) -> VomaskStatus {
    scalar(out, || {
        Ok(metrics::region_consistency(&deref(v, "video")?.0, &deref(target, "target")?.0)?.mean)
    })
}

/// Full metrics report as a JSON string; release it with
/// [`vomask_string_free`]. `gt` and `flags_json` may be null.
///
/// # Safety
/// `pred`, `mask` live handles; `gt` null or live; `flags_json` null or
/// NUL-terminated; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn vomask_evaluate(
    pred: *const VomaskFrames,
    gt: *const VomaskFrames,
    mask: *const VomaskMask,
    flags_json: *const c_char,
    out: *mut *mut c_char,
) -> VomaskStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("output pointer"));
        }
        let flags: EvalFlags = if flags_json.is_null() {
            EvalFlags::default()
        } else {
            serde_json::from_str(str_arg(flags_json, "flags")?).map_err(Error::from)?
        };
        let gt = gt.as_ref().map(|g| &g.0);
        let report = metrics::evaluate(&deref(pred, "pred")?.0, gt, &deref(mask, "mask")?.0, &flags)?;
        let s = serde_json::to_string(&report).map_err(Error::from)?;
        *out = CString::new(s).unwrap_or_default().into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vomask_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_mapping_is_distinct_per_family() {
        assert_eq!(status_of(&Error::BadVersion(9)), VomaskStatus::Format);
        assert_eq!(status_of(&Error::Config(String::new())), VomaskStatus::Config);
        assert_eq!(
            status_of(&Error::Io(std::io::Error::other("x"))),
            VomaskStatus::Io
        );
    }

    #[test]
    fn panics_become_status() {
        let s = guard(|| panic!("boom"));
        assert_eq!(s, VomaskStatus::Panic);
        let msg = unsafe { CStr::from_ptr(vomask_last_error()) };
        assert_eq!(msg.to_str().unwrap(), "internal panic");
    }

    #[test]
    fn version_is_nul_terminated() {
        let v = unsafe { CStr::from_ptr(vomask_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }
}
