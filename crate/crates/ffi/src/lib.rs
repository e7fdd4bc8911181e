//! C ABI over `viewtok`.
//!
//! Every fallible call returns a [`VtStatus`] and writes results through out
//! pointers. On failure the message is kept per thread and read with
//! [`vt_last_error_message`]. Handles are opaque and each has a matching
//! `_free`. Panics are caught at the boundary and reported as
//! [`VtStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use viewtok::backend::mock::MockBackend;
use viewtok::backend::DiffusionBackend;
use viewtok::conditioning::PromptTemplate;
use viewtok::eval::report::scene_slot_for;
use viewtok::eval::{generate, psnr, ssim};
use viewtok::geometry::{classify_view, CameraPose, PoseKind, SphericalPose, ViewClass};
use viewtok::image::Image;
use viewtok::training::checkpoint::Checkpoint;
use viewtok::training::load_checkpoint;
use viewtok::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VtStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    /// Bad configuration or arguments.
    Usage = 3,
    /// Missing or malformed input data.
    Data = 4,
    /// A corrupt, truncated or mismatched checkpoint.
    Checkpoint = 5,
    Backend = 6,
    Panic = 7,
}

/// A frozen diffusion backend.
pub struct VtBackend {
    inner: Box<dyn DiffusionBackend>,
}

/// Trained mappers and their configuration.
pub struct VtCheckpoint {
    inner: Checkpoint,
}

/// An RGB image with values in `[0, 1]`, stored row-major, channels last.
pub struct VtImage {
    inner: Image,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn status_of(err: &Error) -> VtStatus {
    match err {
        Error::Checkpoint(_) | Error::DescriptorMismatch { .. } => VtStatus::Checkpoint,
        _ => match err.exit_code() {
            1 => VtStatus::Usage,
            3 => VtStatus::Backend,
            _ => VtStatus::Data,
        },
    }
}

struct Failure(VtStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

/// Runs `f`, clearing the last error on success and recording it otherwise.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> VtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            VtStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside viewtok");
            VtStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure(VtStatus::NullArgument, format!("{name} is null")))
    } else {
        Ok(())
    }
}

unsafe fn path_arg<'a>(p: *const c_char, name: &str) -> Result<&'a Path, Failure> {
    non_null(p, name)?;
    CStr::from_ptr(p)
        .to_str()
        .map(Path::new)
        .map_err(|_| Failure(VtStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call on the same thread.
#[no_mangle]
pub extern "C" fn vt_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn vt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Creates the bundled mock backend with default settings and `seed`.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn vt_mock_backend_new(seed: u64, out: *mut *mut VtBackend) -> VtStatus {
    guard(|| {
        non_null(out, "out")?;
        let backend = VtBackend {
            inner: Box::new(MockBackend::new(seed)),
        };
        *out = Box::into_raw(Box::new(backend));
        Ok(())
    })
}

/// # Safety
/// `backend` must come from [`vt_mock_backend_new`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn vt_backend_free(backend: *mut VtBackend) {
    if !backend.is_null() {
        drop(Box::from_raw(backend));
    }
}

/// Hex digest of the backend's frozen weights. Free with [`vt_string_free`].
///
/// # Safety
/// `backend` must be a live handle and `out` valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn vt_backend_weights_digest(backend: *const VtBackend, out: *mut *mut c_char) -> VtStatus {
    guard(|| {
        non_null(backend, "backend")?;
        non_null(out, "out")?;
        let digest = CString::new((*backend).inner.weights_digest()).expect("hex has no NUL");
        *out = digest.into_raw();
        Ok(())
    })
}

/// Loads and verifies a checkpoint. With a non-null `backend` the
/// checkpoint must have been written for that backend.
///
/// # Safety
/// `path` must be a NUL-terminated string, `backend` null or live, `out`
/// valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn vt_checkpoint_load(
    path: *const c_char,
    backend: *const VtBackend,
    out: *mut *mut VtCheckpoint,
) -> VtStatus {
    guard(|| {
        let path = path_arg(path, "path")?;
        non_null(out, "out")?;
        let b = backend.as_ref().map(|b| b.inner.as_ref());
        let inner = load_checkpoint(path, b)?;
        *out = Box::into_raw(Box::new(VtCheckpoint { inner }));
        Ok(())
    })
}

/// # Safety
/// `ckpt` must come from [`vt_checkpoint_load`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn vt_checkpoint_free(ckpt: *mut VtCheckpoint) {
    if !ckpt.is_null() {
        drop(Box::from_raw(ckpt));
    }
}

/// Optimizer steps the checkpoint was trained for.
///
/// # Safety
/// `ckpt` must be live and `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn vt_checkpoint_step(ckpt: *const VtCheckpoint, out: *mut u64) -> VtStatus {
    guard(|| {
        non_null(ckpt, "ckpt")?;
        non_null(out, "out")?;
        *out = (*ckpt).inner.step;
        Ok(())
    })
}

/// Number of scene tokens held by the checkpoint.
///
/// # Safety
/// `ckpt` must be live and `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn vt_checkpoint_scene_count(ckpt: *const VtCheckpoint, out: *mut usize) -> VtStatus {
    guard(|| {
        non_null(ckpt, "ckpt")?;
        non_null(out, "out")?;
        *out = (*ckpt).inner.models.scenes.len();
        Ok(())
    })
}

fn pose_in(kind: PoseKind, theta_deg: f64, phi_deg: f64, radius: f64) -> Result<CameraPose, Failure> {
    let s = SphericalPose::from_degrees(theta_deg, phi_deg, radius)?;
    Ok(match kind {
        PoseKind::Spherical => CameraPose::Spherical(s),
        PoseKind::ProjectionMatrix => CameraPose::from_matrix(s.to_matrix())?,
    })
}

/// Renders the checkpoint's scene at a camera on the sphere, angles in
/// degrees, with the standard prompt. A checkpoint with exactly one scene
/// token uses it; otherwise the class word fills the scene slot. `steps`
/// of 0 selects the backend default.
///
/// # Safety
/// Handles must be live and `out` valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn vt_generate_spherical(
    backend: *const VtBackend,
    ckpt: *const VtCheckpoint,
    theta_deg: f64,
    phi_deg: f64,
    radius: f64,
    steps: u32,
    seed: u64,
    out: *mut *mut VtImage,
) -> VtStatus {
    guard(|| {
        non_null(backend, "backend")?;
        non_null(ckpt, "ckpt")?;
        non_null(out, "out")?;
        let backend = (*backend).inner.as_ref();
        let ckpt = &(*ckpt).inner;
        ckpt.check_backend(backend)?;
        let slot = match ckpt.models.scenes.keys().next() {
            Some(id) if ckpt.models.scenes.len() == 1 => scene_slot_for(ckpt, id),
            _ => scene_slot_for(ckpt, ""),
        };
        let pose = pose_in(ckpt.models.normalizer.kind(), theta_deg, phi_deg, radius)?;
        let steps = if steps == 0 { backend.default_sampling_steps() } else { steps };
        let inner = generate(
            backend,
            &ckpt.models,
            &PromptTemplate::default_viewed(),
            &slot,
            Some(&pose),
            steps,
            seed,
        )?;
        *out = Box::into_raw(Box::new(VtImage { inner }));
        Ok(())
    })
}

/// Copies `height * width * channels` values into a new image.
///
/// # Safety
/// `data` must point to that many readable values; `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn vt_image_new(
    height: usize,
    width: usize,
    channels: usize,
    data: *const f64,
    out: *mut *mut VtImage,
) -> VtStatus {
    guard(|| {
        non_null(data, "data")?;
        non_null(out, "out")?;
        let n = height
            .checked_mul(width)
            .and_then(|v| v.checked_mul(channels))
            .ok_or_else(|| Failure(VtStatus::Usage, "image size overflows".into()))?;
        let values = std::slice::from_raw_parts(data, n).to_vec();
        let inner = Image::new(height, width, channels, values)?;
        *out = Box::into_raw(Box::new(VtImage { inner }));
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn vt_image_load_png(path: *const c_char, out: *mut *mut VtImage) -> VtStatus {
    guard(|| {
        let path = path_arg(path, "path")?;
        non_null(out, "out")?;
        let inner = Image::load_png(path)?;
        *out = Box::into_raw(Box::new(VtImage { inner }));
        Ok(())
    })
}

/// # Safety
/// `image` must be live and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn vt_image_save_png(image: *const VtImage, path: *const c_char) -> VtStatus {
    guard(|| {
        non_null(image, "image")?;
        let path = path_arg(path, "path")?;
        (*image).inner.save_png(path)?;
        Ok(())
    })
}

/// Writes height, width and channel count. Any out pointer may be null.
///
/// # Safety
/// `image` must be live; non-null out pointers valid for writes.
#[no_mangle]
pub unsafe extern "C" fn vt_image_shape(
    image: *const VtImage,
    height: *mut usize,
    width: *mut usize,
    channels: *mut usize,
) -> VtStatus {
    guard(|| {
        non_null(image, "image")?;
        let (h, w, c) = (*image).inner.shape();
        for (p, v) in [(height, h), (width, w), (channels, c)] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Borrowed pointer to the pixel values, valid while `image` lives.
///
/// # Safety
/// `image` must be live or null.
#[no_mangle]
pub unsafe extern "C" fn vt_image_data(image: *const VtImage) -> *const f64 {
    image.as_ref().map_or(ptr::null(), |i| i.inner.data().as_ptr())
}

/// # Safety
/// `image` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn vt_image_free(image: *mut VtImage) {
    if !image.is_null() {
        drop(Box::from_raw(image));
    }
}

/// PSNR in dB, capped at 100 for identical images.
///
/// # Safety
/// Both images must be live and `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn vt_psnr(a: *const VtImage, b: *const VtImage, out: *mut f64) -> VtStatus {
    guard(|| {
        non_null(a, "a")?;
        non_null(b, "b")?;
        non_null(out, "out")?;
        *out = psnr(&(*a).inner, &(*b).inner)?;
        Ok(())
    })
}

/// Mean SSIM over 11x11 Gaussian windows on luma.
///
/// # Safety
/// Both images must be live and `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn vt_ssim(a: *const VtImage, b: *const VtImage, out: *mut f64) -> VtStatus {
    guard(|| {
        non_null(a, "a")?;
        non_null(b, "b")?;
        non_null(out, "out")?;
        *out = ssim(&(*a).inner, &(*b).inner)?;
        Ok(())
    })
}

/// Writes 1 if the query camera lies in the convex hull of the training
/// cameras in (theta, phi), else 0. Angles in degrees.
///
/// # Safety
/// `train_theta` and `train_phi` must each hold `n` values; `out` valid for
/// a write.
#[no_mangle]
pub unsafe extern "C" fn vt_classify_view(
    theta_deg: f64,
    phi_deg: f64,
    train_theta: *const f64,
    train_phi: *const f64,
    n: usize,
    out: *mut i32,
) -> VtStatus {
    guard(|| {
        non_null(train_theta, "train_theta")?;
        non_null(train_phi, "train_phi")?;
        non_null(out, "out")?;
        let thetas = std::slice::from_raw_parts(train_theta, n);
        let phis = std::slice::from_raw_parts(train_phi, n);
        let train = thetas
            .iter()
            .zip(phis)
            .map(|(&t, &p)| Ok(CameraPose::Spherical(SphericalPose::from_degrees(t, p, 1.0)?)))
            .collect::<Result<Vec<_>, Error>>()?;
        let query = CameraPose::Spherical(SphericalPose::from_degrees(theta_deg, phi_deg, 1.0)?);
        *out = (classify_view(&query, &train)? == ViewClass::Interpolation) as i32;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_out_pointer_is_reported() {
        let status = unsafe { vt_mock_backend_new(0, ptr::null_mut()) };
        assert_eq!(status, VtStatus::NullArgument);
        let msg = unsafe { CStr::from_ptr(vt_last_error_message()) };
        assert_eq!(msg.to_str().unwrap(), "out is null");
    }

    #[test]
    fn success_clears_last_error() {
        unsafe {
            vt_mock_backend_new(0, ptr::null_mut());
            let mut b = ptr::null_mut();
            assert_eq!(vt_mock_backend_new(0, &mut b), VtStatus::Ok);
            assert!(vt_last_error_message().is_null());
            vt_backend_free(b);
        }
    }

    #[test]
    fn error_mapping() {
        assert_eq!(status_of(&Error::Checkpoint("x".into())), VtStatus::Checkpoint);
        assert_eq!(status_of(&Error::Config("x".into())), VtStatus::Usage);
        assert_eq!(status_of(&Error::Backend("x".into())), VtStatus::Backend);
        assert_eq!(status_of(&Error::EmptyTrainSet), VtStatus::Data);
    }
}
