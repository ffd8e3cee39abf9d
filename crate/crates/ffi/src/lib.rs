//! C ABI over the `hpun` library.
//!
//! Models are opaque heap handles created by `hpun_model_build` or
//! `hpun_model_load` and released with `hpun_model_free`. Every fallible call
//! returns an [`HpunStatus`]; on failure a description is kept per thread and
//! can be read with `hpun_last_error_message`.
//!
//! Images cross the boundary as planar RGB `f32` in `[0, 1]`, laid out as
//! three consecutive `height × width` planes.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use hpun::imaging::{psnr, rgb_to_y, ColorSpace, ImageBuf, ModelUpscaler, Upscaler};
use hpun::model::{count_multiadds, count_params};
use hpun::{Error, ErrorClass, Model, ModelSpec};

/// Result of every fallible call. The usage, data and numeric codes match
/// the exit codes of the `hpun` command-line tool.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HpunStatus {
    Ok = 0,
    /// A required pointer was null or a string was not UTF-8.
    InvalidArgument = 1,
    /// Bad configuration, unknown preset or a model/scale mismatch.
    Usage = 2,
    /// Unreadable or malformed files, wrong buffer sizes, bad dimensions.
    Data = 3,
    /// Non-finite values during computation.
    Numeric = 4,
    /// The library panicked; the handle involved should be freed.
    Internal = 5,
}

/// Opaque model handle.
pub struct HpunModel {
    model: Model<f32>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn fail(status: HpunStatus, msg: &str) -> HpunStatus {
    set_error(msg);
    status
}

fn status_of(e: &Error) -> HpunStatus {
    match e.class() {
        ErrorClass::Usage => HpunStatus::Usage,
        ErrorClass::Data => HpunStatus::Data,
        ErrorClass::Numeric => HpunStatus::Numeric,
    }
}

/// Runs `f`, turning library errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), HpunStatus>) -> HpunStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            HpunStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(_) => fail(HpunStatus::Internal, "internal panic"),
    }
}

fn lib<T>(r: hpun::Result<T>) -> Result<T, HpunStatus> {
    r.map_err(|e| fail(status_of(&e), &e.to_string()))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, HpunStatus> {
    if p.is_null() {
        return Err(fail(HpunStatus::InvalidArgument, &format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(HpunStatus::InvalidArgument, &format!("{what} is not UTF-8")))
}

unsafe fn model_arg<'a>(m: *const HpunModel) -> Result<&'a HpunModel, HpunStatus> {
    m.as_ref()
        .ok_or_else(|| fail(HpunStatus::InvalidArgument, "model handle is null"))
}

unsafe fn out_arg<'a, T>(p: *mut T) -> Result<&'a mut T, HpunStatus> {
    p.as_mut()
        .ok_or_else(|| fail(HpunStatus::InvalidArgument, "output pointer is null"))
}

unsafe fn planes<'a>(p: *const f32, width: u32, height: u32, what: &str) -> Result<&'a [f32], HpunStatus> {
    if p.is_null() {
        return Err(fail(HpunStatus::InvalidArgument, &format!("{what} is null")));
    }
    if width == 0 || height == 0 {
        return Err(fail(HpunStatus::Data, &format!("{what} has zero size")));
    }
    Ok(std::slice::from_raw_parts(p, 3 * width as usize * height as usize))
}

fn to_image(data: &[f32], width: u32, height: u32) -> Result<ImageBuf, HpunStatus> {
    let data = data.iter().map(|&v| v as f64).collect();
    lib(ImageBuf::new(width as usize, height as usize, ColorSpace::Rgb, data))
}

/// Static, NUL-terminated library version.
#[no_mangle]
pub extern "C" fn hpun_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or an empty string.
/// Valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn hpun_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Builds a freshly initialised model.
///
/// `preset` is one of `"hpun-s"`, `"hpun-m"`, `"hpun-l"` or `"toy"`;
/// `scale` is 2, 3 or 4.
///
/// # Safety
/// `preset` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hpun_model_build(
    preset: *const c_char,
    scale: u32,
    seed: u64,
    out: *mut *mut HpunModel,
) -> HpunStatus {
    guard(|| {
        let out = out_arg(out)?;
        let name = str_arg(preset, "preset")?;
        let spec = lib(ModelSpec::by_name(name, scale as usize))?;
        let model = lib(Model::<f32>::build(&spec, seed))?;
        *out = Box::into_raw(Box::new(HpunModel { model }));
        Ok(())
    })
}

/// Loads a checkpoint written by the library or the command-line tool.
///
/// # Safety
/// `path` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hpun_model_load(path: *const c_char, out: *mut *mut HpunModel) -> HpunStatus {
    guard(|| {
        let out = out_arg(out)?;
        let path = str_arg(path, "path")?;
        let model = lib(Model::<f32>::load(Path::new(path), None))?;
        *out = Box::into_raw(Box::new(HpunModel { model }));
        Ok(())
    })
}

/// Writes a checkpoint atomically.
///
/// # Safety
/// `model` must come from this library and `path` be a valid C string.
#[no_mangle]
pub unsafe extern "C" fn hpun_model_save(model: *const HpunModel, path: *const c_char) -> HpunStatus {
    guard(|| {
        let m = model_arg(model)?;
        let path = str_arg(path, "path")?;
        lib(m.model.save(Path::new(path)))
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hpun_model_free(model: *mut HpunModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Upscaling factor, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn hpun_model_scale(model: *const HpunModel) -> u32 {
    model.as_ref().map_or(0, |m| m.model.spec().scale as u32)
}

/// Learnable parameter count including biases, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn hpun_model_param_count(model: *const HpunModel) -> u64 {
    model.as_ref().map_or(0, |m| count_params(&m.model).total_params)
}

/// Multiply-accumulates needed to produce an `hr_width × hr_height` output.
/// Both sides must be multiples of twice the scale.
///
/// # Safety
/// `model` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hpun_model_multiadds(
    model: *const HpunModel,
    hr_width: u32,
    hr_height: u32,
    out: *mut u64,
) -> HpunStatus {
    guard(|| {
        let m = model_arg(model)?;
        let out = out_arg(out)?;
        let r = lib(count_multiadds(&m.model, (hr_width as usize, hr_height as usize)))?;
        *out = r.total_mult_adds;
        Ok(())
    })
}

/// Super-resolves one image.
///
/// `input` holds `3 × height × width` values; `output` must hold
/// `output_len = 3 × (scale·height) × (scale·width)` values and receives the
/// result clamped to `[0, 1]`.
///
/// # Safety
/// Buffers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn hpun_model_upscale(
    model: *const HpunModel,
    input: *const f32,
    width: u32,
    height: u32,
    output: *mut f32,
    output_len: usize,
) -> HpunStatus {
    guard(|| {
        let m = model_arg(model)?;
        let src = planes(input, width, height, "input")?;
        if output.is_null() {
            return Err(fail(HpunStatus::InvalidArgument, "output is null"));
        }
        let s = m.model.spec().scale;
        let need = 3 * s * s * width as usize * height as usize;
        if output_len != need {
            return Err(fail(
                HpunStatus::Data,
                &format!("output holds {output_len} values, need {need}"),
            ));
        }
        let lr = to_image(src, width, height)?;
        let sr = lib(ModelUpscaler::new(&m.model).upscale(&lr))?.clamp();
        let dst = std::slice::from_raw_parts_mut(output, need);
        for (d, &v) in dst.iter_mut().zip(sr.data()) {
            *d = v as f32;
        }
        Ok(())
    })
}

/// PSNR in dB on the luma channel between two planar RGB images, ignoring
/// `border` pixels on every side. Identical images give infinity.
///
/// # Safety
/// Both buffers must hold `3 × height × width` values.
#[no_mangle]
pub unsafe extern "C" fn hpun_psnr_y(
    a: *const f32,
    b: *const f32,
    width: u32,
    height: u32,
    border: u32,
    out: *mut f64,
) -> HpunStatus {
    guard(|| {
        let out = out_arg(out)?;
        let ya = lib(rgb_to_y(&to_image(planes(a, width, height, "a")?, width, height)?))?;
        let yb = lib(rgb_to_y(&to_image(planes(b, width, height, "b")?, width, height)?))?;
        *out = lib(psnr(&ya, &yb, border as usize))?;
        Ok(())
    })
}
