//! C ABI for the DWC predictor and field simulator.
//!
//! Handles are opaque; every fallible call returns a [`DwcStatus`] and
//! writes its result through out-pointers. On failure the per-thread
//! message from [`dwc_last_error_message`] describes what went wrong.
//! The generated header lives at `include/dwc.h`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use dwc_core::controller::Predictor;
use dwc_core::dataset::{FeatureVector, FEATURE_DIM};
use dwc_core::field_sim::{Field, FieldConfig, MeasurementPoint};
use dwc_core::lstm::Checkpoint;

/// Status code of every fallible FFI call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DwcStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// A document failed to parse or validate.
    Parse = 3,
    /// A buffer or history had the wrong length.
    Dimension = 4,
    Io = 5,
    Internal = 6,
}

/// Opaque trained-model handle.
pub struct DwcPredictor {
    inner: Predictor,
}

/// Opaque field-simulator handle with its measurement grid resolved.
pub struct DwcField {
    field: Field,
    points: Vec<MeasurementPoint>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let sanitized = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = sanitized);
}

fn fail(status: DwcStatus, msg: &str) -> DwcStatus {
    set_error(msg);
    status
}

fn status_for(err: &dwc_core::Error) -> DwcStatus {
    match err {
        dwc_core::Error::Format(_) | dwc_core::Error::Config(_) => DwcStatus::Parse,
        dwc_core::Error::Argument(_) => DwcStatus::Dimension,
        dwc_core::Error::Io(_) => DwcStatus::Io,
        _ => DwcStatus::Internal,
    }
}

/// Guards against panics crossing the FFI boundary.
fn guarded(f: impl FnOnce() -> DwcStatus) -> DwcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(DwcStatus::Internal, "internal panic"),
    }
}

unsafe fn cstr_arg<'a>(ptr: *const c_char) -> Result<&'a str, DwcStatus> {
    if ptr.is_null() {
        return Err(fail(DwcStatus::NullArgument, "null string argument"));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| fail(DwcStatus::InvalidUtf8, "string argument is not UTF-8"))
}

/// Message describing the most recent failure on this thread. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dwc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn dwc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Loads a model checkpoint from a JSON file.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
/// A non-null result handle must be released with [`dwc_predictor_free`].
#[no_mangle]
pub unsafe extern "C" fn dwc_predictor_load_file(
    path: *const c_char,
    out: *mut *mut DwcPredictor,
) -> DwcStatus {
    guarded(|| {
        if out.is_null() {
            return fail(DwcStatus::NullArgument, "null out pointer");
        }
        let path = match cstr_arg(path) {
            Ok(p) => p,
            Err(status) => return status,
        };
        match Checkpoint::load(Path::new(path)).and_then(|c| Predictor::from_checkpoint(&c)) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(DwcPredictor { inner }));
                DwcStatus::Ok
            }
            Err(e) => fail(status_for(&e), &e.to_string()),
        }
    })
}

/// Parses a model checkpoint from a JSON document in memory.
///
/// # Safety
/// `json` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dwc_predictor_from_json(
    json: *const c_char,
    out: *mut *mut DwcPredictor,
) -> DwcStatus {
    guarded(|| {
        if out.is_null() {
            return fail(DwcStatus::NullArgument, "null out pointer");
        }
        let json = match cstr_arg(json) {
            Ok(j) => j,
            Err(status) => return status,
        };
        match Checkpoint::from_json(json).and_then(|c| Predictor::from_checkpoint(&c)) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(DwcPredictor { inner }));
                DwcStatus::Ok
            }
            Err(e) => fail(status_for(&e), &e.to_string()),
        }
    })
}

/// Number of history steps one prediction consumes.
///
/// # Safety
/// `predictor` must be a live handle from a `dwc_predictor_*` constructor.
#[no_mangle]
pub unsafe extern "C" fn dwc_predictor_lookback(predictor: *const DwcPredictor) -> usize {
    if predictor.is_null() {
        return 0;
    }
    (*predictor).inner.lookback()
}

/// Predicts the next peak position from a measurement history.
///
/// `history` holds `lookback` rows of 4 doubles each, row-major, in raw
/// units: time-step index, strength (A/m), point x (m), point y (m).
/// `len` is the total number of doubles. The predicted coordinates are
/// written to `out_x` and `out_y` in meters.
///
/// # Safety
/// `predictor` must be a live handle; `history` must point to `len`
/// readable doubles; `out_x` and `out_y` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn dwc_predictor_predict(
    predictor: *const DwcPredictor,
    history: *const f64,
    len: usize,
    out_x: *mut f64,
    out_y: *mut f64,
) -> DwcStatus {
    guarded(|| {
        if predictor.is_null() || history.is_null() || out_x.is_null() || out_y.is_null() {
            return fail(DwcStatus::NullArgument, "null argument");
        }
        let inner = &(*predictor).inner;
        let expected = inner.lookback() * FEATURE_DIM;
        if len != expected {
            return fail(
                DwcStatus::Dimension,
                &format!("history has {len} doubles, expected {expected}"),
            );
        }
        let values = std::slice::from_raw_parts(history, len);
        let rows: Vec<FeatureVector> = values
            .chunks_exact(FEATURE_DIM)
            .map(|c| FeatureVector {
                t_step: c[0] as u64,
                a: c[1],
                p_x: c[2],
                p_y: c[3],
            })
            .collect();
        match inner.predict_position(&rows) {
            Ok((x, y)) => {
                *out_x = x;
                *out_y = y;
                DwcStatus::Ok
            }
            Err(e) => fail(status_for(&e), &e.to_string()),
        }
    })
}

/// Releases a predictor handle. Null is a no-op.
///
/// # Safety
/// `predictor` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dwc_predictor_free(predictor: *mut DwcPredictor) {
    if !predictor.is_null() {
        drop(Box::from_raw(predictor));
    }
}

fn new_field(config: FieldConfig, out: *mut *mut DwcField) -> DwcStatus {
    match Field::new(config) {
        Ok(field) => {
            let points = field.generate_points();
            unsafe {
                *out = Box::into_raw(Box::new(DwcField { field, points }));
            }
            DwcStatus::Ok
        }
        Err(e) => fail(status_for(&e), &e.to_string()),
    }
}

/// Creates a field simulator from a field-config JSON document.
///
/// # Safety
/// `json` must be a valid NUL-terminated string and `out` a valid pointer.
/// A non-null result handle must be released with [`dwc_field_free`].
#[no_mangle]
pub unsafe extern "C" fn dwc_field_from_json(
    json: *const c_char,
    out: *mut *mut DwcField,
) -> DwcStatus {
    guarded(|| {
        if out.is_null() {
            return fail(DwcStatus::NullArgument, "null out pointer");
        }
        let json = match cstr_arg(json) {
            Ok(j) => j,
            Err(status) => return status,
        };
        match serde_json::from_str::<FieldConfig>(json) {
            Ok(config) => new_field(config, out),
            Err(e) => fail(DwcStatus::Parse, &e.to_string()),
        }
    })
}

/// Creates a field simulator with the built-in default configuration.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dwc_field_default(out: *mut *mut DwcField) -> DwcStatus {
    guarded(|| {
        if out.is_null() {
            return fail(DwcStatus::NullArgument, "null out pointer");
        }
        new_field(FieldConfig::default(), out)
    })
}

/// Number of measurement points on the field's grid.
///
/// # Safety
/// `field` must be a live handle from a `dwc_field_*` constructor.
#[no_mangle]
pub unsafe extern "C" fn dwc_field_n_points(field: *const DwcField) -> usize {
    if field.is_null() {
        return 0;
    }
    (*field).points.len()
}

/// Copies the grid coordinates as interleaved `(x, y)` pairs.
///
/// `cap` is the capacity of `out_xy` in doubles and must be at least
/// `2 * n_points`.
///
/// # Safety
/// `field` must be a live handle; `out_xy` must point to `cap` writable
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn dwc_field_points(
    field: *const DwcField,
    out_xy: *mut f64,
    cap: usize,
) -> DwcStatus {
    guarded(|| {
        if field.is_null() || out_xy.is_null() {
            return fail(DwcStatus::NullArgument, "null argument");
        }
        let points = &(*field).points;
        if cap < 2 * points.len() {
            return fail(
                DwcStatus::Dimension,
                &format!("buffer holds {cap} doubles, need {}", 2 * points.len()),
            );
        }
        let out = std::slice::from_raw_parts_mut(out_xy, 2 * points.len());
        for (i, p) in points.iter().enumerate() {
            out[2 * i] = p.x;
            out[2 * i + 1] = p.y;
        }
        DwcStatus::Ok
    })
}

/// Measures every grid point at time `t` (seconds) into `out_strengths`.
///
/// `cap` is the capacity of `out_strengths` in doubles and must be at
/// least `n_points`.
///
/// # Safety
/// `field` must be a live handle; `out_strengths` must point to `cap`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn dwc_field_sample(
    field: *const DwcField,
    t: f64,
    out_strengths: *mut f64,
    cap: usize,
) -> DwcStatus {
    guarded(|| {
        if field.is_null() || out_strengths.is_null() {
            return fail(DwcStatus::NullArgument, "null argument");
        }
        let handle = &*field;
        if cap < handle.points.len() {
            return fail(
                DwcStatus::Dimension,
                &format!("buffer holds {cap} doubles, need {}", handle.points.len()),
            );
        }
        match handle.field.sample_all(&handle.points, t) {
            Ok(sample) => {
                let out = std::slice::from_raw_parts_mut(out_strengths, handle.points.len());
                out.copy_from_slice(&sample.strengths);
                DwcStatus::Ok
            }
            Err(e) => fail(status_for(&e), &e.to_string()),
        }
    })
}

/// Index and strength of the strongest grid point at time `t`.
///
/// # Safety
/// `field` must be a live handle; `out_index` and `out_strength` must be
/// valid pointers.
#[no_mangle]
pub unsafe extern "C" fn dwc_field_argmax(
    field: *const DwcField,
    t: f64,
    out_index: *mut usize,
    out_strength: *mut f64,
) -> DwcStatus {
    guarded(|| {
        if field.is_null() || out_index.is_null() || out_strength.is_null() {
            return fail(DwcStatus::NullArgument, "null argument");
        }
        let handle = &*field;
        match handle
            .field
            .sample_all(&handle.points, t)
            .and_then(|s| dwc_core::field_sim::argmax_point(&s))
        {
            Ok((index, strength)) => {
                *out_index = index;
                *out_strength = strength;
                DwcStatus::Ok
            }
            Err(e) => fail(status_for(&e), &e.to_string()),
        }
    })
}

/// Releases a field handle. Null is a no-op.
///
/// # Safety
/// `field` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dwc_field_free(field: *mut DwcField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ptr;

    fn make_field() -> *mut DwcField {
        let mut handle: *mut DwcField = ptr::null_mut();
        let status = unsafe { dwc_field_default(&mut handle) };
        assert_eq!(status, DwcStatus::Ok);
        assert!(!handle.is_null());
        handle
    }

    #[test]
    fn field_handle_samples_and_frees() {
        let field = make_field();
        unsafe {
            assert_eq!(dwc_field_n_points(field), 20);

            let mut xy = vec![0.0; 40];
            assert_eq!(dwc_field_points(field, xy.as_mut_ptr(), 40), DwcStatus::Ok);
            assert!(xy.iter().any(|&v| v != 0.0));

            let mut strengths = vec![0.0; 20];
            assert_eq!(
                dwc_field_sample(field, 0.4, strengths.as_mut_ptr(), 20),
                DwcStatus::Ok
            );
            assert!(strengths.iter().all(|&s| s >= 0.0));

            let mut idx = 0usize;
            let mut peak = 0.0f64;
            assert_eq!(
                dwc_field_argmax(field, 0.4, &mut idx, &mut peak),
                DwcStatus::Ok
            );
            assert_eq!(peak, strengths[idx]);

            // undersized buffer is a dimension error
            assert_eq!(
                dwc_field_sample(field, 0.4, strengths.as_mut_ptr(), 3),
                DwcStatus::Dimension
            );
            let msg = CStr::from_ptr(dwc_last_error_message());
            assert!(msg.to_str().unwrap().contains("buffer"));

            dwc_field_free(field);
        }
    }

    #[test]
    fn bad_config_json_reports_parse_error() {
        let mut handle: *mut DwcField = ptr::null_mut();
        let json = CString::new("{ not json").unwrap();
        let status = unsafe { dwc_field_from_json(json.as_ptr(), &mut handle) };
        assert_eq!(status, DwcStatus::Parse);
        assert!(handle.is_null());
    }

    fn training_checkpoint_json() -> CString {
        use dwc_core::dataset::prepare;
        use dwc_core::lstm::{save_checkpoint, train, TrainConfig};

        let raw: Vec<FeatureVector> = (0..80)
            .map(|i| {
                let t = i as f64 * 0.1;
                FeatureVector {
                    t_step: i as u64,
                    a: 30.0 + 3.0 * t.sin(),
                    p_x: 0.05 * t.cos(),
                    p_y: 0.05 * t.sin(),
                }
            })
            .collect();
        let splits = prepare(&raw, 10, 1, 0.1, 10).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.01,
            batch_size: 8,
            max_epochs: 2,
            hidden_units: 4,
            rng_seed: 3,
            ..TrainConfig::default()
        };
        let (params, history) = train(&splits, &cfg).unwrap();
        let json = save_checkpoint(&params, &splits.scaler, 10, 1, cfg, history).unwrap();
        CString::new(json).unwrap()
    }

    #[test]
    fn predictor_roundtrip_through_the_abi() {
        let json = training_checkpoint_json();
        let mut handle: *mut DwcPredictor = ptr::null_mut();
        unsafe {
            assert_eq!(
                dwc_predictor_from_json(json.as_ptr(), &mut handle),
                DwcStatus::Ok
            );
            let l = dwc_predictor_lookback(handle);
            assert_eq!(l, 10);

            let history: Vec<f64> = (0..l)
                .flat_map(|i| {
                    let t = i as f64 * 0.1;
                    [i as f64, 30.0 + 3.0 * t.sin(), 0.05 * t.cos(), 0.05 * t.sin()]
                })
                .collect();
            let (mut x, mut y) = (0.0f64, 0.0f64);
            assert_eq!(
                dwc_predictor_predict(handle, history.as_ptr(), history.len(), &mut x, &mut y),
                DwcStatus::Ok
            );
            assert!(x.is_finite() && y.is_finite());

            // wrong history length
            assert_eq!(
                dwc_predictor_predict(handle, history.as_ptr(), 8, &mut x, &mut y),
                DwcStatus::Dimension
            );
            // null handling
            assert_eq!(
                dwc_predictor_predict(ptr::null(), history.as_ptr(), 40, &mut x, &mut y),
                DwcStatus::NullArgument
            );
            dwc_predictor_free(handle);
        }
    }

    #[test]
    fn load_file_io_error() {
        let path = CString::new("/nonexistent/checkpoint.json").unwrap();
        let mut handle: *mut DwcPredictor = ptr::null_mut();
        let status = unsafe { dwc_predictor_load_file(path.as_ptr(), &mut handle) };
        assert_eq!(status, DwcStatus::Io);
    }

    #[test]
    fn version_is_a_cstring() {
        let v = unsafe { CStr::from_ptr(dwc_version()) };
        assert!(!v.to_str().unwrap().is_empty());
    }
}
