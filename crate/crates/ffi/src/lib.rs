//! C ABI over `gotu-core`.
//!
//! Specs and results cross the boundary as opaque handles that the caller
//! releases with the matching `*_free` function. Every entry point returns a
//! [`GotuStatus`]; on failure the message is available from
//! [`gotu_last_error`] until the next failing call on the same thread.
//! Panics are caught and reported as [`GotuStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use gotu_core::experiment::{self, ExperimentSpec, RunOutput};
use gotu_core::gotu::example1_asymptotic;
use gotu_core::kernel::prop1_inverse_block;
use gotu_core::Error;

/// Result codes; the validation and numerical codes match the CLI exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GotuStatus {
    Ok = 0,
    Io = 1,
    Invalid = 2,
    Numerical = 3,
    NullPointer = 4,
    Panic = 5,
}

/// Opaque experiment specification.
pub struct GotuSpec {
    spec: ExperimentSpec,
}

/// Opaque run output; row labels stay valid until the handle is freed.
pub struct GotuResult {
    output: RunOutput,
    labels: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> GotuStatus {
    match e.exit_code() {
        1 => GotuStatus::Io,
        3 => GotuStatus::Numerical,
        _ => GotuStatus::Invalid,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (GotuStatus, String)>) -> GotuStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GotuStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside gotu".into());
            GotuStatus::Panic
        }
    }
}

fn core(e: Error) -> (GotuStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (GotuStatus, String) {
    (GotuStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (GotuStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (GotuStatus::Invalid, format!("{what} is not UTF-8")))
}

unsafe fn spec_mut<'a>(spec: *mut GotuSpec) -> Result<&'a mut GotuSpec, (GotuStatus, String)> {
    spec.as_mut().ok_or_else(|| null("spec"))
}

/// Message of the last failure on this thread, or null. Owned by the library.
#[no_mangle]
pub extern "C" fn gotu_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn gotu_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates the spec of a named preset.
///
/// # Safety
/// `name` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gotu_spec_from_preset(name: *const c_char, out: *mut *mut GotuSpec) -> GotuStatus {
    guard(|| {
        let name = str_arg(name, "name")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let spec = experiment::preset(name).map_err(core)?;
        *out = Box::into_raw(Box::new(GotuSpec { spec }));
        Ok(())
    })
}

/// Parses a key-value config (or a JSON spec export) into a spec.
///
/// # Safety
/// `text` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gotu_spec_from_config(text: *const c_char, out: *mut *mut GotuSpec) -> GotuStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let spec = if text.trim_start().starts_with('{') {
            let spec: ExperimentSpec = serde_json::from_str(text).map_err(|e| (GotuStatus::Invalid, e.to_string()))?;
            spec.validate().map_err(core)?;
            spec
        } else {
            ExperimentSpec::parse_config(text).map_err(core)?
        };
        *out = Box::into_raw(Box::new(GotuSpec { spec }));
        Ok(())
    })
}

/// Overrides seed, repetitions, width and sample count; zero keeps the
/// current repetitions, width or samples.
///
/// # Safety
/// `spec` must come from a `gotu_spec_*` constructor.
#[no_mangle]
pub unsafe extern "C" fn gotu_spec_configure(spec: *mut GotuSpec, seed: u64, repetitions: usize, width: usize, samples: usize) -> GotuStatus {
    guard(|| {
        let s = spec_mut(spec)?;
        let mut next = s.spec.clone();
        next.seed = seed;
        if repetitions > 0 {
            next.repetitions = repetitions;
        }
        if width > 0 {
            next.width = width;
        }
        if samples > 0 {
            next.samples = samples;
        }
        next.validate().map_err(core)?;
        s.spec = next;
        Ok(())
    })
}

/// JSON form of the spec; release it with [`gotu_string_free`].
///
/// # Safety
/// `spec` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gotu_spec_to_json(spec: *const GotuSpec, out: *mut *mut c_char) -> GotuStatus {
    guard(|| {
        let s = spec.as_ref().ok_or_else(|| null("spec"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let json = serde_json::to_string_pretty(&s.spec).expect("spec serializes");
        *out = CString::new(json).expect("json has no nul").into_raw();
        Ok(())
    })
}

/// # Safety
/// `spec` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gotu_spec_free(spec: *mut GotuSpec) {
    if !spec.is_null() {
        drop(Box::from_raw(spec));
    }
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn gotu_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Runs the experiment.
///
/// # Safety
/// `spec` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gotu_run(spec: *const GotuSpec, out: *mut *mut GotuResult) -> GotuStatus {
    guard(|| {
        let s = spec.as_ref().ok_or_else(|| null("spec"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let output = experiment::run_experiment(&s.spec).map_err(core)?;
        let labels = output.table.rows.iter().map(|r| CString::new(r.label.clone()).expect("labels have no nul")).collect();
        *out = Box::into_raw(Box::new(GotuResult { output, labels }));
        Ok(())
    })
}

/// Number of result rows, or zero for a null handle.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gotu_result_rows(result: *const GotuResult) -> usize {
    result.as_ref().map_or(0, |r| r.output.table.rows.len())
}

/// Row `i`: label (owned by the result), mean, std (NaN with one
/// repetition) and readout standard error.
///
/// # Safety
/// `result` must be a live handle; the out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn gotu_result_row(result: *const GotuResult, i: usize, label: *mut *const c_char, mean: *mut f64, std: *mut f64, stderr: *mut f64) -> GotuStatus {
    guard(|| {
        let r = result.as_ref().ok_or_else(|| null("result"))?;
        if label.is_null() || mean.is_null() || std.is_null() || stderr.is_null() {
            return Err(null("an output pointer"));
        }
        let row = r.output.table.rows.get(i).ok_or_else(|| (GotuStatus::Invalid, format!("row {i} out of range")))?;
        *label = r.labels[i].as_ptr();
        *mean = row.mean;
        *std = row.std.unwrap_or(f64::NAN);
        *stderr = row.stderr;
        Ok(())
    })
}

/// Writes `results.csv`, `spec.json` and the traces into `dir`.
///
/// # Safety
/// `result` must be a live handle and `dir` a nul-terminated path.
#[no_mangle]
pub unsafe extern "C" fn gotu_result_write(result: *const GotuResult, dir: *const c_char) -> GotuStatus {
    guard(|| {
        let r = result.as_ref().ok_or_else(|| null("result"))?;
        let dir = str_arg(dir, "dir")?;
        r.output.write_to(Path::new(dir)).map_err(core)
    })
}

/// # Safety
/// `result` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gotu_result_free(result: *mut GotuResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Minimizer `(ĝ(0), ĝ(e₁), ĝ(2e₁))` of the leading-order `(1+x)²` sparse
/// quadratic form for the constant target seen on `x₁ = 1`.
///
/// # Safety
/// `out` must point to three writable doubles.
#[no_mangle]
pub unsafe extern "C" fn gotu_example1_asymptotic(d: usize, out: *mut f64) -> GotuStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let (a, b, c) = example1_asymptotic(d).map_err(core)?;
        std::slice::from_raw_parts_mut(out, 3).copy_from_slice(&[a, b, c]);
        Ok(())
    })
}

/// Entries `(x, y, z, t)` of the inverse sparse `(1+x)²` kernel on the block
/// spanned by `{2eᵢ} ∪ {0}`: `x` on the `2eᵢ` diagonal, `y` between `2eᵢ` and
/// `2eⱼ`, `z` between `2eᵢ` and `0`, `t` at `0`.
///
/// # Safety
/// `out` must point to four writable doubles.
#[no_mangle]
pub unsafe extern "C" fn gotu_prop1_inverse_block(d: usize, out: *mut f64) -> GotuStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if d == 0 {
            return Err((GotuStatus::Invalid, "d must be positive".into()));
        }
        let (x, y, z, t) = prop1_inverse_block(d);
        std::slice::from_raw_parts_mut(out, 4).copy_from_slice(&[x, y, z, t]);
        Ok(())
    })
}
