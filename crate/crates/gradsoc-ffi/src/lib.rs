//! C interface to the gradostat cone-optimization library.
//!
//! Conventions: objects are opaque pointers created and freed here; strings
//! returned by the library are NUL-terminated and must be released with
//! [`gradsoc_string_free`]; functions returning `int32_t` use the run exit
//! codes (0 ok, 2 infeasible, 3 solver failure, 4 bad input). The last error
//! message is kept per thread and read with [`gradsoc_last_error`].

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::path::Path;

use gradsoc::models::ModelKind;
use gradsoc::run::{run_scenario, RunMode, RunOutput, EXIT_OK};
use gradsoc::scenario::{generate_example, Scenario};

pub const GRADSOC_OK: i32 = 0;
pub const GRADSOC_INFEASIBLE: i32 = 2;
pub const GRADSOC_SOLVER_FAILURE: i32 = 3;
pub const GRADSOC_BAD_INPUT: i32 = 4;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

/// Scenario handle (opaque).
pub struct GradsocScenario {
    inner: Scenario,
}

/// Finished run handle (opaque).
pub struct GradsocRun {
    inner: RunOutput,
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `cap`). Returns the full message length.
///
/// # Safety
/// `buf` must point to `cap` writable bytes (or be NULL with `cap` 0).
#[no_mangle]
pub unsafe extern "C" fn gradsoc_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes_with_nul();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap);
            std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            // always terminate
            *buf.add(n - 1) = 0;
        }
        bytes.len() - 1
    })
}

unsafe fn cstr_arg<'a>(ptr: *const c_char) -> Option<&'a str> {
    if ptr.is_null() {
        set_error("null pointer argument");
        return None;
    }
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Some(s),
        Err(_) => {
            set_error("argument is not valid UTF-8");
            None
        }
    }
}

/// Parses a scenario from its JSON form. Returns NULL on error.
///
/// # Safety
/// `json` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn gradsoc_scenario_from_json(json: *const c_char) -> *mut GradsocScenario {
    let Some(text) = cstr_arg(json) else {
        return std::ptr::null_mut();
    };
    match Scenario::from_json(text) {
        Ok(inner) => Box::into_raw(Box::new(GradsocScenario { inner })),
        Err(e) => {
            set_error(&e.to_string());
            std::ptr::null_mut()
        }
    }
}

/// Builds a built-in example scenario
/// (`four_tank`, `four_tank_modified`, `dynamic_four_tank`,
/// `wheel:<n>:<easy|hard>`). Returns NULL on error.
///
/// # Safety
/// `name` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn gradsoc_scenario_example(name: *const c_char) -> *mut GradsocScenario {
    let Some(name) = cstr_arg(name) else {
        return std::ptr::null_mut();
    };
    match generate_example(name) {
        Ok(inner) => Box::into_raw(Box::new(GradsocScenario { inner })),
        Err(e) => {
            set_error(&e.to_string());
            std::ptr::null_mut()
        }
    }
}

/// Serializes the scenario to JSON. Free with [`gradsoc_string_free`].
///
/// # Safety
/// `sc` must be a live scenario handle.
#[no_mangle]
pub unsafe extern "C" fn gradsoc_scenario_to_json(sc: *const GradsocScenario) -> *mut c_char {
    if sc.is_null() {
        set_error("null scenario");
        return std::ptr::null_mut();
    }
    let text = (*sc).inner.to_json();
    CString::new(text).map_or(std::ptr::null_mut(), CString::into_raw)
}

/// Switches the growth model (`"rc"`, `"rmx"`, `"rme"`), realigning the
/// growth-law parameters the way the command line does.
///
/// # Safety
/// `sc` must be a live scenario handle; `kind` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn gradsoc_scenario_set_model(
    sc: *mut GradsocScenario,
    kind: *const c_char,
) -> i32 {
    if sc.is_null() {
        set_error("null scenario");
        return GRADSOC_BAD_INPUT;
    }
    let Some(kind) = cstr_arg(kind) else {
        return GRADSOC_BAD_INPUT;
    };
    let kind = match kind {
        "rc" => ModelKind::Rc,
        "rmx" => ModelKind::Rmx,
        "rme" => ModelKind::Rme,
        other => {
            set_error(&format!("unknown model `{other}`"));
            return GRADSOC_BAD_INPUT;
        }
    };
    let owned = std::ptr::read(sc);
    let updated = GradsocScenario {
        inner: owned.inner.with_model(kind),
    };
    std::ptr::write(sc, updated);
    GRADSOC_OK
}

/// # Safety
/// `sc` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn gradsoc_scenario_free(sc: *mut GradsocScenario) {
    if !sc.is_null() {
        drop(Box::from_raw(sc));
    }
}

/// Runs a scenario in its natural mode (steady, design, or dynamic).
/// `out_dir` may be NULL to skip artifact files. Returns NULL only on
/// invalid arguments; solver trouble is reported through the exit code.
///
/// # Safety
/// `sc` must be a live scenario handle; `out_dir` NULL or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn gradsoc_run(
    sc: *const GradsocScenario,
    out_dir: *const c_char,
) -> *mut GradsocRun {
    if sc.is_null() {
        set_error("null scenario");
        return std::ptr::null_mut();
    }
    let dir = if out_dir.is_null() {
        None
    } else {
        match cstr_arg(out_dir) {
            Some(s) => Some(s.to_string()),
            None => return std::ptr::null_mut(),
        }
    };
    let out = run_scenario(&(*sc).inner, dir.as_deref().map(Path::new), RunMode::Auto);
    if out.exit_code != EXIT_OK {
        set_error(&out.summary());
    }
    Box::into_raw(Box::new(GradsocRun { inner: out }))
}

/// # Safety
/// `run` must be a live run handle.
#[no_mangle]
pub unsafe extern "C" fn gradsoc_run_exit_code(run: *const GradsocRun) -> i32 {
    if run.is_null() {
        return GRADSOC_BAD_INPUT;
    }
    (*run).inner.exit_code
}

/// Objective value (NaN when the run produced none).
///
/// # Safety
/// `run` must be a live run handle.
#[no_mangle]
pub unsafe extern "C" fn gradsoc_run_objective(run: *const GradsocRun) -> f64 {
    if run.is_null() {
        return f64::NAN;
    }
    (*run).inner.objective.unwrap_or(f64::NAN)
}

/// Worst relative gap between kinetics and production (NaN when absent).
///
/// # Safety
/// `run` must be a live run handle.
#[no_mangle]
pub unsafe extern "C" fn gradsoc_run_exactness(run: *const GradsocRun) -> f64 {
    if run.is_null() {
        return f64::NAN;
    }
    (*run).inner.exactness.unwrap_or(f64::NAN)
}

/// Status string ("optimal", "infeasible", ...). Free with
/// [`gradsoc_string_free`].
///
/// # Safety
/// `run` must be a live run handle.
#[no_mangle]
pub unsafe extern "C" fn gradsoc_run_status(run: *const GradsocRun) -> *mut c_char {
    if run.is_null() {
        return std::ptr::null_mut();
    }
    CString::new((*run).inner.status.clone()).map_or(std::ptr::null_mut(), CString::into_raw)
}

/// One-line human summary. Free with [`gradsoc_string_free`].
///
/// # Safety
/// `run` must be a live run handle.
#[no_mangle]
pub unsafe extern "C" fn gradsoc_run_summary(run: *const GradsocRun) -> *mut c_char {
    if run.is_null() {
        return std::ptr::null_mut();
    }
    CString::new((*run).inner.summary()).map_or(std::ptr::null_mut(), CString::into_raw)
}

/// Number of activated pipes of a design run.
///
/// # Safety
/// `run` must be a live run handle.
#[no_mangle]
pub unsafe extern "C" fn gradsoc_run_pipe_count(run: *const GradsocRun) -> usize {
    if run.is_null() {
        return 0;
    }
    (*run).inner.chosen_pipes.len()
}

/// Endpoints (1-based) of the idx-th activated pipe.
///
/// # Safety
/// `run` must be a live run handle; `from`/`to` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gradsoc_run_pipe(
    run: *const GradsocRun,
    idx: usize,
    from: *mut u32,
    to: *mut u32,
) -> i32 {
    if run.is_null() || from.is_null() || to.is_null() {
        return GRADSOC_BAD_INPUT;
    }
    let pipes = &(*run).inner.chosen_pipes;
    match pipes.get(idx).copied() {
        Some((a, b)) => {
            *from = a as u32;
            *to = b as u32;
            GRADSOC_OK
        }
        None => {
            set_error("pipe index out of range");
            GRADSOC_BAD_INPUT
        }
    }
}

/// # Safety
/// `run` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn gradsoc_run_free(run: *mut GradsocRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// # Safety
/// `s` must be a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gradsoc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
