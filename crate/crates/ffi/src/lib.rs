//! C ABI over the gnnav simulator, estimator and explorer.
//!
//! Every fallible function returns a [`GnnavStatus`]; on failure the message
//! is kept per thread and can be fetched with [`gnnav_last_error`]. Structured
//! arguments and results travel as JSON strings. Strings returned through
//! `out` pointers are owned by the caller and released with
//! [`gnnav_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use gnnav::estimator::Estimator;
use gnnav::explorer::{explore, DesignSpace, Requirements};
use gnnav::graph::{generate_power_law, Graph, GraphProfile};
use gnnav::runtime::{simulate, Candidate, HardwareSpec, SimOptions};
use gnnav::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GnnavStatus {
    Ok = 0,
    /// Null pointer, bad UTF-8 or an out-of-range argument.
    InvalidArgument = 1,
    /// Malformed JSON or graph file.
    Parse = 2,
    Io = 3,
    /// The candidate does not fit in device memory.
    Infeasible = 4,
    /// No candidate satisfies the requirements.
    NoFeasible = 5,
    /// The estimator could not be fitted or is unusable.
    Estimator = 6,
    /// A Rust panic was caught at the boundary.
    Internal = 7,
}

/// Opaque graph handle.
pub struct GnnavGraph {
    graph: Graph,
    profile: GraphProfile,
}

/// Opaque fitted estimator handle.
pub struct GnnavEstimator {
    inner: Estimator,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(GnnavStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Param(_) => GnnavStatus::InvalidArgument,
            Error::Parse { .. } | Error::Format(_) | Error::NoEdges(_) | Error::Json(_) | Error::Csv(_) => GnnavStatus::Parse,
            Error::Io(_) => GnnavStatus::Io,
            Error::Infeasible { .. } => GnnavStatus::Infeasible,
            Error::NoFeasible { .. } => GnnavStatus::NoFeasible,
            Error::State(_) | Error::Fit { .. } => GnnavStatus::Estimator,
        };
        Failure(status, e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure(GnnavStatus::Parse, e.to_string())
    }
}

fn invalid(msg: &str) -> Failure {
    Failure(GnnavStatus::InvalidArgument, msg.to_string())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> GnnavStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            GnnavStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".to_string());
            GnnavStatus::Internal
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(invalid(&format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(&format!("{what} is not UTF-8")))
}

/// JSON argument that falls back to its default when null.
unsafe fn json_or_default<T: Default + for<'de> serde::Deserialize<'de>>(p: *const c_char, what: &str) -> Result<T, Failure> {
    if p.is_null() {
        return Ok(T::default());
    }
    Ok(serde_json::from_str(text(p, what)?)?)
}

unsafe fn emit(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let c = CString::new(s).map_err(|_| invalid("output contains NUL"))?;
    *out = c.into_raw();
    Ok(())
}

fn check_out<T>(out: *mut *mut T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(invalid("out pointer is null"));
    }
    Ok(())
}

/// Library version, statically allocated.
#[no_mangle]
pub extern "C" fn gnnav_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. The caller
/// frees the copy with [`gnnav_string_free`].
#[no_mangle]
pub extern "C" fn gnnav_last_error() -> *mut c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null_mut(), |c| c.clone().into_raw()))
}

/// Release a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn gnnav_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Generate a synthetic power-law graph.
///
/// # Safety
/// `out` must be a valid pointer to write the handle to.
#[no_mangle]
pub unsafe extern "C" fn gnnav_graph_generate(
    num_vertices: usize,
    m: usize,
    n_attr: usize,
    num_classes: usize,
    seed: u64,
    out: *mut *mut GnnavGraph,
) -> GnnavStatus {
    guard(|| {
        check_out(out)?;
        let graph = generate_power_law(num_vertices, m, n_attr, num_classes, seed)?;
        let profile = GraphProfile::of(&graph);
        *out = Box::into_raw(Box::new(GnnavGraph { graph, profile }));
        Ok(())
    })
}

/// Load a graph written by [`gnnav_graph_save`] or the command-line tool.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gnnav_graph_load(path: *const c_char, out: *mut *mut GnnavGraph) -> GnnavStatus {
    guard(|| {
        check_out(out)?;
        let graph = Graph::load(text(path, "path")?)?;
        let profile = GraphProfile::of(&graph);
        *out = Box::into_raw(Box::new(GnnavGraph { graph, profile }));
        Ok(())
    })
}

/// # Safety
/// `g` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn gnnav_graph_save(g: *const GnnavGraph, path: *const c_char) -> GnnavStatus {
    guard(|| {
        let g = g.as_ref().ok_or_else(|| invalid("graph is null"))?;
        g.graph.save(text(path, "path")?)?;
        Ok(())
    })
}

/// Vertex count, or 0 for a null handle.
///
/// # Safety
/// `g` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gnnav_graph_num_vertices(g: *const GnnavGraph) -> usize {
    g.as_ref().map_or(0, |g| g.graph.num_vertices())
}

/// Undirected edge count, or 0 for a null handle.
///
/// # Safety
/// `g` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gnnav_graph_num_edges(g: *const GnnavGraph) -> usize {
    g.as_ref().map_or(0, |g| g.graph.num_edges())
}

/// Degree summary of the graph as JSON.
///
/// # Safety
/// `g` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gnnav_graph_profile_json(g: *const GnnavGraph, out: *mut *mut c_char) -> GnnavStatus {
    guard(|| {
        check_out(out)?;
        let g = g.as_ref().ok_or_else(|| invalid("graph is null"))?;
        emit(out, serde_json::to_string(&g.profile)?)
    })
}

/// # Safety
/// `g` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn gnnav_graph_free(g: *mut GnnavGraph) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Simulate a candidate (JSON) on `g` and return its profiling record as
/// JSON. A null `hardware_json` selects the default hardware.
///
/// # Safety
/// Pointers must be live handles, NUL-terminated strings or valid out
/// pointers as documented.
#[no_mangle]
pub unsafe extern "C" fn gnnav_simulate_json(
    g: *const GnnavGraph,
    candidate_json: *const c_char,
    hardware_json: *const c_char,
    epochs: usize,
    seed: u64,
    out: *mut *mut c_char,
) -> GnnavStatus {
    guard(|| {
        check_out(out)?;
        let g = g.as_ref().ok_or_else(|| invalid("graph is null"))?;
        let cand: Candidate = serde_json::from_str(text(candidate_json, "candidate")?)?;
        let hw: HardwareSpec = json_or_default(hardware_json, "hardware")?;
        let sim = simulate(&g.graph, &cand, &hw, &SimOptions::new(epochs, seed))?;
        emit(out, serde_json::to_string(&sim.record)?)
    })
}

/// Parse an estimator document.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gnnav_estimator_from_json(json: *const c_char, out: *mut *mut GnnavEstimator) -> GnnavStatus {
    guard(|| {
        check_out(out)?;
        let inner = Estimator::from_json(text(json, "json")?)?;
        *out = Box::into_raw(Box::new(GnnavEstimator { inner }));
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gnnav_estimator_load(path: *const c_char, out: *mut *mut GnnavEstimator) -> GnnavStatus {
    guard(|| {
        check_out(out)?;
        let inner = Estimator::load(text(path, "path")?)?;
        *out = Box::into_raw(Box::new(GnnavEstimator { inner }));
        Ok(())
    })
}

/// Estimated performance of a candidate, as JSON with the intermediate
/// quantities.
///
/// # Safety
/// Pointers must be live handles, NUL-terminated strings or valid out
/// pointers as documented.
#[no_mangle]
pub unsafe extern "C" fn gnnav_estimator_predict_json(
    est: *const GnnavEstimator,
    candidate_json: *const c_char,
    hardware_json: *const c_char,
    out: *mut *mut c_char,
) -> GnnavStatus {
    guard(|| {
        check_out(out)?;
        let est = est.as_ref().ok_or_else(|| invalid("estimator is null"))?;
        let cand: Candidate = serde_json::from_str(text(candidate_json, "candidate")?)?;
        let hw: HardwareSpec = json_or_default(hardware_json, "hardware")?;
        let p = est.inner.predict_detailed(&cand, &hw)?;
        emit(out, serde_json::to_string(&p)?)
    })
}

/// Explore a design space and return the guideline as JSON. Null
/// `space_json`, `hardware_json` or `requirements_json` select defaults.
///
/// # Safety
/// Pointers must be live handles, NUL-terminated strings or valid out
/// pointers as documented.
#[no_mangle]
pub unsafe extern "C" fn gnnav_explore_json(
    est: *const GnnavEstimator,
    space_json: *const c_char,
    hardware_json: *const c_char,
    requirements_json: *const c_char,
    out: *mut *mut c_char,
) -> GnnavStatus {
    guard(|| {
        check_out(out)?;
        let est = est.as_ref().ok_or_else(|| invalid("estimator is null"))?;
        let space: DesignSpace = json_or_default(space_json, "space")?;
        let hw: HardwareSpec = json_or_default(hardware_json, "hardware")?;
        let req: Requirements = json_or_default(requirements_json, "requirements")?;
        let g = explore(&space, &est.inner, &hw, &req)?;
        emit(out, g.to_json()?)
    })
}

/// # Safety
/// `e` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn gnnav_estimator_free(e: *mut GnnavEstimator) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}
