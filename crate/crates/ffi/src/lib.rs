//! C ABI over the shadowtomo pipelines.
//!
//! Conventions:
//! - Every fallible call returns an [`StStatus`]; `ST_OK` is zero.
//! - On failure the call stores a message retrievable with
//!   [`st_last_error`]; the message stays valid until the next failing call
//!   on the same thread.
//! - Handles (`StState`, `StReport`, `StArchive`) are opaque and must be
//!   released with their paired `_free` function exactly once. `_free`
//!   accepts null.
//! - Strings are NUL-terminated UTF-8. Strings returned through out
//!   pointers are owned by the caller and released with [`st_string_free`];
//!   byte buffers with [`st_bytes_free`].

use libc::{c_char, c_int, size_t};
use shadowtomo::compress::{self, CompressedRep};
use shadowtomo::fermion::{FermionMapping, MappingKind};
use shadowtomo::pauli::{enumerate_local, PauliOp};
use shadowtomo::protocols::{
    learn_all_paulis, learn_fermionic, learn_two_copy_template, Engine, EstimationReport, Targets,
};
use shadowtomo::rng::Streams;
use shadowtomo::sim::{self, QuantumState};
use shadowtomo::Error;
use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;

/// Status code returned by every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StStatus {
    /// Success.
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// Arguments were rejected (parse failure, dimension mismatch, ...).
    InvalidArgument = 2,
    /// The request exceeds a documented size cap.
    Unsupported = 3,
    /// Unexpected internal failure.
    Internal = 4,
}

/// Opaque quantum state handle.
pub struct StState {
    inner: QuantumState,
}

/// Opaque estimation report handle.
pub struct StReport {
    inner: EstimationReport,
}

/// Opaque compressed-archive handle.
pub struct StArchive {
    inner: CompressedRep,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl std::fmt::Display) {
    let text = msg.to_string().replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(text).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> StStatus {
    match err {
        Error::Unsupported(_) => StStatus::Unsupported,
        _ => StStatus::InvalidArgument,
    }
}

fn fail(err: Error) -> StStatus {
    let status = status_of(&err);
    set_error(err);
    status
}

fn guard(f: impl FnOnce() -> StStatus) -> StStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            StStatus::Internal
        }
    }
}

/// Borrow a required UTF-8 string argument.
///
/// # Safety
/// `ptr` must be null or point to a NUL-terminated string.
unsafe fn text_arg<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, StStatus> {
    if ptr.is_null() {
        set_error(format!("{name} is null"));
        return Err(StStatus::NullPointer);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error(format!("{name} is not valid UTF-8"));
        StStatus::InvalidArgument
    })
}

fn deref<'a, T>(ptr: *const T, name: &str) -> Result<&'a T, StStatus> {
    if ptr.is_null() {
        set_error(format!("{name} is null"));
        return Err(StStatus::NullPointer);
    }
    Ok(unsafe { &*ptr })
}

fn out_slot<'a, T>(ptr: *mut T, name: &str) -> Result<&'a mut T, StStatus> {
    if ptr.is_null() {
        set_error(format!("{name} is null"));
        return Err(StStatus::NullPointer);
    }
    Ok(unsafe { &mut *ptr })
}

macro_rules! ffi_try {
    ($expr:expr) => {
        match $expr {
            Ok(value) => value,
            Err(status) => return status,
        }
    };
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn st_version() -> *const c_char {
    static VERSION: OnceLock<CString> = OnceLock::new();
    VERSION
        .get_or_init(|| CString::new(shadowtomo::VERSION).unwrap_or_default())
        .as_ptr()
}

/// Message of the most recent failure on this thread, empty if none.
#[no_mangle]
pub extern "C" fn st_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

// --------------------------------------------------------------- states --

/// Build a state from a generator spec such as `"ghz"`, `"maximally_mixed"`,
/// `"haar_random seed=7"`, or `"computational 0110"`.
///
/// # Safety
/// `spec` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn st_state_from_generator(
    spec: *const c_char,
    n_qubits: size_t,
    out: *mut *mut StState,
) -> StStatus {
    guard(|| {
        let slot = ffi_try!(out_slot(out, "out"));
        let spec = ffi_try!(text_arg(spec, "spec"));
        match sim::state_from_generator(spec, Some(n_qubits)) {
            Ok(state) => {
                *slot = Box::into_raw(Box::new(StState { inner: state }));
                StStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Parse a state file body: either a single generator line or amplitude
/// lines of the form `bits real [imag]`.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn st_state_parse(
    text: *const c_char,
    n_qubits: size_t,
    out: *mut *mut StState,
) -> StStatus {
    guard(|| {
        let slot = ffi_try!(out_slot(out, "out"));
        let text = ffi_try!(text_arg(text, "text"));
        match sim::parse_state_text(text, Some(n_qubits)) {
            Ok(state) => {
                *slot = Box::into_raw(Box::new(StState { inner: state }));
                StStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Qubit count of a state, 0 for null.
///
/// # Safety
/// `state` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn st_state_num_qubits(state: *const StState) -> size_t {
    if state.is_null() {
        return 0;
    }
    (*state).inner.num_qubits()
}

/// Exact expectation of a Pauli string on a state.
///
/// # Safety
/// All pointers must be valid; `pauli` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn st_state_expectation(
    state: *const StState,
    pauli: *const c_char,
    out: *mut f64,
) -> StStatus {
    guard(|| {
        let state = ffi_try!(deref(state, "state"));
        let slot = ffi_try!(out_slot(out, "out"));
        let text = ffi_try!(text_arg(pauli, "pauli"));
        let op = match PauliOp::parse(text) {
            Ok(op) => op,
            Err(e) => return fail(e),
        };
        match state.inner.expectation(&op) {
            Ok(value) => {
                *slot = value;
                StStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Release a state handle. Accepts null.
///
/// # Safety
/// `state` must be null or an unreleased handle from this library.
#[no_mangle]
pub unsafe extern "C" fn st_state_free(state: *mut StState) {
    if !state.is_null() {
        drop(Box::from_raw(state));
    }
}

// ------------------------------------------------------------ pipelines --

fn engine_arg(engine: *const c_char) -> Result<Engine, StStatus> {
    if engine.is_null() {
        return Ok(Engine::Greedy);
    }
    let text = unsafe { text_arg(engine, "engine") }?;
    Engine::parse(text).map_err(fail)
}

fn report_out(out: *mut *mut StReport, report: EstimationReport) -> StStatus {
    match out_slot(out, "out") {
        Ok(slot) => {
            *slot = Box::into_raw(Box::new(StReport { inner: report }));
            StStatus::Ok
        }
        Err(status) => status,
    }
}

/// Estimate every Pauli expectation on `state` to within `epsilon`.
///
/// # Safety
/// `state` must be a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn st_learn_all_paulis(
    state: *const StState,
    epsilon: f64,
    seed: u64,
    out: *mut *mut StReport,
) -> StStatus {
    guard(|| {
        let state = ffi_try!(deref(state, "state"));
        match learn_all_paulis(&state.inner, epsilon, &Streams::new(seed)) {
            Ok(run) => report_out(out, run.report),
            Err(e) => fail(e),
        }
    })
}

/// Estimate every weight-`locality` Pauli expectation on `state`.
/// `engine` picks the single-copy coloring; null means greedy.
///
/// # Safety
/// `state` must be a live handle; `engine` null or NUL-terminated; `out`
/// must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn st_learn_local_paulis(
    state: *const StState,
    locality: size_t,
    engine: *const c_char,
    epsilon: f64,
    seed: u64,
    out: *mut *mut StReport,
) -> StStatus {
    guard(|| {
        let state = ffi_try!(deref(state, "state"));
        let engine = ffi_try!(engine_arg(engine));
        let run = enumerate_local(state.inner.num_qubits(), locality)
            .and_then(Targets::paulis)
            .and_then(|targets| {
                learn_two_copy_template(
                    &state.inner,
                    &targets,
                    engine,
                    epsilon,
                    &Streams::new(seed),
                    false,
                )
            });
        match run {
            Ok(artifacts) => report_out(out, artifacts.report),
            Err(e) => fail(e),
        }
    })
}

/// Estimate every degree-`2k` Majorana monomial expectation on `state`,
/// which must act on the qubit count of the chosen mapping (`"jw"` or
/// `"ternary"`) at `n_modes` modes.
///
/// # Safety
/// `state` must be a live handle; `mapping` null or NUL-terminated; `out`
/// must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn st_learn_fermionic(
    state: *const StState,
    mapping: *const c_char,
    n_modes: size_t,
    k: size_t,
    epsilon: f64,
    seed: u64,
    out: *mut *mut StReport,
) -> StStatus {
    guard(|| {
        let state = ffi_try!(deref(state, "state"));
        let kind = if mapping.is_null() {
            MappingKind::JordanWigner
        } else {
            match MappingKind::parse(ffi_try!(text_arg(mapping, "mapping"))) {
                Ok(kind) => kind,
                Err(e) => return fail(e),
            }
        };
        let run = FermionMapping::new(kind, n_modes).and_then(|mapping| {
            learn_fermionic(&state.inner, &mapping, k, epsilon, &Streams::new(seed))
        });
        match run {
            Ok(artifacts) => report_out(out, artifacts.report),
            Err(e) => fail(e),
        }
    })
}

// -------------------------------------------------------------- reports --

/// Number of target operators in a report, 0 for null.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn st_report_len(report: *const StReport) -> size_t {
    if report.is_null() {
        return 0;
    }
    (*report).inner.operators.len()
}

/// Copy the label of target `index` into `buf` (NUL-terminated).
///
/// # Safety
/// `report` must be a live handle; `buf` must point to `buf_len` writable
/// bytes.
#[no_mangle]
pub unsafe extern "C" fn st_report_operator(
    report: *const StReport,
    index: size_t,
    buf: *mut c_char,
    buf_len: size_t,
) -> StStatus {
    guard(|| {
        let report = ffi_try!(deref(report, "report"));
        if buf.is_null() {
            set_error("buf is null");
            return StStatus::NullPointer;
        }
        let Some(label) = report.inner.operators.get(index) else {
            set_error(format!("index {index} out of range"));
            return StStatus::InvalidArgument;
        };
        if buf_len < label.len() + 1 {
            set_error(format!(
                "buffer holds {buf_len} bytes, need {}",
                label.len() + 1
            ));
            return StStatus::InvalidArgument;
        }
        std::ptr::copy_nonoverlapping(label.as_ptr(), buf.cast::<u8>(), label.len());
        *buf.add(label.len()) = 0;
        StStatus::Ok
    })
}

/// Estimate for target `index`.
///
/// # Safety
/// `report` must be a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn st_report_estimate(
    report: *const StReport,
    index: size_t,
    out: *mut f64,
) -> StStatus {
    guard(|| {
        let report = ffi_try!(deref(report, "report"));
        let slot = ffi_try!(out_slot(out, "out"));
        match report.inner.estimates.get(index) {
            Some(&value) => {
                *slot = value;
                StStatus::Ok
            }
            None => {
                set_error(format!("index {index} out of range"));
                StStatus::InvalidArgument
            }
        }
    })
}

/// Whether target `index` survived the magnitude stage: 1, 0, or -1 on a
/// bad argument.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn st_report_in_s_eps(report: *const StReport, index: size_t) -> c_int {
    if report.is_null() {
        return -1;
    }
    match (&*report).inner.in_s_eps.get(index) {
        Some(&flag) => c_int::from(flag),
        None => -1,
    }
}

/// Total state copies consumed across all stages, 0 for null.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn st_report_total_copies(report: *const StReport) -> u64 {
    if report.is_null() {
        return 0;
    }
    (*report).inner.total_copies
}

/// Serialize the full report as JSON into a caller-owned string.
///
/// # Safety
/// `report` must be a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn st_report_to_json(
    report: *const StReport,
    out: *mut *mut c_char,
) -> StStatus {
    guard(|| {
        let report = ffi_try!(deref(report, "report"));
        let slot = ffi_try!(out_slot(out, "out"));
        let json = match serde_json::to_string(&report.inner) {
            Ok(json) => json,
            Err(e) => {
                set_error(e);
                return StStatus::Internal;
            }
        };
        match CString::new(json) {
            Ok(cstring) => {
                *slot = cstring.into_raw();
                StStatus::Ok
            }
            Err(_) => {
                set_error("report JSON contained a NUL byte");
                StStatus::Internal
            }
        }
    })
}

/// Release a report handle. Accepts null.
///
/// # Safety
/// `report` must be null or an unreleased handle from this library.
#[no_mangle]
pub unsafe extern "C" fn st_report_free(report: *mut StReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

// ------------------------------------------------------------- archives --

/// Run the two-copy pipeline over all weight-`locality` Paulis with raw
/// sample recording and compress the result.
///
/// # Safety
/// `state` must be a live handle; `engine` null or NUL-terminated; `out`
/// must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn st_archive_create(
    state: *const StState,
    locality: size_t,
    engine: *const c_char,
    epsilon: f64,
    seed: u64,
    out: *mut *mut StArchive,
) -> StStatus {
    guard(|| {
        let state = ffi_try!(deref(state, "state"));
        let engine = ffi_try!(engine_arg(engine));
        let slot = ffi_try!(out_slot(out, "out"));
        let rep = enumerate_local(state.inner.num_qubits(), locality)
            .and_then(Targets::paulis)
            .and_then(|targets| {
                learn_two_copy_template(
                    &state.inner,
                    &targets,
                    engine,
                    epsilon,
                    &Streams::new(seed),
                    true,
                )
            })
            .and_then(|artifacts| compress::compress(&artifacts));
        match rep {
            Ok(rep) => {
                *slot = Box::into_raw(Box::new(StArchive { inner: rep }));
                StStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Answer a Pauli query from an archive. `in_s_eps` and `extrapolated`
/// receive 0 or 1.
///
/// # Safety
/// All pointers must be valid; `pauli` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn st_archive_query(
    archive: *const StArchive,
    pauli: *const c_char,
    estimate: *mut f64,
    in_s_eps: *mut c_int,
    extrapolated: *mut c_int,
) -> StStatus {
    guard(|| {
        let archive = ffi_try!(deref(archive, "archive"));
        let estimate = ffi_try!(out_slot(estimate, "estimate"));
        let in_s_eps = ffi_try!(out_slot(in_s_eps, "in_s_eps"));
        let extrapolated = ffi_try!(out_slot(extrapolated, "extrapolated"));
        let text = ffi_try!(text_arg(pauli, "pauli"));
        let op = match PauliOp::parse(text) {
            Ok(op) => op,
            Err(e) => return fail(e),
        };
        match compress::query(&archive.inner, &op) {
            Ok(answer) => {
                *estimate = answer.estimate;
                *in_s_eps = c_int::from(answer.in_s_eps);
                *extrapolated = c_int::from(answer.extrapolated);
                StStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Serialize an archive into a caller-owned byte buffer.
///
/// # Safety
/// `archive` must be a live handle; `out_bytes` and `out_len` must be
/// valid pointers.
#[no_mangle]
pub unsafe extern "C" fn st_archive_serialize(
    archive: *const StArchive,
    out_bytes: *mut *mut u8,
    out_len: *mut size_t,
) -> StStatus {
    guard(|| {
        let archive = ffi_try!(deref(archive, "archive"));
        let bytes_slot = ffi_try!(out_slot(out_bytes, "out_bytes"));
        let len_slot = ffi_try!(out_slot(out_len, "out_len"));
        let bytes = compress::serialize(&archive.inner).into_boxed_slice();
        *len_slot = bytes.len();
        *bytes_slot = Box::into_raw(bytes).cast::<u8>();
        StStatus::Ok
    })
}

/// Rebuild an archive from serialized bytes.
///
/// # Safety
/// `bytes` must point to `len` readable bytes; `out` must be a valid
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn st_archive_deserialize(
    bytes: *const u8,
    len: size_t,
    out: *mut *mut StArchive,
) -> StStatus {
    guard(|| {
        let slot = ffi_try!(out_slot(out, "out"));
        if bytes.is_null() {
            set_error("bytes is null");
            return StStatus::NullPointer;
        }
        let data = std::slice::from_raw_parts(bytes, len);
        match compress::deserialize(data) {
            Ok(rep) => {
                *slot = Box::into_raw(Box::new(StArchive { inner: rep }));
                StStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Release an archive handle. Accepts null.
///
/// # Safety
/// `archive` must be null or an unreleased handle from this library.
#[no_mangle]
pub unsafe extern "C" fn st_archive_free(archive: *mut StArchive) {
    if !archive.is_null() {
        drop(Box::from_raw(archive));
    }
}

// ------------------------------------------------------------- buffers --

/// Release a string returned by this library. Accepts null.
///
/// # Safety
/// `s` must be null or an unreleased string from this library.
#[no_mangle]
pub unsafe extern "C" fn st_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Release a byte buffer returned by this library. Accepts null.
///
/// # Safety
/// `bytes` must be null or an unreleased buffer of length `len` from this
/// library.
#[no_mangle]
pub unsafe extern "C" fn st_bytes_free(bytes: *mut u8, len: size_t) {
    if !bytes.is_null() {
        drop(Box::from_raw(std::ptr::slice_from_raw_parts_mut(
            bytes, len,
        )));
    }
}
