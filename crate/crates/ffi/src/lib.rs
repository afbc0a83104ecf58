//! C ABI over the `dplqg` library.
//!
//! Objects cross the boundary as opaque handles created by `*_new`/`*_load`
//! and released by the matching `*_free`. Every fallible call returns a
//! [`DplqgStatus`]; on failure a message is kept per thread and can be read
//! with [`dplqg_last_error_message`]. Panics never unwind into the caller.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use dplqg::bounds::{network_bound_report, BoundOptions, Interval};
use dplqg::cost::total_private_cost;
use dplqg::io::{load_scenario, write_results, LoadedScenario};
use dplqg::linalg::Matrix;
use dplqg::mechanism::{noise_scale, q_inverse, PrivacyParams};
use dplqg::model::NetworkModel;
use dplqg::presets::run_preset;
use dplqg::synthesis::{synthesize, SynthesisResult};
use dplqg::{Error, ErrorCategory};

/// Result of an API call. Nonzero values match the command-line exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DplqgStatus {
    Ok = 0,
    Parse = 2,
    Validation = 3,
    Convergence = 4,
    Infeasible = 5,
    Numerical = 6,
    Io = 7,
    NullArgument = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

impl From<ErrorCategory> for DplqgStatus {
    fn from(c: ErrorCategory) -> Self {
        match c {
            ErrorCategory::Parse => DplqgStatus::Parse,
            ErrorCategory::Validation => DplqgStatus::Validation,
            ErrorCategory::Convergence => DplqgStatus::Convergence,
            ErrorCategory::Infeasible => DplqgStatus::Infeasible,
            ErrorCategory::Numerical => DplqgStatus::Numerical,
            ErrorCategory::Io => DplqgStatus::Io,
        }
    }
}

/// Gain matrices readable from a synthesis handle.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DplqgMatrix {
    ControlRiccati = 0,
    FeedbackGain = 1,
    ReferenceGain = 2,
    KalmanGain = 3,
    PriorCovariance = 4,
    PosteriorCovariance = 5,
}

/// Lower and upper end of a bound.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DplqgInterval {
    pub lower: f64,
    pub upper: f64,
}

impl From<Interval> for DplqgInterval {
    fn from(i: Interval) -> Self {
        Self {
            lower: i.lower,
            upper: i.upper,
        }
    }
}

/// Trace and log-det bounds with the exact values they enclose (NaN when not computed).
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DplqgBoundReport {
    pub trace_sigma: DplqgInterval,
    pub trace_sigma_bar: DplqgInterval,
    pub logdet_sigma: DplqgInterval,
    pub logdet_sigma_bar: DplqgInterval,
    pub exact_trace_sigma: f64,
    pub exact_trace_sigma_bar: f64,
    pub exact_logdet_sigma: f64,
    pub exact_logdet_sigma_bar: f64,
}

/// Average cost with and without privacy.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DplqgCostReport {
    pub j_total: f64,
    pub j_nonprivate: f64,
    pub overhead: f64,
    pub reference_penalty: f64,
}

/// Opaque loaded scenario.
pub struct DplqgScenario {
    inner: LoadedScenario,
}

/// Opaque controller synthesized for a scenario.
pub struct DplqgSynthesis {
    net: NetworkModel,
    synth: SynthesisResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn fail(e: Error) -> DplqgStatus {
    let s = DplqgStatus::from(e.category());
    set_error(e.to_string());
    s
}

fn null(what: &str) -> DplqgStatus {
    set_error(format!("null argument: {what}"));
    DplqgStatus::NullArgument
}

fn guard<F: FnOnce() -> DplqgStatus>(f: F) -> DplqgStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => {
            set_error("internal panic".into());
            DplqgStatus::Panic
        }
    }
}

unsafe fn path_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, DplqgStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(format!("{what} is not valid UTF-8"));
        DplqgStatus::Validation
    })
}

/// Message of the last failed call on this thread, or NULL. Valid until the next call.
#[no_mangle]
pub extern "C" fn dplqg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dplqg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Inverse of the standard normal tail Q for p in (0, 1).
#[no_mangle]
pub unsafe extern "C" fn dplqg_q_inverse(p: f64, out: *mut f64) -> DplqgStatus {
    guard(|| {
        if out.is_null() {
            return null("out");
        }
        match q_inverse(p) {
            Ok(v) => {
                *out = v;
                DplqgStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Gaussian-mechanism standard deviation for (ε, δ) and sensitivity.
#[no_mangle]
pub unsafe extern "C" fn dplqg_noise_scale(epsilon: f64, delta: f64, sensitivity: f64, out: *mut f64) -> DplqgStatus {
    guard(|| {
        if out.is_null() {
            return null("out");
        }
        match PrivacyParams::new(epsilon, delta).and_then(|p| noise_scale(p, sensitivity)) {
            Ok(s) => {
                *out = s.sigma;
                DplqgStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Loads a scenario file. When `has_seed` is nonzero `seed` replaces the file's seed.
#[no_mangle]
pub unsafe extern "C" fn dplqg_scenario_load(
    path: *const c_char,
    seed: u64,
    has_seed: bool,
    out: *mut *mut DplqgScenario,
) -> DplqgStatus {
    guard(|| {
        if out.is_null() {
            return null("out");
        }
        let path = match path_arg(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match load_scenario(Path::new(path), has_seed.then_some(seed)) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(DplqgScenario { inner }));
                DplqgStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Parses a scenario from NUL-terminated TOML text.
#[no_mangle]
pub unsafe extern "C" fn dplqg_scenario_from_str(
    text: *const c_char,
    seed: u64,
    has_seed: bool,
    out: *mut *mut DplqgScenario,
) -> DplqgStatus {
    guard(|| {
        if out.is_null() {
            return null("out");
        }
        let text = match path_arg(text, "text") {
            Ok(t) => t,
            Err(s) => return s,
        };
        match LoadedScenario::from_text(text, has_seed.then_some(seed)) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(DplqgScenario { inner }));
                DplqgStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Releases a scenario handle. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn dplqg_scenario_free(s: *mut DplqgScenario) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Number of agents in a scenario, 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn dplqg_scenario_agent_count(s: *const DplqgScenario) -> usize {
    s.as_ref().map_or(0, |s| s.inner.scenario.agents.len())
}

/// Synthesizes the controller for run 0 of a scenario.
#[no_mangle]
pub unsafe extern "C" fn dplqg_synthesis_new(s: *const DplqgScenario, out: *mut *mut DplqgSynthesis) -> DplqgStatus {
    guard(|| {
        let Some(s) = s.as_ref() else { return null("scenario") };
        if out.is_null() {
            return null("out");
        }
        let res = s.inner.scenario.network(0).and_then(|net| {
            let synth = synthesize(&net)?;
            Ok(DplqgSynthesis { net, synth })
        });
        match res {
            Ok(h) => {
                *out = Box::into_raw(Box::new(h));
                DplqgStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Releases a synthesis handle. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn dplqg_synthesis_free(s: *mut DplqgSynthesis) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Copies a matrix in row-major order into `buf` of `len` doubles.
///
/// `rows` and `cols` always receive the shape. With a NULL `buf` only the
/// shape is written; a short buffer yields `BUFFER_TOO_SMALL`.
#[no_mangle]
pub unsafe extern "C" fn dplqg_synthesis_matrix(
    s: *const DplqgSynthesis,
    which: DplqgMatrix,
    buf: *mut f64,
    len: usize,
    rows: *mut usize,
    cols: *mut usize,
) -> DplqgStatus {
    guard(|| {
        let Some(s) = s.as_ref() else { return null("synthesis") };
        if rows.is_null() || cols.is_null() {
            return null("rows/cols");
        }
        let m: &Matrix = match which {
            DplqgMatrix::ControlRiccati => &s.synth.k,
            DplqgMatrix::FeedbackGain => &s.synth.l,
            DplqgMatrix::ReferenceGain => &s.synth.m,
            DplqgMatrix::KalmanGain => &s.synth.kalman_gain,
            DplqgMatrix::PriorCovariance => &s.synth.sigma,
            DplqgMatrix::PosteriorCovariance => &s.synth.sigma_bar,
        };
        *rows = m.rows();
        *cols = m.cols();
        if buf.is_null() {
            return DplqgStatus::Ok;
        }
        let data = m.as_slice();
        if len < data.len() {
            set_error(format!("buffer holds {len} values, {} needed", data.len()));
            return DplqgStatus::BufferTooSmall;
        }
        ptr::copy_nonoverlapping(data.as_ptr(), buf, data.len());
        DplqgStatus::Ok
    })
}

/// Spectral radius of A + BL.
#[no_mangle]
pub unsafe extern "C" fn dplqg_synthesis_closed_loop_radius(s: *const DplqgSynthesis, out: *mut f64) -> DplqgStatus {
    guard(|| {
        let Some(s) = s.as_ref() else { return null("synthesis") };
        if out.is_null() {
            return null("out");
        }
        *out = s.synth.closed_loop_radius;
        DplqgStatus::Ok
    })
}

/// Covariance bounds for the synthesized network.
#[no_mangle]
pub unsafe extern "C" fn dplqg_bounds(
    s: *const DplqgSynthesis,
    paper_literal: bool,
    out: *mut DplqgBoundReport,
) -> DplqgStatus {
    guard(|| {
        let Some(s) = s.as_ref() else { return null("synthesis") };
        if out.is_null() {
            return null("out");
        }
        match network_bound_report(&s.net, BoundOptions { paper_literal }) {
            Ok(r) => {
                let nan = f64::NAN;
                let ex = r.exact.map_or((nan, nan, nan, nan), |e| {
                    (e.trace_sigma, e.trace_sigma_bar, e.logdet_sigma, e.logdet_sigma_bar)
                });
                *out = DplqgBoundReport {
                    trace_sigma: r.trace_sigma.into(),
                    trace_sigma_bar: r.trace_sigma_bar.into(),
                    logdet_sigma: r.logdet_sigma.into(),
                    logdet_sigma_bar: r.logdet_sigma_bar.into(),
                    exact_trace_sigma: ex.0,
                    exact_trace_sigma_bar: ex.1,
                    exact_logdet_sigma: ex.2,
                    exact_logdet_sigma_bar: ex.3,
                };
                DplqgStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Total private cost, non-private cost and their difference.
#[no_mangle]
pub unsafe extern "C" fn dplqg_cost(s: *const DplqgSynthesis, out: *mut DplqgCostReport) -> DplqgStatus {
    guard(|| {
        let Some(s) = s.as_ref() else { return null("synthesis") };
        if out.is_null() {
            return null("out");
        }
        match total_private_cost(&s.net, &s.synth) {
            Ok(r) => {
                *out = DplqgCostReport {
                    j_total: r.j_total,
                    j_nonprivate: r.j_nonprivate,
                    overhead: r.overhead,
                    reference_penalty: r.reference_penalty,
                };
                DplqgStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Runs a named preset and writes its files into `out_dir`.
#[no_mangle]
pub unsafe extern "C" fn dplqg_run_preset(
    name: *const c_char,
    seed: u64,
    has_seed: bool,
    out_dir: *const c_char,
) -> DplqgStatus {
    guard(|| {
        let name = match path_arg(name, "name") {
            Ok(n) => n,
            Err(s) => return s,
        };
        let dir = match path_arg(out_dir, "out_dir") {
            Ok(d) => d,
            Err(s) => return s,
        };
        match run_preset(name, has_seed.then_some(seed)).and_then(|b| write_results(&b, Path::new(dir))) {
            Ok(_) => DplqgStatus::Ok,
            Err(e) => fail(e),
        }
    })
}
