use std::ffi::{CStr, CString};
use std::ptr;

use dplqg_ffi::*;

const SCALAR: &str = r#"
[sim]
steps = 10
seed = 1

[cost.q]
diagonal = 1.0

[cost.r]
diagonal = 1.0

[[agents]]
a = [[1.0]]
b = [[1.0]]
c = [[1.0]]
w = [[1.0]]
epsilon = 1.0
delta = 0.01
reference_epsilon = 1.0
reference_delta = 0.1
reference_limit = [1.0]
"#;

fn last_error() -> String {
    let p = dplqg_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn scenario(text: &str) -> *mut DplqgScenario {
    let c = CString::new(text).unwrap();
    let mut s = ptr::null_mut();
    let st = unsafe { dplqg_scenario_from_str(c.as_ptr(), 0, false, &mut s) };
    assert_eq!(st, DplqgStatus::Ok);
    s
}

fn synthesis(s: *const DplqgScenario) -> *mut DplqgSynthesis {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { dplqg_synthesis_new(s, &mut h) }, DplqgStatus::Ok);
    h
}

#[test]
fn version_is_nul_terminated() {
    let v = unsafe { CStr::from_ptr(dplqg_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn q_inverse_and_noise_scale() {
    let mut x = 0.0;
    assert_eq!(unsafe { dplqg_q_inverse(0.05, &mut x) }, DplqgStatus::Ok);
    assert!((x - 1.644_853_626_951_472).abs() < 1e-9);
    assert!(dplqg_last_error_message().is_null());

    let mut s = 0.0;
    let st = unsafe { dplqg_noise_scale(3f64.ln(), 0.001, 1.0, &mut s) };
    assert_eq!(st, DplqgStatus::Ok);
    assert!((s - 2.96628).abs() < 1e-4, "{s}");
}

#[test]
fn bad_arguments_report_status_and_message() {
    let mut x = 0.0;
    assert_eq!(unsafe { dplqg_q_inverse(1.5, &mut x) }, DplqgStatus::Validation);
    assert!(!last_error().is_empty());

    assert_eq!(
        unsafe { dplqg_q_inverse(0.5, ptr::null_mut()) },
        DplqgStatus::NullArgument
    );
    assert!(last_error().contains("out"));

    assert_eq!(
        unsafe { dplqg_noise_scale(-1.0, 0.01, 1.0, &mut x) },
        DplqgStatus::Validation
    );

    let mut h = ptr::null_mut();
    assert_eq!(
        unsafe { dplqg_synthesis_new(ptr::null(), &mut h) },
        DplqgStatus::NullArgument
    );
    assert!(h.is_null());
    assert_eq!(unsafe { dplqg_scenario_agent_count(ptr::null()) }, 0);
    unsafe {
        dplqg_scenario_free(ptr::null_mut());
        dplqg_synthesis_free(ptr::null_mut());
    }
}

#[test]
fn malformed_scenario_is_a_parse_error() {
    let c = CString::new("[sim\nsteps = 1").unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(
        unsafe { dplqg_scenario_from_str(c.as_ptr(), 0, false, &mut s) },
        DplqgStatus::Parse
    );
    assert!(s.is_null());

    let bad = CString::new(SCALAR.replace("w = [[1.0]]", "w = [[-1.0]]")).unwrap();
    assert_eq!(
        unsafe { dplqg_scenario_from_str(bad.as_ptr(), 0, false, &mut s) },
        DplqgStatus::Validation
    );
    assert!(last_error().contains("w"));
}

#[test]
fn missing_file_is_io() {
    let p = CString::new("/nonexistent/scenario.toml").unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(
        unsafe { dplqg_scenario_load(p.as_ptr(), 0, false, &mut s) },
        DplqgStatus::Io
    );
}

#[test]
fn scenario_load_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.toml");
    std::fs::write(&path, SCALAR.replace("[[agents]]", "[[agents]]\ncount = 3")).unwrap();
    let c = CString::new(path.to_str().unwrap()).unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(
        unsafe { dplqg_scenario_load(c.as_ptr(), 9, true, &mut s) },
        DplqgStatus::Ok
    );
    assert_eq!(unsafe { dplqg_scenario_agent_count(s) }, 3);
    unsafe { dplqg_scenario_free(s) };
}

#[test]
fn scalar_riccati_is_golden_ratio() {
    let s = scenario(SCALAR);
    let h = synthesis(s);
    let (mut r, mut c) = (0usize, 0usize);
    let st = unsafe { dplqg_synthesis_matrix(h, DplqgMatrix::ControlRiccati, ptr::null_mut(), 0, &mut r, &mut c) };
    assert_eq!(st, DplqgStatus::Ok);
    assert_eq!((r, c), (1, 1));

    let mut k = [0.0];
    let st = unsafe { dplqg_synthesis_matrix(h, DplqgMatrix::ControlRiccati, k.as_mut_ptr(), 1, &mut r, &mut c) };
    assert_eq!(st, DplqgStatus::Ok);
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    assert!((k[0] - phi).abs() < 1e-8, "{}", k[0]);

    let mut l = [0.0];
    unsafe { dplqg_synthesis_matrix(h, DplqgMatrix::FeedbackGain, l.as_mut_ptr(), 1, &mut r, &mut c) };
    assert!((l[0] + phi / (1.0 + phi)).abs() < 1e-8);

    let mut rho = 0.0;
    assert_eq!(
        unsafe { dplqg_synthesis_closed_loop_radius(h, &mut rho) },
        DplqgStatus::Ok
    );
    assert!((rho - 1.0 / (1.0 + phi)).abs() < 1e-8);

    unsafe {
        dplqg_synthesis_free(h);
        dplqg_scenario_free(s);
    }
}

#[test]
fn short_buffer_is_rejected() {
    let text = SCALAR
        .replace("a = [[1.0]]", "a = [[1.0, 0.1], [0.0, 1.0]]")
        .replace("b = [[1.0]]", "b = [[0.005], [0.1]]")
        .replace("c = [[1.0]]", "c = [[1.0, 0.0], [0.0, 1.0]]")
        .replace("w = [[1.0]]", "w = [[1.0, 0.0], [0.0, 1.0]]")
        .replace("reference_limit = [1.0]", "reference_limit = [1.0, 1.0]");
    let s = scenario(&text);
    let h = synthesis(s);
    let (mut r, mut c) = (0usize, 0usize);
    let mut buf = [0.0; 3];
    let st = unsafe { dplqg_synthesis_matrix(h, DplqgMatrix::PriorCovariance, buf.as_mut_ptr(), 3, &mut r, &mut c) };
    assert_eq!(st, DplqgStatus::BufferTooSmall);
    assert_eq!((r, c), (2, 2));
    assert!(last_error().contains("4"));

    let mut full = [0.0; 4];
    let st = unsafe { dplqg_synthesis_matrix(h, DplqgMatrix::PriorCovariance, full.as_mut_ptr(), 4, &mut r, &mut c) };
    assert_eq!(st, DplqgStatus::Ok);
    assert!((full[1] - full[2]).abs() < 1e-12);
    unsafe {
        dplqg_synthesis_free(h);
        dplqg_scenario_free(s);
    }
}

#[test]
fn bounds_enclose_exact_values() {
    let s = scenario(SCALAR);
    let h = synthesis(s);
    let mut b = DplqgBoundReport::default();
    assert_eq!(unsafe { dplqg_bounds(h, false, &mut b) }, DplqgStatus::Ok);
    assert!(b.trace_sigma.lower <= b.exact_trace_sigma && b.exact_trace_sigma <= b.trace_sigma.upper);
    assert!(b.trace_sigma_bar.lower <= b.exact_trace_sigma_bar && b.exact_trace_sigma_bar <= b.trace_sigma_bar.upper);
    assert!(b.exact_trace_sigma_bar < b.exact_trace_sigma);

    let mut c = DplqgCostReport::default();
    assert_eq!(unsafe { dplqg_cost(h, &mut c) }, DplqgStatus::Ok);
    assert!(c.overhead > 0.0);
    assert!((c.j_total - c.j_nonprivate - c.overhead).abs() < 1e-9 * c.j_total.abs().max(1.0));
    unsafe {
        dplqg_synthesis_free(h);
        dplqg_scenario_free(s);
    }
}

#[test]
fn preset_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let name = CString::new("table1").unwrap();
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    assert_eq!(
        unsafe { dplqg_run_preset(name.as_ptr(), 0, false, out.as_ptr()) },
        DplqgStatus::Ok
    );
    assert!(dir.path().join("manifest.toml").exists());
    assert!(dir.path().join("table1.csv").exists());

    let unknown = CString::new("nope").unwrap();
    assert_eq!(
        unsafe { dplqg_run_preset(unknown.as_ptr(), 0, false, out.as_ptr()) },
        DplqgStatus::Validation
    );
    assert_eq!(
        unsafe { dplqg_run_preset(ptr::null(), 0, false, out.as_ptr()) },
        DplqgStatus::NullArgument
    );
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/dplqg.h")).unwrap();
    for f in [
        "dplqg_last_error_message",
        "dplqg_version",
        "dplqg_q_inverse",
        "dplqg_noise_scale",
        "dplqg_scenario_load",
        "dplqg_scenario_from_str",
        "dplqg_scenario_free",
        "dplqg_scenario_agent_count",
        "dplqg_synthesis_new",
        "dplqg_synthesis_free",
        "dplqg_synthesis_matrix",
        "dplqg_synthesis_closed_loop_radius",
        "dplqg_bounds",
        "dplqg_cost",
        "dplqg_run_preset",
        "DPLQG_STATUS_BUFFER_TOO_SMALL = 9",
        "typedef struct DplqgScenario DplqgScenario",
    ] {
        assert!(header.contains(f), "missing {f}");
    }
}
