//! Exercises the C ABI the way a foreign caller would: through raw
//! pointers, status codes, and the paired free functions.

use libc::c_int;
use shadowtomo_ffi::*;
use std::ffi::{CStr, CString};
use std::ptr;

fn cstr(text: &str) -> CString {
    CString::new(text).unwrap()
}

fn last_error() -> String {
    unsafe {
        CStr::from_ptr(st_last_error())
            .to_string_lossy()
            .into_owned()
    }
}

#[test]
fn version_is_exposed() {
    let version = unsafe { CStr::from_ptr(st_version()) };
    assert_eq!(version.to_str().unwrap(), shadowtomo::VERSION);
}

#[test]
fn state_lifecycle_and_expectations() {
    unsafe {
        let mut state: *mut StState = ptr::null_mut();
        let spec = cstr("ghz");
        assert_eq!(
            st_state_from_generator(spec.as_ptr(), 2, &mut state),
            StStatus::Ok
        );
        assert_eq!(st_state_num_qubits(state), 2);

        let mut value = 0.0f64;
        for (pauli, expected) in [("ZZ", 1.0), ("XX", 1.0), ("ZI", 0.0)] {
            let op = cstr(pauli);
            assert_eq!(
                st_state_expectation(state, op.as_ptr(), &mut value),
                StStatus::Ok
            );
            assert!((value - expected).abs() < 1e-12, "{pauli}: {value}");
        }

        let bad = cstr("XYZ");
        assert_eq!(
            st_state_expectation(state, bad.as_ptr(), &mut value),
            StStatus::InvalidArgument
        );
        assert!(!last_error().is_empty());

        st_state_free(state);
        st_state_free(ptr::null_mut());
    }
}

#[test]
fn parse_rejects_garbage_and_reports_it() {
    unsafe {
        let mut state: *mut StState = ptr::null_mut();
        let spec = cstr("no_such_generator");
        assert_eq!(
            st_state_from_generator(spec.as_ptr(), 2, &mut state),
            StStatus::InvalidArgument
        );
        assert!(last_error().contains("no_such_generator"));
        assert!(state.is_null());

        assert_eq!(
            st_state_from_generator(ptr::null(), 2, &mut state),
            StStatus::NullPointer
        );
        let ok = cstr("ghz");
        assert_eq!(
            st_state_from_generator(ok.as_ptr(), 2, ptr::null_mut()),
            StStatus::NullPointer
        );
    }
}

#[test]
fn amplitude_text_state() {
    unsafe {
        let mut state: *mut StState = ptr::null_mut();
        let text = cstr("00 0.7071067811865476\n11 0.7071067811865476\n");
        assert_eq!(st_state_parse(text.as_ptr(), 2, &mut state), StStatus::Ok);
        let mut value = 0.0f64;
        let op = cstr("YY");
        assert_eq!(
            st_state_expectation(state, op.as_ptr(), &mut value),
            StStatus::Ok
        );
        assert!((value + 1.0).abs() < 1e-12);
        st_state_free(state);
    }
}

#[test]
fn local_pauli_report_roundtrip() {
    unsafe {
        let mut state: *mut StState = ptr::null_mut();
        let spec = cstr("ghz");
        assert_eq!(
            st_state_from_generator(spec.as_ptr(), 2, &mut state),
            StStatus::Ok
        );

        let mut report: *mut StReport = ptr::null_mut();
        assert_eq!(
            st_learn_local_paulis(state, 2, ptr::null(), 0.5, 7, &mut report),
            StStatus::Ok
        );
        let len = st_report_len(report);
        assert_eq!(len, 9);

        let mut buf = [0 as libc::c_char; 8];
        let mut seen_zz = false;
        for i in 0..len {
            assert_eq!(
                st_report_operator(report, i, buf.as_mut_ptr().cast(), buf.len()),
                StStatus::Ok
            );
            let label = CStr::from_ptr(buf.as_ptr().cast())
                .to_str()
                .unwrap()
                .to_string();
            let mut est = 0.0f64;
            assert_eq!(st_report_estimate(report, i, &mut est), StStatus::Ok);
            let flag = st_report_in_s_eps(report, i);
            assert!(flag == 0 || flag == 1);
            if label == "ZZ" {
                seen_zz = true;
                assert!(est > 0.5, "ZZ estimate {est}");
                assert_eq!(flag, 1);
            }
        }
        assert!(seen_zz);
        assert!(st_report_total_copies(report) > 0);

        assert_eq!(
            st_report_operator(report, len, buf.as_mut_ptr().cast(), buf.len()),
            StStatus::InvalidArgument
        );
        let mut tiny = [0 as libc::c_char; 2];
        assert_eq!(
            st_report_operator(report, 0, tiny.as_mut_ptr().cast(), tiny.len()),
            StStatus::InvalidArgument
        );

        let mut json: *mut libc::c_char = ptr::null_mut();
        assert_eq!(st_report_to_json(report, &mut json), StStatus::Ok);
        let text = CStr::from_ptr(json).to_str().unwrap();
        let value: serde_json::Value = serde_json::from_str(text).unwrap();
        assert_eq!(value["operators"].as_array().unwrap().len(), 9);
        st_string_free(json);

        st_report_free(report);
        st_state_free(state);
    }
}

#[test]
fn fermionic_report() {
    unsafe {
        let mut state: *mut StState = ptr::null_mut();
        let spec = cstr("computational 00");
        assert_eq!(
            st_state_from_generator(spec.as_ptr(), 2, &mut state),
            StStatus::Ok
        );

        let mut report: *mut StReport = ptr::null_mut();
        let mapping = cstr("jw");
        assert_eq!(
            st_learn_fermionic(state, mapping.as_ptr(), 2, 1, 0.4, 3, &mut report),
            StStatus::Ok
        );
        assert_eq!(st_report_len(report), 6);
        st_report_free(report);
        st_state_free(state);
    }
}

#[test]
fn archive_roundtrip_matches_queries() {
    unsafe {
        let mut state: *mut StState = ptr::null_mut();
        let spec = cstr("haar_random seed=5");
        assert_eq!(
            st_state_from_generator(spec.as_ptr(), 2, &mut state),
            StStatus::Ok
        );

        let mut archive: *mut StArchive = ptr::null_mut();
        assert_eq!(
            st_archive_create(state, 2, ptr::null(), 0.5, 11, &mut archive),
            StStatus::Ok
        );

        let op = cstr("XX");
        let (mut est, mut in_s, mut extra) = (0.0f64, 0 as c_int, 0 as c_int);
        assert_eq!(
            st_archive_query(archive, op.as_ptr(), &mut est, &mut in_s, &mut extra),
            StStatus::Ok
        );
        assert_eq!(extra, 0);

        let mut bytes: *mut u8 = ptr::null_mut();
        let mut len: usize = 0;
        assert_eq!(
            st_archive_serialize(archive, &mut bytes, &mut len),
            StStatus::Ok
        );
        assert!(len > 0);

        let mut back: *mut StArchive = ptr::null_mut();
        assert_eq!(st_archive_deserialize(bytes, len, &mut back), StStatus::Ok);
        let (mut est2, mut in_s2, mut extra2) = (0.0f64, 0 as c_int, 0 as c_int);
        assert_eq!(
            st_archive_query(back, op.as_ptr(), &mut est2, &mut in_s2, &mut extra2),
            StStatus::Ok
        );
        assert_eq!(est.to_bits(), est2.to_bits());
        assert_eq!((in_s, extra), (in_s2, extra2));

        let truncated = st_archive_deserialize(bytes, len / 2, &mut back);
        assert_eq!(truncated, StStatus::InvalidArgument);

        st_bytes_free(bytes, len);
        st_archive_free(archive);
        st_archive_free(back);
        st_state_free(state);
    }
}
