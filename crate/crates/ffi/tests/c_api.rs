use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use ecpec_ffi::*;
use serde_json::Value;

fn corpus_json() -> CString {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/corpus.json");
    CString::new(std::fs::read_to_string(path).unwrap()).unwrap()
}

fn engine(d_u: usize) -> *mut EcpecEngine {
    let mut e = ptr::null_mut();
    assert_eq!(
        unsafe { ecpec_engine_new(ptr::null(), d_u, 42, &mut e) },
        EcpecStatus::Ok
    );
    assert!(!e.is_null());
    e
}

fn take_string(p: *mut std::ffi::c_char) -> String {
    let s = unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned();
    unsafe { ecpec_string_free(p) };
    s
}

fn last_error() -> String {
    let p = ecpec_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn predict_matches_cli_golden() {
    let e = engine(8);
    let mut out = ptr::null_mut();
    let status = unsafe { ecpec_engine_predict(e, corpus_json().as_ptr(), &mut out) };
    assert_eq!(status, EcpecStatus::Ok);
    let got: Value = serde_json::from_str(&take_string(out)).unwrap();
    let golden_path =
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden/predictions.json");
    let golden: Value =
        serde_json::from_str(&std::fs::read_to_string(golden_path).unwrap()).unwrap();
    assert_eq!(got, golden);
    unsafe { ecpec_engine_free(e) };
}

#[test]
fn evaluate_returns_both_reports() {
    let e = engine(8);
    unsafe {
        assert_eq!(ecpec_engine_set_threads(e, 4), EcpecStatus::Ok);
        let hp = CString::new(r#"{"beta": 0.0, "tau_r": 0.5}"#).unwrap();
        assert_eq!(
            ecpec_engine_set_hyperparams(e, hp.as_ptr()),
            EcpecStatus::Ok
        );
    }
    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { ecpec_engine_evaluate(e, corpus_json().as_ptr(), &mut out) },
        EcpecStatus::Ok
    );
    let v: Value = serde_json::from_str(&take_string(out)).unwrap();
    assert_eq!(v["all"]["conversations"], 3);
    assert_eq!(v["multi_cause"]["conversations"], 2);
    unsafe { ecpec_engine_free(e) };
}

#[test]
fn errors_carry_status_and_message() {
    let e = engine(4);
    let mut out = ptr::null_mut();
    unsafe {
        assert_eq!(
            ecpec_engine_predict(e, corpus_json().as_ptr(), &mut out),
            EcpecStatus::InvalidArgument
        );
        assert!(out.is_null());
        assert!(last_error().contains("d_u"));

        let bad = CString::new("{not json").unwrap();
        assert_eq!(
            ecpec_engine_predict(e, bad.as_ptr(), &mut out),
            EcpecStatus::Json
        );

        let hp = CString::new(r#"{"alpha": 2.0}"#).unwrap();
        assert_eq!(
            ecpec_engine_set_hyperparams(e, hp.as_ptr()),
            EcpecStatus::Config
        );
        assert!(last_error().contains("alpha"));

        let hp = CString::new(r#"{"layers": 3}"#).unwrap();
        assert_eq!(
            ecpec_engine_set_hyperparams(e, hp.as_ptr()),
            EcpecStatus::InvalidArgument
        );

        assert_eq!(
            ecpec_engine_predict(ptr::null(), bad.as_ptr(), &mut out),
            EcpecStatus::NullPointer
        );
        assert_eq!(
            ecpec_engine_predict(e, ptr::null(), &mut out),
            EcpecStatus::NullPointer
        );
        ecpec_engine_free(e);
        ecpec_engine_free(ptr::null_mut());
        ecpec_string_free(ptr::null_mut());
    }
}

#[test]
fn missing_params_file_is_io_error() {
    let mut e = ptr::null_mut();
    let path = CString::new("/nonexistent/params.json").unwrap();
    let status = unsafe { ecpec_engine_new(path.as_ptr(), 8, 0, &mut e) };
    assert_eq!(status, EcpecStatus::Io);
    assert!(e.is_null());
}

#[test]
fn raw_sinkhorn_has_uniform_marginals() {
    let n = 3;
    let cost = [0.0, 1.0, 2.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.0];
    let mut plan = [0.0; 9];
    let mut iters = 0usize;
    let status = unsafe {
        ecpec_sinkhorn(
            cost.as_ptr(),
            n,
            0.5,
            500,
            1e-10,
            plan.as_mut_ptr(),
            &mut iters,
        )
    };
    assert_eq!(status, EcpecStatus::Ok);
    assert!(iters > 0);
    for i in 0..n {
        let row: f64 = plan[i * n..(i + 1) * n].iter().sum();
        let col: f64 = (0..n).map(|k| plan[k * n + i]).sum();
        assert!((row - 1.0 / 3.0).abs() < 1e-9 && (col - 1.0 / 3.0).abs() < 1e-9);
    }
    let bad = unsafe {
        ecpec_sinkhorn(
            cost.as_ptr(),
            n,
            0.0,
            500,
            1e-10,
            plan.as_mut_ptr(),
            ptr::null_mut(),
        )
    };
    assert_ne!(bad, EcpecStatus::Ok);
}

#[test]
fn version_is_package_version() {
    let v = unsafe { CStr::from_ptr(ecpec_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

fn target_dir() -> PathBuf {
    // tests/<name>-<hash> lives in target/<profile>/deps
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_links_from_c() {
    let crate_dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let lib = target_dir().join("libecpec_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: static library or C compiler unavailable");
        return;
    }
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include "ecpec.h"
int main(void) {
    double cost[4] = {0.0, 1.0, 1.0, 0.0};
    double plan[4];
    size_t iters = 0;
    if (ecpec_sinkhorn(cost, 2, 0.5, 500, 1e-10, plan, &iters) != ECPEC_STATUS_OK) return 1;
    EcpecEngine *e = NULL;
    if (ecpec_engine_new(NULL, 4, 0, &e) != ECPEC_STATUS_OK) return 2;
    char *out = NULL;
    if (ecpec_engine_predict(e, "{\"d_u\": 3, \"conversations\": []}", &out) != ECPEC_STATUS_INVALID_ARGUMENT) return 3;
    if (ecpec_last_error() == NULL) return 4;
    if (ecpec_engine_predict(e, "{\"d_u\": 4, \"conversations\": []}", &out) != ECPEC_STATUS_OK) return 5;
    printf("%s %.6f\n", out, plan[0] + plan[1]);
    ecpec_string_free(out);
    ecpec_engine_free(e);
    return 0;
}
"#,
    )
    .unwrap();
    let exe = tmp.path().join("smoke");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(
        out.status.success(),
        "C smoke exited with {:?}",
        out.status.code()
    );
    assert_eq!(
        String::from_utf8_lossy(&out.stdout).trim(),
        r#"{"conversations":[]} 0.500000"#
    );
}
