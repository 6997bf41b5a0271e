use std::ffi::{c_char, CStr};
use std::ptr;

use tshap_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    unsafe { tshap_last_error_message(buf.as_mut_ptr(), buf.len()) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(tshap_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn exact_aggregation_of_an_additive_table() {
    // val(A) = sum of w_j over A: effects equal the weights
    let w = [0.2, 0.3, 0.5];
    let costs: Vec<f64> = (0..8u32).map(|m| (0..3).filter(|j| m >> j & 1 == 1).map(|j| w[j]).sum()).collect();
    let mut out = [0.0; 3];
    let st = unsafe { tshap_shapley_exact(costs.as_ptr(), 3, out.as_mut_ptr()) };
    assert_eq!(st, TshapStatus::TshapOk);
    for (a, b) in out.iter().zip(w) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn oracle_through_handles() {
    let beta = [1.0, 1.0, 1.0];
    let mu = [0.0; 3];
    let sigma = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
    let mut model = ptr::null_mut();
    let st = unsafe { tshap_linear_model_new(0.0, beta.as_ptr(), mu.as_ptr(), sigma.as_ptr(), 3, 2.0, &mut model) };
    assert_eq!(st, TshapStatus::TshapOk);
    let mut p = 0.0;
    assert_eq!(unsafe { tshap_linear_model_failure_probability(model, &mut p) }, TshapStatus::TshapOk);
    // P(N(0, 3) > 2)
    assert!((p - 0.124_106_539_494_961_81).abs() < 1e-12, "{p}");
    for cost in [TshapOracleCost::TshapCostClosedSobol, TshapOracleCost::TshapCostResidual, TshapOracleCost::TshapCostL1] {
        let mut e = [0.0; 3];
        assert_eq!(unsafe { tshap_oracle_effects(model, cost, e.as_mut_ptr(), 3) }, TshapStatus::TshapOk);
        for v in e {
            assert!((v - 1.0 / 3.0).abs() < 1e-6, "{cost:?} {e:?}");
        }
    }
    let mut short = [0.0; 2];
    let st = unsafe { tshap_oracle_effects(model, TshapOracleCost::TshapCostClosedSobol, short.as_mut_ptr(), 2) };
    assert_eq!(st, TshapStatus::TshapErrInvalid);
    unsafe { tshap_linear_model_free(model) };
}

#[test]
fn knn_through_handles() {
    // y depends on the first input only
    let n = 2000;
    let mut x = Vec::with_capacity(2 * n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let a = (i as f64 * 0.618_033_988_749_895).fract();
        let b = (i as f64 * 0.414_213_562_373_095).fract();
        x.extend([a, b]);
        y.push(a);
    }
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { tshap_sample_new(x.as_ptr(), n, 2, y.as_ptr(), &mut s) }, TshapStatus::TshapOk);
    let (mut rows, mut d) = (0, 0);
    assert_eq!(unsafe { tshap_sample_shape(s, &mut rows, &mut d) }, TshapStatus::TshapOk);
    assert_eq!((rows, d), (n, 2));
    let mut e = [0.0; 2];
    let mut p = 0.0;
    let st = unsafe { tshap_knn_effects(s, 0.7, 3, 1, 0, 7, e.as_mut_ptr(), 2, &mut p) };
    assert_eq!(st, TshapStatus::TshapOk, "{}", last_error());
    assert!((p - 0.3).abs() < 0.01, "{p}");
    assert!(e[0] > 0.9 && e[1].abs() < 0.1, "{e:?}");

    let st = unsafe { tshap_knn_effects(s, 5.0, 3, 1, 0, 7, e.as_mut_ptr(), 2, ptr::null_mut()) };
    assert_eq!(st, TshapStatus::TshapErrDegenerate);
    assert!(last_error().contains("degenerate"));
    unsafe { tshap_sample_free(s) };
}

#[test]
fn null_pointers_are_reported() {
    let mut e = [0.0; 2];
    let st = unsafe { tshap_knn_effects(ptr::null(), 0.0, 3, 1, 0, 0, e.as_mut_ptr(), 2, ptr::null_mut()) };
    assert_eq!(st, TshapStatus::TshapErrNull);
    assert!(last_error().contains("sample"));
    let st = unsafe { tshap_sample_new(ptr::null(), 3, 2, ptr::null(), ptr::null_mut()) };
    assert_eq!(st, TshapStatus::TshapErrNull);
    unsafe { tshap_sample_free(ptr::null_mut()) };
    unsafe { tshap_linear_model_free(ptr::null_mut()) };
}

#[test]
fn singular_covariance_is_numeric_error() {
    let beta = [1.0, 1.0];
    let mu = [0.0; 2];
    let sigma = [1.0, 2.0, 2.0, 1.0];
    let mut model = ptr::null_mut();
    let st = unsafe { tshap_linear_model_new(0.0, beta.as_ptr(), mu.as_ptr(), sigma.as_ptr(), 2, 0.0, &mut model) };
    assert_eq!(st, TshapStatus::TshapErrNumeric, "{}", last_error());
    assert!(model.is_null());
}

#[test]
fn header_declares_every_export() {
    let header = include_str!("../include/tshap.h");
    for name in [
        "tshap_version",
        "tshap_last_error_message",
        "tshap_sample_new",
        "tshap_sample_free",
        "tshap_sample_shape",
        "tshap_knn_effects",
        "tshap_linear_model_new",
        "tshap_linear_model_free",
        "tshap_linear_model_failure_probability",
        "tshap_oracle_effects",
        "tshap_shapley_exact",
        "typedef struct TshapSample TshapSample",
        "TSHAP_ERR_DEGENERATE = 3",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = which_cc() else { return };
    let dir = tempdir();
    let src = dir.join("use.c");
    std::fs::write(
        &src,
        "#include \"tshap.h\"\nint main(void) { TshapSample *s = 0; tshap_sample_free(s); return TSHAP_OK; }\n",
    )
    .unwrap();
    let include = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    let out = std::process::Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I", include])
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn which_cc() -> Result<&'static str, ()> {
    for cc in ["cc", "gcc", "clang"] {
        if std::process::Command::new(cc).arg("--version").output().is_ok() {
            return Ok(cc);
        }
    }
    Err(())
}

fn tempdir() -> std::path::PathBuf {
    let d = std::env::temp_dir().join(format!("tshap-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}
