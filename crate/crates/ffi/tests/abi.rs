use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use artic_ffi::*;

fn last_error() -> String {
    let p = artic_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn scalar_functions_match_core() {
    unsafe {
        let mut qp = 0u8;
        assert_eq!(artic_qp_from_correlation(1.0, 3.0, &mut qp), ArticStatus::Ok);
        assert_eq!(qp, 0);
        assert_eq!(artic_qp_from_correlation(-1.0, 3.0, &mut qp), ArticStatus::Ok);
        assert_eq!(qp, 51);

        let mut bits = 0.0;
        assert_eq!(artic_patch_bits(32, 1000.0, 26, 6.0, &mut bits), ArticStatus::Ok);
        assert!((bits - 500.0).abs() < 1e-9);

        let (a, b) = ([1.0, 0.0], [0.0, 2.0]);
        let mut cos = 1.0;
        assert_eq!(artic_cosine_similarity(a.as_ptr(), b.as_ptr(), 2, &mut cos), ArticStatus::Ok);
        assert_eq!(cos, 0.0);

        let mut d = ArticRateDecision { rate: 0.0, k: 0, residual_violation: false };
        assert_eq!(artic_select_frame_rate(0.1, 10.0, 2.0, 0.001, 60.0, &mut d), ArticStatus::Ok);
        assert_eq!(d.rate, 34.0);
        assert!(!d.residual_violation);
    }
}

#[test]
fn errors_set_status_and_message() {
    unsafe {
        let mut qp = 0u8;
        assert_eq!(artic_qp_from_correlation(2.0, 3.0, &mut qp), ArticStatus::InvalidArgument);
        assert!(last_error().contains("correlation"), "{}", last_error());
        assert_eq!(artic_qp_from_correlation(0.0, 3.0, ptr::null_mut()), ArticStatus::NullPointer);
        assert!(last_error().contains("out"));

        let missing = CString::new("/no/such/map.artc").unwrap();
        let mut map = ptr::null_mut();
        assert_eq!(artic_map_load(missing.as_ptr(), &mut map), ArticStatus::NotFound);
        assert!(map.is_null());
        assert!(last_error().contains("/no/such/map.artc"));

        let bad = [0xffu8, 0];
        let mut csv = ptr::null_mut();
        assert_eq!(artic_run_scenario(bad.as_ptr().cast(), 1, &mut csv), ArticStatus::InvalidUtf8);
    }
}

#[test]
fn map_handle_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("m.artc").to_str().unwrap()).unwrap();
    let values = [1.0f32, 0.0, -1.0, 0.5, -0.5, 0.25];
    unsafe {
        let mut map = ptr::null_mut();
        assert_eq!(artic_map_new(2, 3, 64, values.as_ptr(), values.len(), &mut map), ArticStatus::Ok);
        assert_eq!(artic_map_save(map, path.as_ptr()), ArticStatus::Ok);
        artic_map_free(map);

        let mut loaded = ptr::null_mut();
        assert_eq!(artic_map_load(path.as_ptr(), &mut loaded), ArticStatus::Ok);
        let (mut rows, mut cols, mut patch) = (0usize, 0usize, 0u16);
        assert_eq!(artic_map_dims(loaded, &mut rows, &mut cols, &mut patch), ArticStatus::Ok);
        assert_eq!((rows, cols, patch), (2, 3, 64));

        let mut total = 0.0;
        let mut qps = [0u8; 6];
        assert_eq!(
            artic_frame_budget(loaded, 3.0, 1000.0, 26, 6.0, &mut total, qps.as_mut_ptr(), qps.len()),
            ArticStatus::Ok
        );
        assert_eq!((qps[0], qps[2]), (0, 51));
        let mut sum = 0.0;
        for &q in &qps {
            let mut b = 0.0;
            artic_patch_bits(q, 1000.0, 26, 6.0, &mut b);
            sum += b;
        }
        assert!((total - sum).abs() < 1e-6 * sum);

        assert_eq!(
            artic_frame_budget(loaded, 3.0, 1000.0, 26, 6.0, &mut total, qps.as_mut_ptr(), 5),
            ArticStatus::InvalidArgument
        );
        artic_map_free(loaded);
        artic_map_free(ptr::null_mut());
    }
}

#[test]
fn controller_handle_tracks_loss() {
    unsafe {
        let mut ctrl = ptr::null_mut();
        assert_eq!(artic_controller_new(2.0, 0.001, 60.0, 0.3, &mut ctrl), ArticStatus::Ok);
        let sizes = [112_000.0f64; 16];
        let mut d = ArticRateDecision { rate: 0.0, k: 0, residual_violation: false };
        for _ in 0..60 {
            assert_eq!(
                artic_controller_on_epoch(ctrl, 950, 50, sizes.as_ptr(), sizes.len(), 11_200.0, &mut d),
                ArticStatus::Ok
            );
        }
        let mut p = 0.0;
        assert_eq!(artic_controller_loss(ctrl, &mut p), ArticStatus::Ok);
        assert!((p - 0.05).abs() < 1e-3, "{p}");
        assert_eq!(d.rate, 16.0);
        artic_controller_free(ctrl);

        assert_eq!(artic_controller_new(0.0, 0.001, 60.0, 0.3, &mut ctrl), ArticStatus::InvalidArgument);
    }
}

#[test]
fn run_scenario_returns_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.conf");
    std::fs::write(&cfg, "[scenario]\nduration_s = 2\nseeds = 2,1\n").unwrap();
    let cfg = CString::new(cfg.to_str().unwrap()).unwrap();
    unsafe {
        let mut csv = ptr::null_mut();
        assert_eq!(artic_run_scenario(cfg.as_ptr(), 2, &mut csv), ArticStatus::Ok);
        let text = CStr::from_ptr(csv).to_str().unwrap().to_string();
        artic_string_free(csv);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("scenario_id,seed,"));
        assert!(lines[1].starts_with("default,1,") && lines[2].starts_with("default,2,"));
    }
}

#[test]
fn header_compiles_and_links_from_c() {
    let manifest = env!("CARGO_MANIFEST_DIR");
    let include = format!("{manifest}/include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(
        &src,
        r#"#include "artic.h"
#include <stdio.h>
int main(void) {
    uint8_t qp = 0;
    if (artic_qp_from_correlation(-1.0, 3.0, &qp) != ARTIC_STATUS_OK || qp != 51) return 1;
    ArticRateDecision d;
    if (artic_select_frame_rate(0.01, 10.0, 2.0, 0.001, 60.0, &d) != ARTIC_STATUS_OK) return 2;
    if (d.rate != 6.0 || d.k != 3) return 3;
    if (artic_qp_from_correlation(0.0, 3.0, NULL) != ARTIC_STATUS_NULL_POINTER) return 4;
    if (artic_last_error() == NULL) return 5;
    ArticController *c = NULL;
    if (artic_controller_new(2.0, 0.001, 60.0, 0.3, &c) != ARTIC_STATUS_OK) return 6;
    artic_controller_free(c);
    puts("ok");
    return 0;
}
"#,
    )
    .unwrap();
    let Ok(cc) = Command::new("cc").arg("--version").output() else {
        eprintln!("no C compiler, skipping");
        return;
    };
    assert!(cc.status.success());

    // the rlib this test links against sits next to the cdylib/staticlib
    let exe = std::env::current_exe().unwrap();
    let target = exe.parent().unwrap().parent().unwrap();
    let staticlib = target.join("libartic_ffi.a");
    let out = dir.path().join("main");
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-I", &include])
        .arg(&src)
        .arg(&staticlib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success(), "C build failed");
    let run = Command::new(&out).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "ok");
}
