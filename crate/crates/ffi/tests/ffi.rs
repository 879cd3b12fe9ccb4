use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use riskmap_ffi::*;

fn last_error() -> String {
    let p = rm_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

const SAMPLER: &str = "[sampler]\nchains = 2\nwarmup = 100\niterations = 100\nthin = 1\n";

#[test]
fn dataset_errors_are_reported() {
    let mut d: *mut RmDataset = ptr::null_mut();
    let times = [1.0, -2.0];
    let events = [1u8, 0];
    let coords = [0.0, 0.0, 1.0, 1.0];
    let st = unsafe {
        rm_dataset_new(2, times.as_ptr(), events.as_ptr(), 1, 0, ptr::null(), ptr::null(), coords.as_ptr(), &mut d)
    };
    assert_eq!(st, RmStatus::Data);
    assert!(d.is_null());
    assert!(last_error().contains("rows [1]"), "{}", last_error());

    let st = unsafe { rm_dataset_new(2, ptr::null(), events.as_ptr(), 1, 0, ptr::null(), ptr::null(), coords.as_ptr(), &mut d) };
    assert_eq!(st, RmStatus::NullPointer);
    assert!(last_error().contains("times"));

    let times = [1.0, 2.0];
    let st = unsafe {
        rm_dataset_new(2, times.as_ptr(), events.as_ptr(), 1, 0, ptr::null(), ptr::null(), coords.as_ptr(), &mut d)
    };
    assert_eq!(st, RmStatus::Ok);
    assert!(rm_last_error_message().is_null());
    assert_eq!(unsafe { rm_dataset_n(d) }, 2);

    let bad = CString::new("[model]\nintervalz = 3\n").unwrap();
    let mut m: *mut RmModel = ptr::null_mut();
    assert_eq!(unsafe { rm_model_new(d, bad.as_ptr(), &mut m) }, RmStatus::Config);
    assert!(last_error().contains("intervalz"));
    unsafe { rm_dataset_free(d) };
    unsafe { rm_dataset_free(ptr::null_mut()) };
}

#[test]
fn gradient_matches_finite_differences() {
    let mut d: *mut RmDataset = ptr::null_mut();
    assert_eq!(unsafe { rm_simulate(40, 5, 0.4, &mut d) }, RmStatus::Ok);
    let cfg = CString::new("[model]\nintervals = 3\nspatial = \"intercept\"\n[hsgp]\nm_per_dim = 3\n").unwrap();
    let mut m: *mut RmModel = ptr::null_mut();
    assert_eq!(unsafe { rm_model_new(d, cfg.as_ptr(), &mut m) }, RmStatus::Ok);
    let dim = unsafe { rm_model_dim(m) };
    let u: Vec<f64> = (0..dim).map(|i| 0.1 * ((i as f64) * 0.7).sin()).collect();
    let mut g = vec![0.0; dim];
    let mut lp = 0.0;
    assert_eq!(unsafe { rm_model_log_posterior(m, u.as_ptr(), dim, g.as_mut_ptr(), &mut lp) }, RmStatus::Ok);
    assert!(lp.is_finite());
    let h = 1e-5;
    for i in [0, dim / 2, dim - 1] {
        let mut up = u.clone();
        let mut dn = u.clone();
        up[i] += h;
        dn[i] -= h;
        let (mut a, mut b) = (0.0, 0.0);
        unsafe {
            rm_model_log_posterior(m, up.as_ptr(), dim, ptr::null_mut(), &mut a);
            rm_model_log_posterior(m, dn.as_ptr(), dim, ptr::null_mut(), &mut b);
        }
        let fd = (a - b) / (2.0 * h);
        assert!((fd - g[i]).abs() <= 1e-5 * (1.0 + g[i].abs()), "coordinate {i}: {fd} vs {}", g[i]);
    }
    assert_eq!(unsafe { rm_model_log_posterior(m, u.as_ptr(), dim - 1, ptr::null_mut(), &mut lp) }, RmStatus::InvalidArgument);
    unsafe {
        rm_model_free(m);
        rm_dataset_free(d);
    }
}

#[test]
fn fit_summarize_krige_cluster() {
    let mut d: *mut RmDataset = ptr::null_mut();
    assert_eq!(unsafe { rm_simulate(50, 9, 0.4, &mut d) }, RmStatus::Ok);
    let cfg = CString::new("[model]\nintervals = 3\n[hsgp]\nm_per_dim = 4\n").unwrap();
    let mut m: *mut RmModel = ptr::null_mut();
    assert_eq!(unsafe { rm_model_new(d, cfg.as_ptr(), &mut m) }, RmStatus::Ok);
    let sampler = CString::new(SAMPLER).unwrap();
    let mut draws: *mut RmDraws = ptr::null_mut();
    assert_eq!(unsafe { rm_fit(m, sampler.as_ptr(), 3, &mut draws) }, RmStatus::Ok);
    let total = unsafe { rm_draws_total(draws) };
    assert_eq!(total, 200);
    let names: Vec<String> = (0..unsafe { rm_draws_n_params(draws) })
        .map(|i| unsafe { CStr::from_ptr(rm_draws_param_name(draws, i)) }.to_str().unwrap().to_string())
        .collect();
    assert_eq!(names[0], "beta[1,1]");
    assert!(unsafe { rm_draws_param_name(draws, names.len()) }.is_null());

    let name = CString::new("beta_w[2]").unwrap();
    let mut buf = vec![0.0; total];
    assert_eq!(unsafe { rm_draws_quantity(draws, name.as_ptr(), buf.as_mut_ptr(), total) }, RmStatus::Ok);
    assert_eq!(unsafe { rm_draws_quantity(draws, name.as_ptr(), buf.as_mut_ptr(), 3) }, RmStatus::BufferTooSmall);
    let mut s = RmSummary::default();
    assert_eq!(unsafe { rm_draws_summary(draws, name.as_ptr(), true, &mut s) }, RmStatus::Ok);
    let mean_exp = buf.iter().map(|v| v.exp()).sum::<f64>() / total as f64;
    assert!((s.mean - mean_exp).abs() < 1e-12);
    assert!(s.q025 <= s.q50 && s.q50 <= s.q975);
    let unknown = CString::new("nope").unwrap();
    assert_eq!(unsafe { rm_draws_summary(draws, unknown.as_ptr(), false, &mut s) }, RmStatus::InvalidArgument);

    let (mut w, mut lppd, mut pw) = (0.0, 0.0, 0.0);
    assert_eq!(unsafe { rm_draws_waic(draws, &mut w, &mut lppd, &mut pw) }, RmStatus::Ok);
    assert!((w + 2.0 * (lppd - pw)).abs() < 1e-9);
    let (mut rhat, mut div) = (0.0, 0usize);
    assert_eq!(unsafe { rm_draws_diagnostics(draws, &mut rhat, &mut div) }, RmStatus::Ok);
    assert!(rhat >= 1.0 - 1e-9);

    let locs = [0.0, 0.0, 0.5, 0.5, -0.5, 0.25];
    let mut surf: *mut RmSurfaces = ptr::null_mut();
    assert_eq!(unsafe { rm_krige(m, draws, locs.as_ptr(), 3, 1, &mut surf) }, RmStatus::Ok);
    assert_eq!(unsafe { rm_surfaces_count(surf) }, 4);
    let (mut slope, mut risk, mut nd, mut nl) = (false, 0usize, 0usize, 0usize);
    assert_eq!(unsafe { rm_surfaces_info(surf, 3, &mut slope, &mut risk, &mut nd, &mut nl) }, RmStatus::Ok);
    assert!(slope && risk == 2 && nd == total && nl == 3);
    assert_eq!(unsafe { rm_surfaces_info(surf, 4, &mut slope, &mut risk, &mut nd, &mut nl) }, RmStatus::OutOfRange);
    let mut mat = vec![0.0; nd * nl];
    assert_eq!(unsafe { rm_surfaces_copy(surf, 3, mat.as_mut_ptr(), mat.len()) }, RmStatus::Ok);
    assert!(mat.iter().all(|&v| v > 0.0));

    let mut labels = [0u32; 3];
    let mut centers = [0.0; 2];
    let mut probs = [0.0; 6];
    let mut loss = 0.0;
    let st = unsafe {
        rm_cluster(mat.as_ptr(), nd, nl, 2, 5, 1, labels.as_mut_ptr(), centers.as_mut_ptr(), probs.as_mut_ptr(), &mut loss)
    };
    assert_eq!(st, RmStatus::Ok);
    assert!(labels.iter().all(|&l| l == 1 || l == 2));
    assert!(centers[0] <= centers[1] && loss >= 0.0);
    for row in probs.chunks(2) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    let st = unsafe {
        rm_cluster(mat.as_ptr(), nd, nl, 4, 5, 1, labels.as_mut_ptr(), centers.as_mut_ptr(), ptr::null_mut(), ptr::null_mut())
    };
    assert_eq!(st, RmStatus::InvalidArgument);
    unsafe {
        rm_surfaces_free(surf);
        rm_draws_free(draws);
        rm_model_free(m);
        rm_dataset_free(d);
    }
}

#[test]
fn header_is_generated_and_compiles_with_a_c_client() {
    let crate_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(crate_dir.join("include/riskmap.h")).unwrap();
    for f in ["rm_last_error_message", "rm_dataset_new", "rm_model_new", "rm_fit", "rm_krige", "rm_cluster", "rm_draws_free"] {
        assert!(header.contains(&format!("{f}(")), "{f} missing from header");
    }
    assert!(header.contains("typedef struct RmModel RmModel;"));

    let tmp = PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    let profile_dir = tmp.parent().unwrap().join(if cfg!(debug_assertions) { "debug" } else { "release" });
    let lib = profile_dir.join("libriskmap_ffi.a");
    assert!(lib.exists(), "static library not found at {}", lib.display());
    let src = tmp.join("ffi_client.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include "riskmap.h"
int main(void) {
    RmDataset *d = NULL;
    if (rm_simulate(30, 1, 0.4, &d) != RM_STATUS_OK) return 1;
    if (rm_dataset_n(d) != 30) return 2;
    RmModel *m = NULL;
    if (rm_model_new(d, "[model]\nintervalz = 2\n", &m) != RM_STATUS_CONFIG) return 3;
    if (rm_last_error_message() == NULL) return 4;
    if (rm_model_new(d, "[model]\nspatial = \"none\"\n", &m) != RM_STATUS_OK) return 5;
    printf("%s %zu\n", rm_version(), rm_model_dim(m));
    rm_model_free(m);
    rm_dataset_free(d);
    return 0;
}
"#,
    )
    .unwrap();
    let exe = tmp.join("ffi_client");
    let cc = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .expect("C compiler available");
    assert!(cc.status.success(), "{}", String::from_utf8_lossy(&cc.stderr));
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "client exited with {:?}", run.status.code());
    let out = String::from_utf8(run.stdout).unwrap();
    assert!(out.starts_with(env!("CARGO_PKG_VERSION")), "{out}");
}
