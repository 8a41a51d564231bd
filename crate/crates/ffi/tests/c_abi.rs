use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use vgranger_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(vg_last_error()) }.to_string_lossy().into_owned()
}

fn generate(dgp: VgDgp, t: usize, d_p: usize, seed: u64) -> *mut VgBundle {
    let mut b = ptr::null_mut();
    let st = unsafe { vg_bundle_generate(dgp as i32, t, 1.0, d_p, 1, seed, &mut b) };
    assert_eq!(st, VgStatus::Ok, "{}", last_error());
    b
}

fn column(b: *const VgBundle, which: VgSeries, index: usize) -> Vec<f64> {
    let t = unsafe { vg_bundle_len(b) };
    let mut v = vec![0.0; t];
    let st = unsafe { vg_bundle_copy(b, which as i32, index, v.as_mut_ptr(), t) };
    assert_eq!(st, VgStatus::Ok, "{}", last_error());
    v
}

#[test]
fn bundle_matches_library_generator() {
    let b = generate(VgDgp::Null, 200, 2, 9);
    let cfg = vgranger::synthdata::DgpConfig {
        t: 200,
        ploss: 1.0,
        d_p: 2,
        d_z: 1,
        seed: 9,
        ..Default::default()
    };
    let lib = vgranger::synthdata::gen_null(&cfg).unwrap();
    assert_eq!(column(b, VgSeries::X, 0), lib.x);
    assert_eq!(column(b, VgSeries::P, 1), lib.p[1]);
    assert_eq!(column(b, VgSeries::Z, 0), lib.z.as_ref().unwrap()[0]);
    unsafe {
        assert_eq!(vg_bundle_columns(b, VgSeries::P as i32), 2);
        assert_eq!(vg_bundle_columns(b, 17), 0);
        vg_bundle_free(b);
    }
}

#[test]
fn errors_are_reported_not_raised() {
    unsafe {
        let mut b = ptr::null_mut();
        assert_eq!(vg_bundle_generate(0, 0, 1.0, 1, 1, 0, &mut b), VgStatus::InvalidArgument);
        assert!(b.is_null());
        assert!(!last_error().is_empty());
        assert_eq!(vg_bundle_generate(9, 10, 1.0, 1, 1, 0, &mut b), VgStatus::InvalidArgument);
        assert_eq!(vg_bundle_generate(0, 10, 1.0, 1, 1, 0, ptr::null_mut()), VgStatus::NullPointer);
        let mut r = std::mem::zeroed::<VgGrangerResult>();
        assert_eq!(
            vg_linear_granger(ptr::null(), ptr::null(), 10, ptr::null(), 0, 1, 0.05, &mut r),
            VgStatus::NullPointer
        );
        let missing = CString::new("/nonexistent/dir/file.csv").unwrap();
        assert_eq!(vg_bundle_load(missing.as_ptr(), &mut b), VgStatus::Io);
        let mut m = ptr::null_mut();
        assert_eq!(vg_model_load(missing.as_ptr(), &mut m), VgStatus::Io);
        let b = generate(VgDgp::Standin, 50, 1, 0);
        let bad = CString::new("{\"epochs\": 1, \"nope\": 3}").unwrap();
        assert_eq!(vg_model_train(b, bad.as_ptr(), &mut m), VgStatus::InvalidArgument);
        // stand-in bundles carry no proxies
        assert_ne!(vg_model_train(b, ptr::null(), &mut m), VgStatus::Ok);
        vg_bundle_free(b);
        assert_eq!(vg_f_cdf(1.0, 3.0, 7.0, &mut 0.0), VgStatus::Ok);
        assert!(last_error().is_empty());
    }
}

#[test]
fn tests_agree_with_library() {
    let b = generate(VgDgp::Causal, 300, 1, 4);
    let (x, y, z) = (column(b, VgSeries::X, 0), column(b, VgSeries::Y, 0), column(b, VgSeries::Z, 0));
    let series = [vgranger::granger::Series::new("z", &z)];
    unsafe {
        let mut r = std::mem::zeroed::<VgGrangerResult>();
        assert_eq!(vg_linear_granger(x.as_ptr(), y.as_ptr(), 300, z.as_ptr(), 1, 3, 0.05, &mut r), VgStatus::Ok);
        let lib = vgranger::granger::linear_granger(&x, &y, &series, 3, 0.05).unwrap();
        assert_eq!(r.statistic, lib.statistic);
        assert_eq!(r.p_value, lib.p_value.unwrap());
        assert_eq!((r.df_num, r.df_den), (lib.df_num.unwrap(), lib.df_den.unwrap()));

        assert_eq!(vg_gc_r2(x.as_ptr(), y.as_ptr(), 300, z.as_ptr(), 1, 3, 20, 6, 5, 8, &mut r), VgStatus::Ok);
        let cfg = vgranger::forest::ForestConfig {
            n_trees: 20,
            max_depth: 6,
            min_leaf: 5,
            ..Default::default()
        };
        let lib = vgranger::granger::gc_r2(&x, &y, &series, 3, &cfg, 8).unwrap();
        assert_eq!(r.statistic, lib.statistic);
        assert_eq!(r.method, VgMethod::RfR2);
        assert!(r.p_value.is_nan());

        assert_eq!(
            vg_nn_granger(x.as_ptr(), y.as_ptr(), 300, z.as_ptr(), 1, 3, 4, 30, 0.01, 2, 0.05, &mut r),
            VgStatus::Ok
        );
        let nn = vgranger::granger::NnConfig { hidden: 4, steps: 30, lr: 0.01, seed: 2 };
        let lib = vgranger::granger::nn_granger_conditional(&x, &y, &series, 3, &nn, 0.05).unwrap();
        assert_eq!(r.statistic, lib.statistic);
        vg_bundle_free(b);
    }
}

#[test]
fn model_train_estimate_save_load() {
    let tmp = tempfile::tempdir().unwrap();
    let b = generate(VgDgp::Causal, 120, 2, 1);
    let cfg = CString::new("{\"epochs\": 3, \"seed\": 4}").unwrap();
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(vg_model_train(b, cfg.as_ptr(), &mut m), VgStatus::Ok, "{}", last_error());
        assert_eq!(vg_model_dz(m), 1);
        let mut est = vec![0.0; 120];
        assert_eq!(vg_model_estimate(m, b, est.as_mut_ptr(), 120), VgStatus::Ok);
        assert_eq!(vg_model_estimate(m, b, est.as_mut_ptr(), 119), VgStatus::InvalidArgument);
        for name in ["m.ckpt", "m.json"] {
            let p = CString::new(tmp.path().join(name).to_str().unwrap()).unwrap();
            assert_eq!(vg_model_save(m, p.as_ptr()), VgStatus::Ok);
            let mut back = ptr::null_mut();
            assert_eq!(vg_model_load(p.as_ptr(), &mut back), VgStatus::Ok);
            let mut again = vec![0.0; 120];
            assert_eq!(vg_model_estimate(back, b, again.as_mut_ptr(), 120), VgStatus::Ok);
            assert_eq!(est, again);
            vg_model_free(back);
        }
        let csv = CString::new(tmp.path().join("b.csv").to_str().unwrap()).unwrap();
        assert_eq!(vg_bundle_save(b, csv.as_ptr()), VgStatus::Ok);
        let mut b2 = ptr::null_mut();
        assert_eq!(vg_bundle_load(csv.as_ptr(), &mut b2), VgStatus::Ok);
        assert_eq!(column(b2, VgSeries::P, 1), column(b, VgSeries::P, 1));
        vg_model_free(m);
        vg_bundle_free(b);
        vg_bundle_free(b2);
    }
}

#[test]
fn bundle_from_arrays_roundtrip() {
    let x: Vec<f64> = (0..30).map(|i| (i as f64).sin()).collect();
    let y: Vec<f64> = (0..30).map(|i| (i as f64 * 0.3).cos()).collect();
    let p: Vec<f64> = (0..60).map(|i| i as f64).collect();
    unsafe {
        let mut b = ptr::null_mut();
        let st = vg_bundle_from_arrays(x.as_ptr(), y.as_ptr(), 30, p.as_ptr(), 2, ptr::null(), 0, &mut b);
        assert_eq!(st, VgStatus::Ok);
        assert_eq!(column(b, VgSeries::P, 1), p[30..].to_vec());
        assert_eq!(vg_bundle_columns(b, VgSeries::Z as i32), 0);
        vg_bundle_free(b);
        let st = vg_bundle_from_arrays(x.as_ptr(), y.as_ptr(), 30, ptr::null(), 2, ptr::null(), 0, &mut b);
        assert_eq!(st, VgStatus::NullPointer);
    }
}

fn staticlib() -> Option<PathBuf> {
    let exe = std::env::current_exe().ok()?;
    let profile_dir = exe.parent()?.parent()?;
    let lib = profile_dir.join("libvgranger_ffi.a");
    lib.exists().then_some(lib)
}

fn have(cmd: &str) -> bool {
    Command::new(cmd).arg("--version").output().is_ok()
}

#[test]
fn c_program_builds_against_header() {
    let Some(lib) = staticlib() else {
        eprintln!("static library not found next to the test binary; skipping");
        return;
    };
    if !have("cc") {
        eprintln!("no C compiler; skipping");
        return;
    }
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let tmp = tempfile::tempdir().unwrap();
    let exe = tmp.path().join("smoke");
    let out = Command::new("cc")
        .args(["-std=c11", "-Wall", "-Werror", "-o"])
        .arg(&exe)
        .arg(root.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(root.join("include"))
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "ok");
}
