use std::ffi::{CStr, CString};
use std::ptr;

use vcspline_ffi::*;

/// `y = (1 + u) x1 + sin(3u) x2` on a deterministic design.
fn toy(n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut x = Vec::with_capacity(2 * n);
    let mut u = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / n as f64;
        let x2 = ((i * 7919) % 101) as f64 / 50.0 - 1.0;
        x.extend([1.0, x2]);
        u.push(t);
        y.push(1.0 + t + (3.0 * t).sin() * x2 + 0.01 * ((i * 31) % 17) as f64);
    }
    (x, u, y)
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(vcs_last_error()) }.to_string_lossy().into_owned()
}

unsafe fn make_fit(n: usize, two_step: bool) -> (*mut VcsDataset, *mut VcsFit, Vec<f64>, Vec<f64>, Vec<f64>) {
    let (x, u, y) = toy(n);
    let mut ds = ptr::null_mut();
    assert_eq!(vcs_dataset_new(x.as_ptr(), u.as_ptr(), y.as_ptr(), n, 2, &mut ds), VcsStatus::Ok);
    let mut opts = std::mem::zeroed();
    assert_eq!(vcs_fit_options_default(&mut opts), VcsStatus::Ok);
    opts.two_step = u8::from(two_step);
    let mut fit = ptr::null_mut();
    assert_eq!(vcs_fit(ds, &opts, &mut fit), VcsStatus::Ok, "{}", last_error());
    (ds, fit, x, u, y)
}

#[test]
fn fit_summary_matches_in_sample_predictions() {
    unsafe {
        let (ds, fit, x, u, y) = make_fit(300, true);
        let mut s = std::mem::zeroed();
        assert_eq!(vcs_fit_summary(fit, &mut s), VcsStatus::Ok);
        assert_eq!((s.n, s.p, s.degree), (300, 2, 3));
        let mut yhat = vec![0.0; 300];
        assert_eq!(vcs_fit_predict(fit, x.as_ptr(), u.as_ptr(), 300, yhat.as_mut_ptr()), VcsStatus::Ok);
        let rss: f64 = y.iter().zip(&yhat).map(|(a, b)| (a - b) * (a - b)).sum();
        assert!((rss - s.rss).abs() <= 1e-8 * s.rss.max(1.0), "{rss} vs {}", s.rss);

        let mut total = 0;
        for j in 0..2 {
            let mut count = 0;
            assert_eq!(vcs_fit_knots(fit, j, ptr::null_mut(), 0, &mut count), VcsStatus::Ok);
            let mut buf = vec![0.0; count];
            assert_eq!(vcs_fit_knots(fit, j, buf.as_mut_ptr(), count, &mut count), VcsStatus::Ok);
            assert!(buf.windows(2).all(|w| w[0] < w[1]));
            assert!(buf.iter().all(|&k| k > 0.0 && k < 1.0));
            total += count;
        }
        assert_eq!(total, s.total_knots);
        vcs_fit_free(fit);
        vcs_dataset_free(ds);
    }
}

#[test]
fn eval_agrees_with_predict() {
    unsafe {
        let (ds, fit, _, _, _) = make_fit(200, false);
        let grid = [0.0, 0.25, 0.5, 0.99];
        let mut betas = vec![0.0; 8];
        assert_eq!(vcs_fit_eval(fit, grid.as_ptr(), 4, betas.as_mut_ptr()), VcsStatus::Ok);
        // unit rows pick out each coefficient
        let e1 = [1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        let mut out = vec![0.0; 4];
        assert_eq!(vcs_fit_predict(fit, e1.as_ptr(), grid.as_ptr(), 4, out.as_mut_ptr()), VcsStatus::Ok);
        for i in 0..4 {
            assert_eq!(out[i], betas[2 * i]);
        }
        // the intercept curve tracks 1 + u
        assert!((betas[4] - 1.5).abs() < 0.1, "{}", betas[4]);
        vcs_fit_free(fit);
        vcs_dataset_free(ds);
    }
}

#[test]
fn json_round_trip_preserves_the_model() {
    unsafe {
        let (ds, fit, _, _, _) = make_fit(200, true);
        let mut json = ptr::null_mut();
        assert_eq!(vcs_fit_to_json(fit, &mut json), VcsStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(vcs_fit_from_json(json, &mut back), VcsStatus::Ok);
        let grid: Vec<f64> = (0..50).map(|i| i as f64 / 49.0).collect();
        let mut a = vec![0.0; 100];
        let mut b = vec![0.0; 100];
        vcs_fit_eval(fit, grid.as_ptr(), 50, a.as_mut_ptr());
        vcs_fit_eval(back, grid.as_ptr(), 50, b.as_mut_ptr());
        assert_eq!(a, b);
        vcs_string_free(json);
        vcs_fit_free(back);
        vcs_fit_free(fit);
        vcs_dataset_free(ds);
    }
}

#[test]
fn selection_report_is_json() {
    unsafe {
        let (x, u, y) = toy(150);
        let mut ds = ptr::null_mut();
        vcs_dataset_new(x.as_ptr(), u.as_ptr(), y.as_ptr(), 150, 2, &mut ds);
        let mut json = ptr::null_mut();
        assert_eq!(vcs_select(ds, &mut json), VcsStatus::Ok, "{}", last_error());
        let text = CStr::from_ptr(json).to_str().unwrap();
        assert!(text.contains("\"active\"") && text.contains("\"lambda2\""));
        vcs_string_free(json);
        vcs_dataset_free(ds);
    }
}

#[test]
fn errors_set_status_and_message() {
    unsafe {
        let (x, u, y) = toy(10);
        let mut ds = ptr::null_mut();
        assert_eq!(
            vcs_dataset_new(x.as_ptr(), u.as_ptr(), y.as_ptr(), 10, 2, ptr::null_mut()),
            VcsStatus::NullPointer
        );
        assert_eq!(
            vcs_dataset_new(ptr::null(), u.as_ptr(), y.as_ptr(), 10, 2, &mut ds),
            VcsStatus::NullPointer
        );
        assert!(ds.is_null());
        assert_eq!(
            vcs_dataset_new(x.as_ptr(), u.as_ptr(), y.as_ptr(), 0, 2, &mut ds),
            VcsStatus::InvalidInput
        );
        assert!(last_error().contains("no rows"), "{}", last_error());

        let bad = CString::new("{\"degree\": 3").unwrap();
        let mut fit = ptr::null_mut();
        assert_eq!(vcs_fit_from_json(bad.as_ptr(), &mut fit), VcsStatus::Data);
        assert!(fit.is_null());

        // five rows cannot hold two cubic coefficient curves (8 parameters)
        assert_eq!(vcs_dataset_new(x.as_ptr(), u.as_ptr(), y.as_ptr(), 5, 2, &mut ds), VcsStatus::Ok);
        let status = vcs_fit(ds, ptr::null(), &mut fit);
        assert!(
            matches!(status, VcsStatus::InvalidInput | VcsStatus::Numerical),
            "{status:?}: {}",
            last_error()
        );
        assert!(fit.is_null());
        assert!(!last_error().is_empty());

        let mut opts = std::mem::zeroed();
        vcs_fit_options_default(&mut opts);
        opts.grid = 9;
        assert_eq!(vcs_fit(ds, &opts, &mut fit), VcsStatus::InvalidInput);

        let mut s = std::mem::zeroed();
        assert_eq!(vcs_fit_summary(ptr::null(), &mut s), VcsStatus::NullPointer);
        vcs_dataset_free(ds);
        vcs_dataset_free(ptr::null_mut());
        vcs_fit_free(ptr::null_mut());
        vcs_string_free(ptr::null_mut());
    }
}

#[test]
fn header_declares_the_api_and_compiles() {
    let dir = env!("CARGO_MANIFEST_DIR");
    let header = std::fs::read_to_string(format!("{dir}/include/vcspline.h")).unwrap();
    for name in [
        "vcs_dataset_new",
        "vcs_dataset_free",
        "vcs_fit_options_default",
        "vcs_fit(",
        "vcs_fit_free",
        "vcs_fit_summary",
        "vcs_fit_knots",
        "vcs_fit_eval",
        "vcs_fit_predict",
        "vcs_fit_to_json",
        "vcs_fit_from_json",
        "vcs_select",
        "vcs_string_free",
        "vcs_last_error",
        "VCS_STATUS_OK = 0",
        "typedef struct VcsFit VcsFit",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
    // syntax check with the system C compiler when one is installed
    let tmp = tempfile_path("vcs_header_check.c");
    std::fs::write(&tmp, "#include \"vcspline.h\"\nint main(void) { return VCS_STATUS_OK; }\n").unwrap();
    match std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-I"])
        .arg(format!("{dir}/include"))
        .arg(&tmp)
        .output()
    {
        Ok(out) => assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr)),
        Err(_) => eprintln!("no C compiler found; header syntax check skipped"),
    }
}

fn tempfile_path(name: &str) -> std::path::PathBuf {
    std::env::temp_dir().join(format!("{}_{name}", std::process::id()))
}
