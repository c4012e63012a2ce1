//! C ABI for the vcspline library.
//!
//! Objects cross the boundary as opaque handles created by `vcs_*_new` or
//! `vcs_fit*` and released with the matching `*_free`. Every entry point
//! returns a `VcsStatus`; on failure `vcs_last_error` describes the most
//! recent error on the calling thread. Matrices are row-major. Panics are
//! caught and reported as `VCS_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::DMatrix;
use vcspline::knotdp::GridMode;
use vcspline::sparsesel::{select_variables, SelectOptions};
use vcspline::vcmodel::{eval_coefficients, fit_one_step, fit_two_step, predict, FitOptions};
use vcspline::{Dataset, Error, VCFit};

/// Result code of every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VcsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    DimensionMismatch = 3,
    /// Too few observations for the requested model, or a degenerate fit.
    Numerical = 4,
    /// Malformed JSON or other serialization failure.
    Data = 5,
    Panic = 6,
}

/// Observations `(x, u, y)`.
pub struct VcsDataset(Dataset);

/// A fitted varying-coefficient model.
pub struct VcsFit(VCFit);

/// Knot candidate set for the segmentation.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VcsGrid {
    Auto = 0,
    On = 1,
    Off = 2,
}

/// Fit settings; initialize with `vcs_fit_options_default`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VcsFitOptions {
    pub degree: u32,
    /// Segments hold at least `n^alpha` rows.
    pub alpha: f64,
    /// Segmentation penalties: `lambda0_points` log-spaced on `[lo, hi]`.
    pub lambda0_lo: f64,
    pub lambda0_hi: f64,
    pub lambda0_points: u32,
    /// A `VcsGrid` value.
    pub grid: u32,
    /// Sweep cap of the two-step search.
    pub max_sweeps: u32,
    /// Nonzero for per-predictor knots, zero for one shared knot set.
    pub two_step: u8,
}

/// Scalar summary of a fit.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VcsFitSummary {
    pub n: usize,
    pub p: usize,
    pub degree: u32,
    pub total_knots: usize,
    pub rss: f64,
    pub bic: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let text = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = text);
}

fn status_of(err: &Error) -> VcsStatus {
    match err {
        Error::InvalidInput(_) => VcsStatus::InvalidInput,
        Error::DimensionMismatch(_) => VcsStatus::DimensionMismatch,
        Error::OverParameterized { .. } | Error::Degenerate(_) => VcsStatus::Numerical,
        _ => VcsStatus::Data,
    }
}

struct Fail(VcsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(VcsStatus::NullPointer, format!("{what} is null"))
}

/// Runs `body`, recording any error or panic as the thread's last error.
fn guard(body: impl FnOnce() -> Result<(), Fail>) -> VcsStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => VcsStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(&format!("internal panic: {msg}"));
            VcsStatus::Panic
        }
    }
}

/// # Safety
/// `p` must be null or valid for `len` reads.
unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// # Safety
/// `p` must be null or valid for `len` writes.
unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn checked_len(rows: usize, cols: usize) -> Result<usize, Fail> {
    rows.checked_mul(cols)
        .ok_or_else(|| Fail(VcsStatus::InvalidInput, "matrix size overflows".into()))
}

fn into_c_string(s: String) -> Result<*mut c_char, Fail> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Fail(VcsStatus::Data, "string contains NUL".into()))
}

/// Message of the last failed call on this thread, or an empty string.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn vcs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Copies `n` rows of row-major `x` (`n x p`), `u` and `y` into a new dataset.
///
/// # Safety
/// `x` must be valid for `n * p` reads, `u` and `y` for `n` reads, and `out`
/// for one write.
#[no_mangle]
pub unsafe extern "C" fn vcs_dataset_new(
    x: *const f64,
    u: *const f64,
    y: *const f64,
    n: usize,
    p: usize,
    out: *mut *mut VcsDataset,
) -> VcsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let x = slice(x, checked_len(n, p)?, "x")?;
        let u = slice(u, n, "u")?;
        let y = slice(y, n, "y")?;
        let ds = Dataset::new(DMatrix::from_row_slice(n, p, x), u.to_vec(), y.to_vec())?;
        *out = Box::into_raw(Box::new(VcsDataset(ds)));
        Ok(())
    })
}

/// Releases a dataset; null is ignored.
///
/// # Safety
/// `ds` must be null or a handle from `vcs_dataset_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vcs_dataset_free(ds: *mut VcsDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Writes the library defaults to `out`.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn vcs_fit_options_default(out: *mut VcsFitOptions) -> VcsStatus {
    guard(|| {
        *out.as_mut().ok_or_else(|| null("out"))? = default_options();
        Ok(())
    })
}

fn default_options() -> VcsFitOptions {
    let d = FitOptions::default();
    let grid = d.lambda0_grid;
    VcsFitOptions {
        degree: d.degree as u32,
        alpha: d.alpha,
        lambda0_lo: grid[0],
        lambda0_hi: grid[grid.len() - 1],
        lambda0_points: grid.len() as u32,
        grid: VcsGrid::Auto as u32,
        max_sweeps: d.max_sweeps as u32,
        two_step: 1,
    }
}

fn fit_options(o: &VcsFitOptions) -> Result<FitOptions, Fail> {
    let bad = |m: &str| Fail(VcsStatus::InvalidInput, m.to_string());
    if !(o.lambda0_lo > 0.0 && o.lambda0_lo <= o.lambda0_hi && o.lambda0_hi.is_finite()) {
        return Err(bad("need 0 < lambda0_lo <= lambda0_hi"));
    }
    if o.lambda0_points == 0 {
        return Err(bad("lambda0_points must be positive"));
    }
    Ok(FitOptions {
        degree: o.degree as usize,
        lambda0_grid: vcspline::numcore::log_grid(o.lambda0_lo, o.lambda0_hi, o.lambda0_points as usize),
        alpha: o.alpha,
        grid: match o.grid {
            g if g == VcsGrid::Auto as u32 => GridMode::Auto,
            g if g == VcsGrid::On as u32 => GridMode::On,
            g if g == VcsGrid::Off as u32 => GridMode::Off,
            g => return Err(bad(&format!("unknown grid mode {g}"))),
        },
        max_sweeps: o.max_sweeps as usize,
        zero_init: false,
    })
}

/// Fits a model; `opts` may be null for the defaults.
///
/// # Safety
/// `ds` must be a live dataset handle, `opts` null or valid for one read,
/// and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn vcs_fit(
    ds: *const VcsDataset,
    opts: *const VcsFitOptions,
    out: *mut *mut VcsFit,
) -> VcsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let ds = ds.as_ref().ok_or_else(|| null("dataset"))?;
        let o = opts.as_ref().copied().unwrap_or_else(default_options);
        let fo = fit_options(&o)?;
        let fit = if o.two_step != 0 {
            fit_two_step(&ds.0, &fo)?
        } else {
            fit_one_step(&ds.0, &fo)?
        };
        *out = Box::into_raw(Box::new(VcsFit(fit)));
        Ok(())
    })
}

/// Releases a fit; null is ignored.
///
/// # Safety
/// `fit` must be null or a live fit handle.
#[no_mangle]
pub unsafe extern "C" fn vcs_fit_free(fit: *mut VcsFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// # Safety
/// `fit` must be a live fit handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn vcs_fit_summary(fit: *const VcsFit, out: *mut VcsFitSummary) -> VcsStatus {
    guard(|| {
        let f = &fit.as_ref().ok_or_else(|| null("fit"))?.0;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = VcsFitSummary {
            n: f.n,
            p: f.p,
            degree: f.degree as u32,
            total_knots: f.knots.total(),
            rss: f.rss,
            bic: f.bic,
        };
        Ok(())
    })
}

/// Copies predictor `j`'s knots into `buf` (capacity `cap`) and stores their
/// count in `count`. With `buf` null only the count is written.
///
/// # Safety
/// `fit` must be a live fit handle, `count` valid for one write, and `buf`
/// null or valid for `cap` writes.
#[no_mangle]
pub unsafe extern "C" fn vcs_fit_knots(
    fit: *const VcsFit,
    j: usize,
    buf: *mut f64,
    cap: usize,
    count: *mut usize,
) -> VcsStatus {
    guard(|| {
        let f = &fit.as_ref().ok_or_else(|| null("fit"))?.0;
        let count = count.as_mut().ok_or_else(|| null("count"))?;
        let knots = f.knots.per_predictor.get(j).ok_or_else(|| {
            Fail(VcsStatus::InvalidInput, format!("predictor {j} out of range"))
        })?;
        *count = knots.len();
        if !buf.is_null() {
            if cap < knots.len() {
                return Err(Fail(VcsStatus::DimensionMismatch, "knot buffer too small".into()));
            }
            slice_mut(buf, knots.len(), "buf")?.copy_from_slice(knots);
        }
        Ok(())
    })
}

/// `beta_j(u_i)` into row-major `out` (`n_u x p`).
///
/// # Safety
/// `fit` must be a live fit handle, `u` valid for `n_u` reads and `out` for
/// `n_u * p` writes.
#[no_mangle]
pub unsafe extern "C" fn vcs_fit_eval(
    fit: *const VcsFit,
    u: *const f64,
    n_u: usize,
    out: *mut f64,
) -> VcsStatus {
    guard(|| {
        let f = &fit.as_ref().ok_or_else(|| null("fit"))?.0;
        let u = slice(u, n_u, "u")?;
        let out = slice_mut(out, checked_len(n_u, f.p)?, "out")?;
        let betas = eval_coefficients(f, u)?;
        for i in 0..n_u {
            for j in 0..f.p {
                out[i * f.p + j] = betas[(i, j)];
            }
        }
        Ok(())
    })
}

/// Predictions for `n` new rows of row-major `x` (`n x p`) at `u`.
///
/// # Safety
/// `fit` must be a live fit handle, `x` valid for `n * p` reads, `u` for `n`
/// reads and `out` for `n` writes.
#[no_mangle]
pub unsafe extern "C" fn vcs_fit_predict(
    fit: *const VcsFit,
    x: *const f64,
    u: *const f64,
    n: usize,
    out: *mut f64,
) -> VcsStatus {
    guard(|| {
        let f = &fit.as_ref().ok_or_else(|| null("fit"))?.0;
        let x = slice(x, checked_len(n, f.p)?, "x")?;
        let u = slice(u, n, "u")?;
        let out = slice_mut(out, n, "out")?;
        let yhat = predict(f, &DMatrix::from_row_slice(n, f.p, x), u)?;
        out.copy_from_slice(&yhat);
        Ok(())
    })
}

/// Model JSON; release the string with `vcs_string_free`.
///
/// # Safety
/// `fit` must be a live fit handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn vcs_fit_to_json(fit: *const VcsFit, out: *mut *mut c_char) -> VcsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let f = &fit.as_ref().ok_or_else(|| null("fit"))?.0;
        *out = into_c_string(f.to_json()?)?;
        Ok(())
    })
}

/// Loads a fit from model JSON.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn vcs_fit_from_json(json: *const c_char, out: *mut *mut VcsFit) -> VcsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if json.is_null() {
            return Err(null("json"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|_| Fail(VcsStatus::Data, "JSON is not UTF-8".into()))?;
        *out = Box::into_raw(Box::new(VcsFit(VCFit::from_json(text)?)));
        Ok(())
    })
}

/// Runs predictor selection with default settings and returns the selection
/// report as JSON; release it with `vcs_string_free`.
///
/// # Safety
/// `ds` must be a live dataset handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn vcs_select(ds: *const VcsDataset, out: *mut *mut c_char) -> VcsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let ds = ds.as_ref().ok_or_else(|| null("dataset"))?;
        let sel = select_variables(&ds.0, &SelectOptions::default())?;
        *out = into_c_string(sel.report.to_json()?)?;
        Ok(())
    })
}

/// Releases a string returned by this library; null is ignored.
///
/// # Safety
/// `s` must be null or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vcs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
