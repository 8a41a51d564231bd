//! C interface to `vgranger`.
//!
//! Every fallible function returns a [`VgStatus`]; on failure a message is
//! available from [`vg_last_error`] on the same thread. Bundles and models
//! are opaque handles released with their `_free` functions. Series passed
//! as `cond` arrays are column-major: `n_cond` columns of length `t`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use vgranger::forest::ForestConfig;
use vgranger::granger::{gc_r2, linear_granger, nn_granger_conditional, GrangerResult, Method, NnConfig, Series};
use vgranger::synthdata::{gen_causal, gen_null, gen_standin, load_csv, save_csv, DgpConfig, Provenance, Schema, TimeSeriesBundle};
use vgranger::tcvae::{estimate_confounder, train, TcvaeConfig, TcvaeError, TcvaeModel};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Data = 3,
    Io = 4,
    /// Training hit a non-finite value; the last good model is returned.
    Diverged = 5,
    Panic = 6,
}

/// Which data-generating process `vg_bundle_generate` uses.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VgDgp {
    Null = 0,
    Causal = 1,
    /// Seasonal stand-in; has a confounder but no proxies.
    Standin = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VgSeries {
    X = 0,
    Y = 1,
    P = 2,
    Z = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VgMethod {
    Linear = 0,
    NnFtest = 1,
    RfR2 = 2,
}

/// Flat copy of a test result. `p_value` is NaN and the degrees of freedom
/// are 0 for tests without an F distribution.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VgGrangerResult {
    pub method: VgMethod,
    pub restricted: f64,
    pub full: f64,
    pub statistic: f64,
    pub p_value: f64,
    pub df_num: usize,
    pub df_den: usize,
    pub lag: usize,
    pub n: usize,
    pub alpha: f64,
    pub reject: bool,
}

impl VgDgp {
    fn from_raw(v: i32) -> Result<Self, Failure> {
        match v {
            0 => Ok(Self::Null),
            1 => Ok(Self::Causal),
            2 => Ok(Self::Standin),
            _ => Err(Failure::arg(format!("unknown dgp {v}"))),
        }
    }
}

impl VgSeries {
    fn from_raw(v: i32) -> Result<Self, Failure> {
        match v {
            0 => Ok(Self::X),
            1 => Ok(Self::Y),
            2 => Ok(Self::P),
            3 => Ok(Self::Z),
            _ => Err(Failure::arg(format!("unknown series family {v}"))),
        }
    }
}

impl From<&GrangerResult> for VgGrangerResult {
    fn from(r: &GrangerResult) -> Self {
        Self {
            method: match r.method {
                Method::Linear => VgMethod::Linear,
                Method::NnFtest => VgMethod::NnFtest,
                Method::RfR2 => VgMethod::RfR2,
            },
            restricted: r.restricted,
            full: r.full,
            statistic: r.statistic,
            p_value: r.p_value.unwrap_or(f64::NAN),
            df_num: r.df_num.unwrap_or(0),
            df_den: r.df_den.unwrap_or(0),
            lag: r.lag,
            n: r.n,
            alpha: r.alpha,
            reject: r.reject,
        }
    }
}

/// Opaque time-series bundle.
pub struct VgBundle {
    inner: TimeSeriesBundle,
}

/// Opaque trained model.
pub struct VgModel {
    inner: TcvaeModel,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(VgStatus, String);

impl Failure {
    fn null(what: &str) -> Self {
        Failure(VgStatus::NullPointer, format!("{what} is null"))
    }
    fn arg(msg: impl Into<String>) -> Self {
        Failure(VgStatus::InvalidArgument, msg.into())
    }
    fn data(e: impl std::fmt::Display) -> Self {
        Failure(VgStatus::Data, e.to_string())
    }
    fn io(e: impl std::fmt::Display) -> Self {
        Failure(VgStatus::Io, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> VgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            VgStatus::Ok
        }
        Ok(Err(Failure(code, msg))) => {
            set_error(msg);
            code
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            VgStatus::Panic
        }
    }
}

unsafe fn slice<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(Failure::null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn columns(ptr: *const f64, n: usize, t: usize, what: &str) -> Result<Vec<Vec<f64>>, Failure> {
    let all = slice(ptr, n * t, what)?;
    Ok(all.chunks_exact(t.max(1)).take(n).map(<[f64]>::to_vec).collect())
}

unsafe fn to_path(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(Failure::null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::arg("path is not valid UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure::null(what))
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// Message for the last failed call on this thread, empty after a success.
/// The pointer stays valid until the next call into this library on the
/// same thread.
#[no_mangle]
pub extern "C" fn vg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Generates a synthetic bundle; `dgp` is a [`VgDgp`] value.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn vg_bundle_generate(
    dgp: i32,
    t: usize,
    ploss: f64,
    d_p: usize,
    d_z: usize,
    seed: u64,
    out: *mut *mut VgBundle,
) -> VgStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let cfg = DgpConfig {
            t,
            ploss,
            d_p,
            d_z,
            seed,
            ..DgpConfig::default()
        };
        let b = match VgDgp::from_raw(dgp)? {
            VgDgp::Null => gen_null(&cfg),
            VgDgp::Causal => gen_causal(&cfg),
            VgDgp::Standin => gen_standin(t, seed),
        }
        .map_err(|e| Failure::arg(e.to_string()))?;
        *out = boxed(VgBundle { inner: b });
        Ok(())
    })
}

/// Builds a bundle from caller arrays. `p` holds `d_p` columns and `z`
/// holds `d_z` columns (either may be null when its count is 0).
///
/// # Safety
/// Each non-null array must hold the stated number of doubles; `out` must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn vg_bundle_from_arrays(
    x: *const f64,
    y: *const f64,
    t: usize,
    p: *const f64,
    d_p: usize,
    z: *const f64,
    d_z: usize,
    out: *mut *mut VgBundle,
) -> VgStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        if t == 0 {
            return Err(Failure::arg("series length must be positive"));
        }
        let b = TimeSeriesBundle {
            x: slice(x, t, "x")?.to_vec(),
            y: slice(y, t, "y")?.to_vec(),
            p: columns(p, d_p, t, "p")?,
            z: (d_z > 0).then(|| columns(z, d_z, t, "z")).transpose()?,
            w: None,
            provenance: Provenance::Csv,
        };
        b.validate(true).map_err(Failure::data)?;
        *out = boxed(VgBundle { inner: b });
        Ok(())
    })
}

/// Reads a bundle CSV with columns `x, y[, p_*][, z_*][, w]`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vg_bundle_load(path: *const c_char, out: *mut *mut VgBundle) -> VgStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let p = to_path(path)?;
        let b = load_csv(&p, Schema::Plain).map_err(|e| Failure::io(format!("{}: {e}", p.display())))?;
        *out = boxed(VgBundle { inner: b });
        Ok(())
    })
}

/// # Safety
/// `bundle` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn vg_bundle_save(bundle: *const VgBundle, path: *const c_char) -> VgStatus {
    guard(|| {
        let b = bundle.as_ref().ok_or_else(|| Failure::null("bundle"))?;
        let p = to_path(path)?;
        save_csv(&b.inner, &p, None).map_err(Failure::io)
    })
}

/// Releases a bundle; null is ignored.
///
/// # Safety
/// `bundle` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vg_bundle_free(bundle: *mut VgBundle) {
    if !bundle.is_null() {
        drop(Box::from_raw(bundle));
    }
}

/// Series length, 0 for a null handle.
///
/// # Safety
/// `bundle` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vg_bundle_len(bundle: *const VgBundle) -> usize {
    bundle.as_ref().map_or(0, |b| b.inner.len())
}

/// Number of columns in a [`VgSeries`] family (1 for `x` and `y`), 0 for a
/// null handle or unknown family.
///
/// # Safety
/// `bundle` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vg_bundle_columns(bundle: *const VgBundle, which: i32) -> usize {
    match (bundle.as_ref(), VgSeries::from_raw(which)) {
        (Some(b), Ok(VgSeries::X | VgSeries::Y)) => usize::from(!b.inner.is_empty()),
        (Some(b), Ok(VgSeries::P)) => b.inner.d_p(),
        (Some(b), Ok(VgSeries::Z)) => b.inner.d_z(),
        _ => 0,
    }
}

/// Copies column `index` of a series family into `buf`, which must hold
/// exactly `len == vg_bundle_len(bundle)` doubles.
///
/// # Safety
/// `bundle` must be a live handle and `buf` writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn vg_bundle_copy(
    bundle: *const VgBundle,
    which: i32,
    index: usize,
    buf: *mut f64,
    len: usize,
) -> VgStatus {
    guard(|| {
        let b = &bundle.as_ref().ok_or_else(|| Failure::null("bundle"))?.inner;
        let which = VgSeries::from_raw(which)?;
        let col: &[f64] = match which {
            VgSeries::X if index == 0 => &b.x,
            VgSeries::Y if index == 0 => &b.y,
            VgSeries::P if index < b.d_p() => &b.p[index],
            VgSeries::Z if index < b.d_z() => &b.z.as_ref().expect("d_z > 0")[index],
            _ => return Err(Failure::arg(format!("no column {index} in {which:?}"))),
        };
        if len != col.len() {
            return Err(Failure::arg(format!("buffer holds {len} values, series has {}", col.len())));
        }
        if buf.is_null() {
            return Err(Failure::null("buf"));
        }
        std::slice::from_raw_parts_mut(buf, len).copy_from_slice(col);
        Ok(())
    })
}

unsafe fn run_test(
    x: *const f64,
    y: *const f64,
    t: usize,
    cond: *const f64,
    n_cond: usize,
    out: *mut VgGrangerResult,
    f: impl FnOnce(&[f64], &[f64], &[Series<'_>]) -> Result<GrangerResult, vgranger::granger::GrangerError>,
) -> VgStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let x = slice(x, t, "x")?;
        let y = slice(y, t, "y")?;
        let cols = columns(cond, n_cond, t, "cond")?;
        let ids: Vec<String> = (1..=n_cond).map(|j| format!("c_{j}")).collect();
        let series: Vec<Series<'_>> = ids.iter().zip(&cols).map(|(id, v)| Series::new(id, v)).collect();
        let r = f(x, y, &series).map_err(Failure::data)?;
        *out = VgGrangerResult::from(&r);
        Ok(())
    })
}

/// Linear Granger F-test of `x -> y` given the conditioning columns.
///
/// # Safety
/// `x`, `y` hold `t` doubles, `cond` holds `n_cond * t` doubles (or is
/// null when `n_cond == 0`), `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn vg_linear_granger(
    x: *const f64,
    y: *const f64,
    t: usize,
    cond: *const f64,
    n_cond: usize,
    lag: usize,
    alpha: f64,
    out: *mut VgGrangerResult,
) -> VgStatus {
    run_test(x, y, t, cond, n_cond, out, |x, y, c| linear_granger(x, y, c, lag, alpha))
}

/// Random-forest ΔR² Granger statistic; rejects when it is positive.
///
/// # Safety
/// As for [`vg_linear_granger`].
#[no_mangle]
pub unsafe extern "C" fn vg_gc_r2(
    x: *const f64,
    y: *const f64,
    t: usize,
    cond: *const f64,
    n_cond: usize,
    lag: usize,
    n_trees: usize,
    max_depth: usize,
    min_leaf: usize,
    seed: u64,
    out: *mut VgGrangerResult,
) -> VgStatus {
    let cfg = ForestConfig {
        n_trees,
        max_depth,
        min_leaf,
        ..ForestConfig::default()
    };
    run_test(x, y, t, cond, n_cond, out, |x, y, c| gc_r2(x, y, c, lag, &cfg, seed))
}

/// Neural-network F-test of `x -> y`.
///
/// # Safety
/// As for [`vg_linear_granger`].
#[no_mangle]
pub unsafe extern "C" fn vg_nn_granger(
    x: *const f64,
    y: *const f64,
    t: usize,
    cond: *const f64,
    n_cond: usize,
    lag: usize,
    hidden: usize,
    steps: usize,
    lr: f64,
    seed: u64,
    alpha: f64,
    out: *mut VgGrangerResult,
) -> VgStatus {
    let cfg = NnConfig { hidden, steps, lr, seed };
    run_test(x, y, t, cond, n_cond, out, |x, y, c| nn_granger_conditional(x, y, c, lag, &cfg, alpha))
}

/// CDF of the F distribution with `d1`, `d2` degrees of freedom.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vg_f_cdf(x: f64, d1: f64, d2: f64, out: *mut f64) -> VgStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = vgranger::stats::f_cdf(x, d1, d2).map_err(|e| Failure::arg(e.to_string()))?;
        Ok(())
    })
}

/// Trains a model on a bundle with proxies. `config_json` is a JSON object
/// of training settings (null for defaults). On [`VgStatus::Diverged`]
/// `*out` receives the last good model.
///
/// # Safety
/// `bundle` must be a live handle, `config_json` null or NUL-terminated,
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vg_model_train(
    bundle: *const VgBundle,
    config_json: *const c_char,
    out: *mut *mut VgModel,
) -> VgStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let b = &bundle.as_ref().ok_or_else(|| Failure::null("bundle"))?.inner;
        let cfg: TcvaeConfig = if config_json.is_null() {
            TcvaeConfig::default()
        } else {
            let text = CStr::from_ptr(config_json)
                .to_str()
                .map_err(|_| Failure::arg("config is not valid UTF-8"))?;
            serde_json::from_str(text).map_err(|e| Failure::arg(format!("config: {e}")))?
        };
        match train(b, &cfg) {
            Ok(o) => {
                *out = boxed(VgModel { inner: o.model });
                Ok(())
            }
            Err(TcvaeError::Diverged { last_good, epoch, window, reason }) => {
                *out = boxed(VgModel { inner: *last_good });
                Err(Failure(
                    VgStatus::Diverged,
                    format!("diverged at epoch {epoch}, window {window}: {reason}"),
                ))
            }
            Err(e @ TcvaeError::Config(_)) => Err(Failure::arg(e.to_string())),
            Err(e) => Err(Failure::data(e)),
        }
    })
}

/// Latent dimension, 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vg_model_dz(model: *const VgModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.d_z())
}

/// Writes the posterior-mean confounder path, column-major, into `buf`,
/// which must hold `vg_model_dz(model) * vg_bundle_len(bundle)` doubles.
///
/// # Safety
/// Handles must be live and `buf` writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn vg_model_estimate(
    model: *const VgModel,
    bundle: *const VgBundle,
    buf: *mut f64,
    len: usize,
) -> VgStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| Failure::null("model"))?.inner;
        let b = &bundle.as_ref().ok_or_else(|| Failure::null("bundle"))?.inner;
        let need = m.d_z() * b.len();
        if len != need {
            return Err(Failure::arg(format!("buffer holds {len} values, estimate needs {need}")));
        }
        if buf.is_null() {
            return Err(Failure::null("buf"));
        }
        let est = estimate_confounder(m, b, 0, 0).map_err(Failure::data)?;
        let dst = std::slice::from_raw_parts_mut(buf, len);
        for (chunk, col) in dst.chunks_exact_mut(b.len()).zip(&est.mean) {
            chunk.copy_from_slice(col);
        }
        Ok(())
    })
}

/// Saves a checkpoint; a `.json` extension selects the JSON layout.
///
/// # Safety
/// `model` must be a live handle and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn vg_model_save(model: *const VgModel, path: *const c_char) -> VgStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| Failure::null("model"))?.inner;
        let p = to_path(path)?;
        m.save(&p).map_err(Failure::io)
    })
}

/// # Safety
/// `path` must be NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vg_model_load(path: *const c_char, out: *mut *mut VgModel) -> VgStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let p = to_path(path)?;
        let m = TcvaeModel::load(&p).map_err(|e| Failure::io(format!("{}: {e}", p.display())))?;
        *out = boxed(VgModel { inner: m });
        Ok(())
    })
}

/// Releases a model; null is ignored.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vg_model_free(model: *mut VgModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
