//! C ABI over `spdc-core`.
//!
//! Handles are opaque and owned by the caller, who releases them with the
//! matching `*_free`. Every fallible call returns an [`SpdcStatus`] and writes
//! its result through an out-pointer only on success. The message for the most
//! recent failure on the calling thread is available from
//! [`spdc_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use spdc_core::dispersion::{find_gvm_center, Catalog};
use spdc_core::jsa::{make_grid, FilterShape, FilterSpec, PmShape};
use spdc_core::metrics::{alpha_required, k_star, transmission_budget};
use spdc_core::optimizer::{
    box_midpoint, check_memory, maximize_prepared, MaximizeOptions, PreparedSource, Scoring,
    DEFAULT_MEMORY_CAP_BYTES,
};
use spdc_core::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpdcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    UnknownCrystal = 3,
    OutOfRange = 4,
    NoRoot = 5,
    Infeasible = 6,
    NonFinite = 7,
    Resource = 8,
    Unsupported = 9,
    Io = 10,
    Panic = 11,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpdcPmShape {
    Sinc = 0,
    Apodized = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpdcFilterShape {
    None = 0,
    Gaussian = 1,
    Rect = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SpdcMetrics {
    pub purity: f64,
    pub transmission: f64,
    pub alpha: f64,
    pub k_max: u32,
    pub purity_unfiltered: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SpdcOptimum {
    pub length_mm: f64,
    pub pump_fwhm_nm: f64,
    pub metrics: SpdcMetrics,
    pub evaluations: u32,
    pub converged: bool,
}

/// Crystal catalog handle.
pub struct SpdcCatalog(Catalog);

/// A crystal at its operating point on a fixed grid, ready for evaluation.
pub struct SpdcSource(PreparedSource);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SpdcStatus {
    match e {
        Error::OutOfRange { .. } => SpdcStatus::OutOfRange,
        Error::NoRoot(_) => SpdcStatus::NoRoot,
        Error::Precondition(_) | Error::Validation(_) | Error::Degenerate(_) => {
            SpdcStatus::InvalidArgument
        }
        Error::Unsupported(_) => SpdcStatus::Unsupported,
        Error::Infeasible { .. } => SpdcStatus::Infeasible,
        Error::NonFinite { .. } => SpdcStatus::NonFinite,
        Error::Resource(_) => SpdcStatus::Resource,
        Error::UnknownCrystal(_) => SpdcStatus::UnknownCrystal,
        Error::Catalog(_) | Error::Json(_) => SpdcStatus::InvalidArgument,
        Error::Io(_) | Error::Csv(_) => SpdcStatus::Io,
    }
}

struct Fail(SpdcStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SpdcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SpdcStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            SpdcStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(SpdcStatus::NullPointer, format!("null pointer: {what}"))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(SpdcStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

fn filter_spec(shape: SpdcFilterShape, fwhm_nm: f64, center_nm: f64) -> Result<FilterSpec, Fail> {
    let shape = match shape {
        SpdcFilterShape::None => return Ok(FilterSpec::none()),
        SpdcFilterShape::Gaussian => FilterShape::Gaussian,
        SpdcFilterShape::Rect => FilterShape::Rectangular,
    };
    Ok(FilterSpec::new(shape, fwhm_nm, center_nm)?)
}

/// Message for the last failed call on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn spdc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static name of a status code.
#[no_mangle]
pub extern "C" fn spdc_status_name(status: SpdcStatus) -> *const c_char {
    let s: &'static CStr = match status {
        SpdcStatus::Ok => c"ok",
        SpdcStatus::NullPointer => c"null pointer",
        SpdcStatus::InvalidArgument => c"invalid argument",
        SpdcStatus::UnknownCrystal => c"unknown crystal",
        SpdcStatus::OutOfRange => c"wavelength out of range",
        SpdcStatus::NoRoot => c"no root",
        SpdcStatus::Infeasible => c"infeasible",
        SpdcStatus::NonFinite => c"non-finite objective",
        SpdcStatus::Resource => c"resource limit",
        SpdcStatus::Unsupported => c"unsupported",
        SpdcStatus::Io => c"i/o error",
        SpdcStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}

/// Loads the built-in catalog (or `SPDC_CATALOG_DIR` when set).
///
/// # Safety
/// `out` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn spdc_catalog_load(out: *mut *mut SpdcCatalog) -> SpdcStatus {
    guard(|| {
        let slot = out_ptr(out)?;
        *slot = Box::into_raw(Box::new(SpdcCatalog(Catalog::load()?)));
        Ok(())
    })
}

/// Loads every `*.json` crystal in `dir`.
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` valid writable storage.
#[no_mangle]
pub unsafe extern "C" fn spdc_catalog_from_dir(
    dir: *const c_char,
    out: *mut *mut SpdcCatalog,
) -> SpdcStatus {
    guard(|| {
        let dir = str_arg(dir, "dir")?;
        let slot = out_ptr(out)?;
        *slot = Box::into_raw(Box::new(SpdcCatalog(Catalog::from_dir(dir)?)));
        Ok(())
    })
}

unsafe fn out_ptr<'a, T>(p: *mut *mut T) -> Result<&'a mut *mut T, Fail> {
    out(p, "out")
}

/// # Safety
/// `catalog` must be NULL or a handle from `spdc_catalog_*` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn spdc_catalog_free(catalog: *mut SpdcCatalog) {
    if !catalog.is_null() {
        drop(Box::from_raw(catalog));
    }
}

/// Number of crystals in the catalog, 0 for NULL.
///
/// # Safety
/// `catalog` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn spdc_catalog_len(catalog: *const SpdcCatalog) -> usize {
    catalog.as_ref().map_or(0, |c| c.0.len())
}

/// Degenerate centre wavelength (nm) satisfying the crystal's GVM condition.
///
/// # Safety
/// `catalog` must be a live handle, `name` NUL-terminated, `out_nm` writable.
#[no_mangle]
pub unsafe extern "C" fn spdc_gvm_center(
    catalog: *const SpdcCatalog,
    name: *const c_char,
    out_nm: *mut f64,
) -> SpdcStatus {
    guard(|| {
        let cat = catalog.as_ref().ok_or_else(|| null("catalog"))?;
        let name = str_arg(name, "name")?;
        let slot = out(out_nm, "out_nm")?;
        *slot = find_gvm_center(cat.0.get(name)?)?;
        Ok(())
    })
}

/// Prepares `name` on its default wavelength window with `grid_points` per
/// axis (0 picks the crystal's production size). Fails with
/// `SPDC_STATUS_RESOURCE` when the grid would exceed the default memory cap.
///
/// # Safety
/// `catalog` must be a live handle, `name` NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn spdc_source_new(
    catalog: *const SpdcCatalog,
    name: *const c_char,
    pm_shape: SpdcPmShape,
    grid_points: usize,
    out: *mut *mut SpdcSource,
) -> SpdcStatus {
    guard(|| {
        let cat = catalog.as_ref().ok_or_else(|| null("catalog"))?;
        let name = str_arg(name, "name")?;
        let slot = out_ptr(out)?;
        let crystal = cat.0.get(name)?;
        let n = if grid_points == 0 {
            crystal.grid.points
        } else {
            grid_points
        };
        check_memory(n, DEFAULT_MEMORY_CAP_BYTES)?;
        let [lo, hi] = crystal.grid.lambda_nm;
        let pm = match pm_shape {
            SpdcPmShape::Sinc => PmShape::Sinc,
            SpdcPmShape::Apodized => PmShape::GaussianApodized,
        };
        let source = PreparedSource::new(crystal, pm, &make_grid(lo, hi, n)?)?;
        *slot = Box::into_raw(Box::new(SpdcSource(source)));
        Ok(())
    })
}

/// # Safety
/// `source` must be NULL or a handle from `spdc_source_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn spdc_source_free(source: *mut SpdcSource) {
    if !source.is_null() {
        drop(Box::from_raw(source));
    }
}

/// Degenerate centre wavelength (nm) of the prepared source.
///
/// # Safety
/// `source` must be a live handle and `out_nm` writable.
#[no_mangle]
pub unsafe extern "C" fn spdc_source_center_nm(
    source: *const SpdcSource,
    out_nm: *mut f64,
) -> SpdcStatus {
    guard(|| {
        let src = source.as_ref().ok_or_else(|| null("source"))?;
        *out(out_nm, "out_nm")? = src.0.center_nm();
        Ok(())
    })
}

/// Scores one (length, pump bandwidth) point with a herald filter centred on
/// the degenerate wavelength. `error_bound` is the per-stage error budget.
///
/// # Safety
/// `source` must be a live handle and `out_metrics` writable.
#[no_mangle]
pub unsafe extern "C" fn spdc_source_evaluate(
    source: *const SpdcSource,
    length_mm: f64,
    pump_fwhm_nm: f64,
    filter: SpdcFilterShape,
    filter_fwhm_nm: f64,
    error_bound: f64,
    out_metrics: *mut SpdcMetrics,
) -> SpdcStatus {
    guard(|| {
        let src = source.as_ref().ok_or_else(|| null("source"))?;
        let slot = out(out_metrics, "out_metrics")?;
        let f = filter_spec(filter, filter_fwhm_nm, src.0.center_nm())?;
        let scoring = Scoring {
            error_bound,
            ..Scoring::default()
        };
        // Bounds check only; the prepared table does the work.
        src.0.config(length_mm, pump_fwhm_nm)?;
        let e = src.0.evaluate(length_mm, pump_fwhm_nm, &f, &scoring)?;
        *slot = SpdcMetrics {
            purity: e.metrics.purity,
            transmission: e.metrics.transmission,
            alpha: e.metrics.alpha,
            k_max: e.metrics.k_max,
            purity_unfiltered: e.purity_unfiltered,
        };
        Ok(())
    })
}

/// Maximises the source quality over the crystal's (length, pump bandwidth)
/// box, starting from its midpoint.
///
/// # Safety
/// `source` must be a live handle and `out_optimum` writable.
#[no_mangle]
pub unsafe extern "C" fn spdc_source_maximize(
    source: *const SpdcSource,
    filter: SpdcFilterShape,
    filter_fwhm_nm: f64,
    error_bound: f64,
    out_optimum: *mut SpdcOptimum,
) -> SpdcStatus {
    guard(|| {
        let src = source.as_ref().ok_or_else(|| null("source"))?;
        let slot = out(out_optimum, "out_optimum")?;
        let f = filter_spec(filter, filter_fwhm_nm, src.0.center_nm())?;
        let scoring = Scoring {
            error_bound,
            ..Scoring::default()
        };
        let p = maximize_prepared(
            &src.0,
            &f,
            box_midpoint(src.0.crystal()),
            &scoring,
            &MaximizeOptions::default(),
        )?;
        *slot = SpdcOptimum {
            length_mm: p.length_mm,
            pump_fwhm_nm: p.pump_fwhm_nm,
            metrics: SpdcMetrics {
                purity: p.metrics.purity,
                transmission: p.metrics.transmission,
                alpha: p.metrics.alpha,
                k_max: p.metrics.k_max,
                purity_unfiltered: p.purity_unfiltered,
            },
            evaluations: p.evaluations as u32,
            converged: p.converged,
        };
        Ok(())
    })
}

/// Largest network depth `k` a source of quality `alpha` supports at `error_bound`.
///
/// # Safety
/// `out_k` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spdc_k_star(alpha: f64, error_bound: f64, out_k: *mut u32) -> SpdcStatus {
    guard(|| {
        let slot = out(out_k, "out_k")?;
        *slot = k_star(alpha, error_bound)?;
        Ok(())
    })
}

/// Smallest quality supporting depth `k` at `error_bound`.
///
/// # Safety
/// `out_alpha` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spdc_alpha_required(
    k: u32,
    error_bound: f64,
    out_alpha: *mut f64,
) -> SpdcStatus {
    guard(|| {
        let slot = out(out_alpha, "out_alpha")?;
        *slot = alpha_required(k, error_bound)?;
        Ok(())
    })
}

/// Transmission budget left for the rest of the network. Returns
/// `SPDC_STATUS_INFEASIBLE` when `alpha_opt < alpha_req`.
///
/// # Safety
/// `out_eta` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spdc_transmission_budget(
    alpha_opt: f64,
    alpha_req: f64,
    out_eta: *mut f64,
) -> SpdcStatus {
    guard(|| {
        let slot = out(out_eta, "out_eta")?;
        *slot = transmission_budget(alpha_opt, alpha_req)?;
        Ok(())
    })
}
