//! C interface to the generalized Dantzig selector.
//!
//! Datasets and fitted models are opaque handles created and released by
//! this library. Every fallible call returns a [`GdsStatus`]; on failure a
//! message for the calling thread is available from [`gds_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use gds_core::bases::{basis_matrix, BasisMatrix, BasisSpec, GridSpec};
use gds_core::design::{build_design, quadrature_weights, ImageSample};
use gds_core::diffops::Variant;
use gds_core::gds::{evaluate_surface, fit, predict, refit, zero_set, GdsConfig, GdsFit};
use gds_core::GdsError;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GdsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    Numerical = 4,
    Io = 5,
    Panic = 6,
    BufferTooSmall = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GdsBasisKind {
    Piecewise = 0,
    Bspline = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GdsVariant {
    Joint = 0,
    Separable = 1,
}

/// Estimator settings. `order` and `knots` apply to B-splines only; a
/// nonpositive `refit_lambda` reuses `lambda`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct GdsFitOptions {
    pub basis: GdsBasisKind,
    pub p1: usize,
    pub p2: usize,
    pub order: usize,
    pub knots: usize,
    pub variant: GdsVariant,
    pub w: f64,
    pub lambda: f64,
    pub d1: usize,
    pub d2: usize,
    pub refit: bool,
    pub refit_lambda: f64,
}

/// Images on an evenly spaced midpoint grid with their responses.
pub struct GdsDataset {
    grid: GridSpec,
    weights: Vec<f64>,
    images: Vec<ImageSample>,
    y: Vec<f64>,
}

pub struct GdsModel {
    fit: GdsFit,
    bt: BasisMatrix,
    weights: Vec<f64>,
    surface: Vec<f64>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &GdsError) -> GdsStatus {
    match e {
        GdsError::Io { .. } => GdsStatus::Io,
        GdsError::Lp { .. } | GdsError::RankDeficient { .. } | GdsError::Degenerate(_) => {
            GdsStatus::Numerical
        }
        GdsError::Dimension(_) => GdsStatus::Dimension,
        GdsError::Candidate { source, .. } => status_of(source),
        _ => GdsStatus::InvalidArgument,
    }
}

enum Failure {
    Status(GdsStatus, String),
    Core(GdsError),
}

impl From<GdsError> for Failure {
    fn from(e: GdsError) -> Self {
        Failure::Core(e)
    }
}

fn null(what: &str) -> Failure {
    Failure::Status(GdsStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status plus message.
fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> GdsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            clear_error();
            GdsStatus::Ok
        }
        Ok(Err(Failure::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            GdsStatus::Panic
        }
    }
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn gds_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gds_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Options with a piecewise `m1 x m2` basis, joint variant, `w = 1`,
/// orders 0 and `lambda = 1`.
#[no_mangle]
pub extern "C" fn gds_fit_options_default(m1: usize, m2: usize) -> GdsFitOptions {
    GdsFitOptions {
        basis: GdsBasisKind::Piecewise,
        p1: m1,
        p2: m2,
        order: 3,
        knots: 7,
        variant: GdsVariant::Joint,
        w: 1.0,
        lambda: 1.0,
        d1: 0,
        d2: 0,
        refit: false,
        refit_lambda: 0.0,
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

/// Copies `n` images (row-major, `m1 * m2` values each, concatenated) and
/// `n` responses into a new dataset.
///
/// # Safety
/// `images` must point to `n * m1 * m2` doubles, `y` to `n` doubles and
/// `out` to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn gds_dataset_new(
    n: usize,
    m1: usize,
    m2: usize,
    images: *const f64,
    y: *const f64,
    out: *mut *mut GdsDataset,
) -> GdsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let g = m1
            .checked_mul(m2)
            .and_then(|g| g.checked_mul(n).map(|t| (g, t)));
        let Some((g, total)) = g else {
            return Err(Failure::Status(GdsStatus::Dimension, "size overflow".into()));
        };
        if n < 2 || g == 0 {
            return Err(Failure::Status(
                GdsStatus::InvalidArgument,
                "need at least two samples and a nonempty grid".into(),
            ));
        }
        let values = slice(images, total, "images")?;
        let y = slice(y, n, "y")?.to_vec();
        let grid = GridSpec::midpoints(m1, m2)?;
        let weights = quadrature_weights(&grid, None)?;
        let images = values
            .chunks(g)
            .enumerate()
            .map(|(i, v)| ImageSample::new(format!("s{i}"), m1, m2, v.to_vec()))
            .collect::<Result<Vec<_>, _>>()?;
        *out = Box::into_raw(Box::new(GdsDataset {
            grid,
            weights,
            images,
            y,
        }));
        Ok(())
    })
}

/// # Safety
/// `ds` must be null or a pointer from [`gds_dataset_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gds_dataset_free(ds: *mut GdsDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

fn config_from(opts: &GdsFitOptions, grid: &GridSpec) -> Result<GdsConfig, GdsError> {
    let basis = match opts.basis {
        GdsBasisKind::Piecewise => BasisSpec::piecewise(opts.p1, opts.p2),
        GdsBasisKind::Bspline => BasisSpec::Bspline {
            order1: opts.order,
            order2: opts.order,
            interior_knots1: opts.knots,
            interior_knots2: opts.knots,
        },
    };
    let mut cfg = GdsConfig::new(basis, grid.clone());
    cfg.variant = match opts.variant {
        GdsVariant::Joint => Variant::Joint,
        GdsVariant::Separable => Variant::Separable,
    };
    cfg.w = opts.w;
    cfg.lambda = opts.lambda;
    cfg.d1 = opts.d1;
    cfg.d2 = opts.d2;
    cfg.validate()?;
    Ok(cfg)
}

/// Fits the estimator (and the zero-set refit when requested).
///
/// # Safety
/// `ds` must be a live dataset, `opts` must point to valid options and
/// `out` to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn gds_fit(
    ds: *const GdsDataset,
    opts: *const GdsFitOptions,
    out: *mut *mut GdsModel,
) -> GdsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let ds = ds.as_ref().ok_or_else(|| null("dataset"))?;
        let opts = opts.as_ref().ok_or_else(|| null("options"))?;
        let cfg = config_from(opts, &ds.grid)?;
        let bt = basis_matrix(&cfg.basis, &cfg.grid)?;
        let design = build_design(&ds.images, &ds.y, &bt, &ds.weights)?;
        let mut f = fit(&design, &cfg)?;
        if opts.refit && !zero_set(&f, &bt).is_empty() {
            let l2 = if opts.refit_lambda > 0.0 {
                opts.refit_lambda
            } else {
                cfg.lambda
            };
            f = refit(&f, &design, l2)?;
        }
        let surface = evaluate_surface(&f, &ds.grid)?.truncated;
        *out = Box::into_raw(Box::new(GdsModel {
            fit: f,
            bt,
            weights: ds.weights.clone(),
            surface,
        }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a pointer from [`gds_fit`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gds_model_free(model: *mut GdsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be live and `alpha` writable.
#[no_mangle]
pub unsafe extern "C" fn gds_model_alpha(model: *const GdsModel, alpha: *mut f64) -> GdsStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let a = alpha.as_mut().ok_or_else(|| null("alpha"))?;
        *a = m.fit.alpha_hat;
        Ok(())
    })
}

/// Number of basis coefficients whose magnitude exceeds the zero threshold.
///
/// # Safety
/// `model` must be live and `count` writable.
#[no_mangle]
pub unsafe extern "C" fn gds_model_active_count(
    model: *const GdsModel,
    count: *mut usize,
) -> GdsStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let c = count.as_mut().ok_or_else(|| null("count"))?;
        *c = m.fit.active_count();
        Ok(())
    })
}

unsafe fn copy_out(src: &[f64], buf: *mut f64, len: usize, needed: *mut usize) -> Result<(), Failure> {
    if let Some(n) = needed.as_mut() {
        *n = src.len();
    }
    if len < src.len() {
        return Err(Failure::Status(
            GdsStatus::BufferTooSmall,
            format!("buffer holds {len} values, {} needed", src.len()),
        ));
    }
    slice_mut(buf, src.len(), "buffer")?.copy_from_slice(src);
    Ok(())
}

/// Copies the basis coefficients. `needed` (optional) receives the count;
/// a short buffer yields `BufferTooSmall` with `needed` still set.
///
/// # Safety
/// `buf` must have room for `len` doubles; `needed` may be null.
#[no_mangle]
pub unsafe extern "C" fn gds_model_eta(
    model: *const GdsModel,
    buf: *mut f64,
    len: usize,
    needed: *mut usize,
) -> GdsStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        copy_out(m.fit.eta_hat.as_slice(), buf, len, needed)
    })
}

/// Copies the truncated coefficient surface on the data grid, row-major.
///
/// # Safety
/// As for [`gds_model_eta`].
#[no_mangle]
pub unsafe extern "C" fn gds_model_surface(
    model: *const GdsModel,
    buf: *mut f64,
    len: usize,
    needed: *mut usize,
) -> GdsStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        copy_out(&m.surface, buf, len, needed)
    })
}

/// Predicts `n` new images laid out like [`gds_dataset_new`] input.
///
/// # Safety
/// `images` must hold `n * m1 * m2` doubles for the model grid and `out`
/// room for `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn gds_model_predict(
    model: *const GdsModel,
    n: usize,
    images: *const f64,
    out: *mut f64,
) -> GdsStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let grid = &m.fit.config.grid;
        let g = grid.len();
        let values = slice(images, n * g, "images")?;
        let imgs = values
            .chunks(g)
            .enumerate()
            .map(|(i, v)| ImageSample::new(format!("p{i}"), grid.m1, grid.m2, v.to_vec()))
            .collect::<Result<Vec<_>, _>>()?;
        let pred = predict(&m.fit, &imgs, &m.bt, &m.weights)?;
        slice_mut(out, n, "out")?.copy_from_slice(&pred);
        Ok(())
    })
}
