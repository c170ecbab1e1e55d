//! C ABI over `connectome_gat`.
//!
//! Every fallible function returns a [`CgatStatus`]; on failure a message is
//! stored per thread and can be read with [`cgat_last_error_message`].
//! Matrices are passed as row-major `double` buffers. Models are opaque
//! handles created by [`cgat_model_load`] and released with
//! [`cgat_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use connectome_gat::explain::{soft_threshold, ExplanationMask, MaskScope};
use connectome_gat::gnn::{GatModel, GnnError};
use connectome_gat::graph::Connectome;
use connectome_gat::nalgebra::DMatrix;
use connectome_gat::spd::{self, Metric, SpdError, SpdMatrix, SymMatrix};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CgatStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NotPositiveDefinite = 3,
    DimensionMismatch = 4,
    Io = 5,
    Checkpoint = 6,
    BufferTooSmall = 7,
    Internal = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CgatMetric {
    Lerm = 0,
    Airm = 1,
    Skldm = 2,
}

impl From<CgatMetric> for Metric {
    fn from(m: CgatMetric) -> Self {
        match m {
            CgatMetric::Lerm => Metric::Lerm,
            CgatMetric::Airm => Metric::Airm,
            CgatMetric::Skldm => Metric::Skldm,
        }
    }
}

/// Opaque trained model.
pub struct CgatModel {
    inner: GatModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(CgatStatus, String);

type FfiResult<T> = Result<T, Failure>;

fn fail<T>(status: CgatStatus, msg: impl Into<String>) -> FfiResult<T> {
    Err(Failure(status, msg.into()))
}

impl From<SpdError> for Failure {
    fn from(e: SpdError) -> Self {
        let status = match e {
            SpdError::NotPositiveDefinite { .. } => CgatStatus::NotPositiveDefinite,
            SpdError::DimensionMismatch { .. } | SpdError::NonSquare { .. } => CgatStatus::DimensionMismatch,
            _ => CgatStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<GnnError> for Failure {
    fn from(e: GnnError) -> Self {
        let status = match e {
            GnnError::Checkpoint(_) | GnnError::Ad(_) => CgatStatus::Checkpoint,
            GnnError::DimensionMismatch { .. } => CgatStatus::DimensionMismatch,
            _ => CgatStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> FfiResult<()>) -> CgatStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            CgatStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            CgatStatus::Internal
        }
    }
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> FfiResult<&'a [f64]> {
    if p.is_null() {
        return fail(CgatStatus::NullPointer, format!("{what} is null"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> FfiResult<&'a mut [f64]> {
    if p.is_null() {
        return fail(CgatStatus::NullPointer, format!("{what} is null"));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn square_len(dim: usize) -> FfiResult<usize> {
    if dim == 0 {
        return fail(CgatStatus::InvalidArgument, "dimension must be positive");
    }
    dim.checked_mul(dim).map_or_else(|| fail(CgatStatus::InvalidArgument, "dimension overflows"), Ok)
}

unsafe fn spd_from(p: *const f64, dim: usize, what: &str) -> FfiResult<SpdMatrix> {
    let vals = slice(p, square_len(dim)?, what)?;
    let sym = SymMatrix::from_row_slice(dim, vals)?;
    Ok(spd::validate_spd(sym, spd::DEFAULT_VALIDATE_EPS)?)
}

/// Message for the most recent failure on this thread, or null. The pointer
/// stays valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn cgat_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cgat_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Distance between two SPD matrices of size `dim × dim`.
///
/// # Safety
/// `a` and `b` must point to `dim * dim` readable doubles, `out` to one
/// writable double.
#[no_mangle]
pub unsafe extern "C" fn cgat_spd_distance(
    a: *const f64,
    b: *const f64,
    dim: usize,
    metric: CgatMetric,
    out: *mut f64,
) -> CgatStatus {
    guard(|| {
        let out = slice_mut(out, 1, "out")?;
        let (a, b) = (spd_from(a, dim, "a")?, spd_from(b, dim, "b")?);
        out[0] = Metric::from(metric).distance(&a, &b)?;
        Ok(())
    })
}

/// Length of the tangent vector for a `dim × dim` matrix: `dim (dim + 1) / 2`.
#[no_mangle]
pub extern "C" fn cgat_tangent_len(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

/// Log-Euclidean tangent vector (upper triangle, off-diagonals scaled by √2).
///
/// # Safety
/// `a` must point to `dim * dim` doubles and `out` to `out_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn cgat_log_map(a: *const f64, dim: usize, out: *mut f64, out_len: usize) -> CgatStatus {
    guard(|| {
        let need = cgat_tangent_len(dim);
        if out_len < need {
            return fail(CgatStatus::BufferTooSmall, format!("need {need} doubles, got {out_len}"));
        }
        let out = slice_mut(out, need, "out")?;
        let t = spd::log_map(&spd_from(a, dim, "a")?)?;
        out.copy_from_slice(t.vectorized());
        Ok(())
    })
}

/// Projects a symmetric matrix onto the SPD cone with eigenvalues at least
/// `floor`.
///
/// # Safety
/// `a` and `out` must each point to `dim * dim` doubles; they may alias.
#[no_mangle]
pub unsafe extern "C" fn cgat_nearest_spd(a: *const f64, dim: usize, floor: f64, out: *mut f64) -> CgatStatus {
    guard(|| {
        let n = square_len(dim)?;
        let vals = slice(a, n, "a")?.to_vec();
        let out = slice_mut(out, n, "out")?;
        let s = spd::nearest_spd(&SymMatrix::symmetrize(&DMatrix::from_row_slice(dim, dim, &vals))?, floor)?;
        let m = s.as_matrix();
        for i in 0..dim {
            for j in 0..dim {
                out[i * dim + j] = m[(i, j)];
            }
        }
        Ok(())
    })
}

/// Keeps the `l` largest entries of a `rows × cols` mask and zeroes the rest.
///
/// # Safety
/// `mask` and `out` must each point to `rows * cols` doubles.
#[no_mangle]
pub unsafe extern "C" fn cgat_soft_threshold(
    mask: *const f64,
    rows: usize,
    cols: usize,
    l: usize,
    out: *mut f64,
) -> CgatStatus {
    guard(|| {
        let n = rows.checked_mul(cols).filter(|&n| n > 0);
        let Some(n) = n else { return fail(CgatStatus::InvalidArgument, "empty mask") };
        let m = ExplanationMask {
            values: DMatrix::from_row_slice(rows, cols, slice(mask, n, "mask")?),
            scope: MaskScope::Class(0),
            top_l: None,
        };
        let t = soft_threshold(&m, l);
        let out = slice_mut(out, n, "out")?;
        for i in 0..rows {
            for j in 0..cols {
                out[i * cols + j] = t.values[(i, j)];
            }
        }
        Ok(())
    })
}

/// Loads a checkpoint written by the `cgat train` command.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cgat_model_load(path: *const c_char, out: *mut *mut CgatModel) -> CgatStatus {
    guard(|| {
        if path.is_null() || out.is_null() {
            return fail(CgatStatus::NullPointer, "path or out is null");
        }
        let p = CStr::from_ptr(path).to_str().map_err(|e| Failure(CgatStatus::InvalidArgument, e.to_string()))?;
        if !Path::new(p).exists() {
            return fail(CgatStatus::Io, format!("no such file: {p}"));
        }
        let model = GatModel::load(Path::new(p))?;
        *out = Box::into_raw(Box::new(CgatModel { inner: model }));
        Ok(())
    })
}

/// Releases a model handle. Null is ignored.
///
/// # Safety
/// `model` must come from [`cgat_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cgat_model_free(model: *mut CgatModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of output classes, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cgat_model_num_classes(model: *const CgatModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.config.classes)
}

/// Expected node feature width, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cgat_model_input_dim(model: *const CgatModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.config.in_dim)
}

/// Classifies one connectome.
///
/// `weights` is the `dim × dim` connectivity matrix. `features` holds
/// `dim × input_dim` node features, or is null to use the rows of `weights`.
/// Class probabilities go to `probs` (length at least the class count) and
/// the predicted class to `class_out`.
///
/// # Safety
/// All non-null pointers must reference buffers of the stated sizes.
#[no_mangle]
pub unsafe extern "C" fn cgat_model_predict(
    model: *const CgatModel,
    weights: *const f64,
    features: *const f64,
    dim: usize,
    probs: *mut f64,
    probs_len: usize,
    class_out: *mut usize,
) -> CgatStatus {
    guard(|| {
        let Some(model) = model.as_ref() else { return fail(CgatStatus::NullPointer, "model is null") };
        if class_out.is_null() {
            return fail(CgatStatus::NullPointer, "class_out is null");
        }
        let classes = model.inner.config.classes;
        if probs_len < classes {
            return fail(CgatStatus::BufferTooSmall, format!("need {classes} doubles, got {probs_len}"));
        }
        let w = DMatrix::from_row_slice(dim, dim, slice(weights, square_len(dim)?, "weights")?);
        let mut c = Connectome::from_matrix(&w, "ffi", 0).map_err(|e| Failure(CgatStatus::InvalidArgument, e.to_string()))?;
        if !features.is_null() {
            let f = model.inner.config.in_dim;
            let x = DMatrix::from_row_slice(dim, f, slice(features, dim * f, "features")?);
            c = c.with_node_features(x).map_err(|e| Failure(CgatStatus::DimensionMismatch, e.to_string()))?;
        }
        let p = model.inner.predict(&c)?;
        slice_mut(probs, classes, "probs")?.copy_from_slice(&p.probabilities);
        *class_out = p.class;
        Ok(())
    })
}
