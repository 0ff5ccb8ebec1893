//! C ABI for the clustering toolkit.
//!
//! Every fallible function returns a [`UdgcStatus`]; on failure the message
//! is available from [`udgc_last_error`] on the same thread. Objects are
//! opaque handles released with their matching `_free` function. Matrices
//! are row-major `double` arrays.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use udgc::acot::{acot_solve, AcotConfig};
use udgc::caot::{caot_pass, CaotConfig};
use udgc::cli::RunConfig;
use udgc::data::{gen_synthetic_er, load_tudataset, Dataset, SyntheticSpec};
use udgc::metrics::evaluate;
use udgc::ndmath::Mat;
use udgc::ot::{sinkhorn_uniform, OtConfig};
use udgc::trainer::fit;
use udgc::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UdgcStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    Shape = 2,
    Input = 3,
    Config = 4,
    Io = 5,
    /// Non-finite values or a degenerate row.
    Numeric = 6,
    /// An internal panic was caught at the boundary.
    Panic = 7,
}

/// Dense row-major matrix.
pub struct UdgcMatrix(Mat);

/// A loaded or generated graph dataset.
pub struct UdgcDataset(Dataset);

/// Clustering scores.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UdgcScores {
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
    pub n: usize,
    pub c_pred: usize,
    pub c_true: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

static VERSION: &CStr = {
    match CStr::from_bytes_with_nul(concat!("udgc ", env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(s) => s,
        Err(_) => panic!("version string has an interior nul"),
    }
};

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> UdgcStatus {
    match e {
        Error::Shape { .. } => UdgcStatus::Shape,
        Error::Input(_) | Error::Index(_) | Error::Contract(_) | Error::Format { .. } => UdgcStatus::Input,
        Error::Config(_) => UdgcStatus::Config,
        Error::Io { .. } => UdgcStatus::Io,
        Error::NonFinite(_) | Error::DegenerateRow { .. } => UdgcStatus::Numeric,
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> UdgcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => UdgcStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            UdgcStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            UdgcStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    // SAFETY: the caller guarantees `p` is null or valid for reads.
    unsafe { p.as_ref() }.ok_or(Failure::Null(what))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    // SAFETY: the caller guarantees `p` is null or valid for writes.
    unsafe { p.as_mut() }.ok_or(Failure::Null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    // SAFETY: non-null and, per the caller, valid for `len` reads.
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

unsafe fn string<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    // SAFETY: non-null and, per the caller, a nul-terminated string.
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| Failure::Lib(Error::Input(format!("{what} is not valid UTF-8"))))
}

fn boxed(m: Mat) -> *mut UdgcMatrix {
    Box::into_raw(Box::new(UdgcMatrix(m)))
}

/// Library name and version, as a static string.
#[no_mangle]
pub extern "C" fn udgc_version() -> *const c_char {
    VERSION.as_ptr()
}

/// Message of the most recent failure on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn udgc_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Copies `rows * cols` values from `data` into a new matrix.
///
/// # Safety
/// `data` must be valid for `rows * cols` reads; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn udgc_matrix_new(rows: usize, cols: usize, data: *const f64, out: *mut *mut UdgcMatrix) -> UdgcStatus {
    guard(|| {
        let out = unsafe { out_ptr(out, "out") }?;
        let len = rows.checked_mul(cols).ok_or_else(|| Error::Input("matrix size overflows".into()))?;
        let values = unsafe { slice(data, len, "data") }?;
        *out = boxed(Mat::new(rows, cols, values.to_vec())?);
        Ok(())
    })
}

/// # Safety
/// `m` must be null or a handle from this library that was not yet freed.
#[no_mangle]
pub unsafe extern "C" fn udgc_matrix_free(m: *mut UdgcMatrix) {
    if !m.is_null() {
        // SAFETY: per the contract, `m` came from `Box::into_raw`.
        drop(unsafe { Box::from_raw(m) });
    }
}

/// # Safety
/// `m` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn udgc_matrix_rows(m: *const UdgcMatrix) -> usize {
    unsafe { m.as_ref() }.map_or(0, |m| m.0.rows())
}

/// # Safety
/// `m` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn udgc_matrix_cols(m: *const UdgcMatrix) -> usize {
    unsafe { m.as_ref() }.map_or(0, |m| m.0.cols())
}

/// Row-major values, valid while the handle lives.
///
/// # Safety
/// `m` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn udgc_matrix_data(m: *const UdgcMatrix) -> *const f64 {
    unsafe { m.as_ref() }.map_or(ptr::null(), |m| m.0.data().as_ptr())
}

/// Entropic transport between uniform marginals.
///
/// # Safety
/// Pointers must be live handles or writable locations; `iterations` and
/// `residual` may be null.
#[no_mangle]
pub unsafe extern "C" fn udgc_sinkhorn(
    cost: *const UdgcMatrix,
    reg: f64,
    max_iters: usize,
    tol: f64,
    plan: *mut *mut UdgcMatrix,
    iterations: *mut usize,
    residual: *mut f64,
) -> UdgcStatus {
    guard(|| {
        let cost = unsafe { deref(cost, "cost") }?;
        let plan = unsafe { out_ptr(plan, "plan") }?;
        let solved = sinkhorn_uniform(&cost.0, &OtConfig { reg, max_iters, tol })?;
        if let Some(it) = unsafe { iterations.as_mut() } {
            *it = solved.iterations_used;
        }
        if let Some(r) = unsafe { residual.as_mut() } {
            *r = solved.max_marginal_residual;
        }
        *plan = boxed(solved.plan);
        Ok(())
    })
}

/// Coupled two-view transport with consensus weight `epsilon`.
///
/// # Safety
/// Pointers must be live handles or writable locations; `objective` may be null.
#[no_mangle]
pub unsafe extern "C" fn udgc_acot(
    cost: *const UdgcMatrix,
    cost_prime: *const UdgcMatrix,
    epsilon: f64,
    pi: *mut *mut UdgcMatrix,
    pi_prime: *mut *mut UdgcMatrix,
    objective: *mut f64,
) -> UdgcStatus {
    guard(|| {
        let m = unsafe { deref(cost, "cost") }?;
        let mp = unsafe { deref(cost_prime, "cost_prime") }?;
        let pi = unsafe { out_ptr(pi, "pi") }?;
        let pi_prime = unsafe { out_ptr(pi_prime, "pi_prime") }?;
        let state = acot_solve(&m.0, &mp.0, &AcotConfig::with_epsilon(epsilon))?;
        if let Some(o) = unsafe { objective.as_mut() } {
            *o = state.objective;
        }
        *pi = boxed(state.pi);
        *pi_prime = boxed(state.pi_prime);
        Ok(())
    })
}

/// Centers discovery on `points` followed by matching of unit-norm `agents`
/// to the normalized centers.
///
/// # Safety
/// Pointers must be live handles or writable locations; `center_loss` may be null.
#[no_mangle]
pub unsafe extern "C" fn udgc_caot(
    points: *const UdgcMatrix,
    agents: *const UdgcMatrix,
    eta: f64,
    eta1: f64,
    centers: *mut *mut UdgcMatrix,
    psi: *mut *mut UdgcMatrix,
    center_loss: *mut f64,
) -> UdgcStatus {
    guard(|| {
        let x = unsafe { deref(points, "points") }?;
        let w = unsafe { deref(agents, "agents") }?;
        let centers = unsafe { out_ptr(centers, "centers") }?;
        let psi = unsafe { out_ptr(psi, "psi") }?;
        let cfg = CaotConfig { eta, eta1, ..CaotConfig::default() };
        cfg.validate()?;
        let (found, _, align) = caot_pass(&x.0, &w.0, &cfg, 0)?;
        if let Some(l) = unsafe { center_loss.as_mut() } {
            *l = align.center_loss_value;
        }
        *centers = boxed(found.mu);
        *psi = boxed(align.psi);
        Ok(())
    })
}

/// Accuracy, NMI and ARI of `pred` against `truth`, both of length `n`.
///
/// # Safety
/// `pred` and `truth` must be valid for `n` reads; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn udgc_evaluate(pred: *const usize, truth: *const usize, n: usize, out: *mut UdgcScores) -> UdgcStatus {
    guard(|| {
        let pred = unsafe { slice(pred, n, "pred") }?;
        let truth = unsafe { slice(truth, n, "truth") }?;
        let out = unsafe { out_ptr(out, "out") }?;
        let s = evaluate(pred, truth)?;
        *out = UdgcScores { acc: s.acc, nmi: s.nmi, ari: s.ari, n: s.n, c_pred: s.c_pred, c_true: s.c_true };
        Ok(())
    })
}

/// Loads `<dir>/<name>_A.txt` and its companion files.
///
/// # Safety
/// `dir` and `name` must be nul-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn udgc_dataset_load(dir: *const c_char, name: *const c_char, out: *mut *mut UdgcDataset) -> UdgcStatus {
    guard(|| {
        let dir = unsafe { string(dir, "dir") }?;
        let name = unsafe { string(name, "name") }?;
        let out = unsafe { out_ptr(out, "out") }?;
        *out = Box::into_raw(Box::new(UdgcDataset(load_tudataset(Path::new(dir), name)?)));
        Ok(())
    })
}

/// Erdős–Rényi graphs, `per_class` per entry of `p`, with node counts drawn
/// from `min_nodes..=max_nodes`.
///
/// # Safety
/// `p` must be valid for `classes` reads; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn udgc_dataset_synthetic(
    per_class: usize,
    p: *const f64,
    classes: usize,
    min_nodes: usize,
    max_nodes: usize,
    seed: u64,
    out: *mut *mut UdgcDataset,
) -> UdgcStatus {
    guard(|| {
        let p = unsafe { slice(p, classes, "p") }?;
        let out = unsafe { out_ptr(out, "out") }?;
        let spec = SyntheticSpec { per_class, p: p.to_vec(), min_nodes, max_nodes, seed };
        *out = Box::into_raw(Box::new(UdgcDataset(gen_synthetic_er(&spec)?)));
        Ok(())
    })
}

/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn udgc_dataset_free(ds: *mut UdgcDataset) {
    if !ds.is_null() {
        // SAFETY: per the contract, `ds` came from `Box::into_raw`.
        drop(unsafe { Box::from_raw(ds) });
    }
}

/// Number of graphs.
///
/// # Safety
/// `ds` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn udgc_dataset_len(ds: *const UdgcDataset) -> usize {
    unsafe { ds.as_ref() }.map_or(0, |d| d.0.len())
}

/// Ground-truth labels into `labels` (length `len`, which must equal the
/// dataset size). Fails with `Input` when some graph is unlabeled.
///
/// # Safety
/// `ds` must be a live handle and `labels` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn udgc_dataset_labels(ds: *const UdgcDataset, labels: *mut usize, len: usize) -> UdgcStatus {
    guard(|| {
        let ds = unsafe { deref(ds, "dataset") }?;
        let truth = ds.0.labels().ok_or_else(|| Error::Input("dataset has unlabeled graphs".into()))?;
        write_labels(&truth, labels, len)
    })
}

fn write_labels(values: &[usize], dst: *mut usize, len: usize) -> Result<(), Failure> {
    if len != values.len() {
        return Err(Error::Shape { op: "labels", detail: format!("buffer holds {len}, need {}", values.len()) }.into());
    }
    if dst.is_null() {
        return Err(Failure::Null("labels"));
    }
    // SAFETY: non-null and, per the caller, valid for `len` writes.
    unsafe { std::slice::from_raw_parts_mut(dst, len) }.copy_from_slice(values);
    Ok(())
}

/// Trains on `ds` and writes the cluster of every graph to `labels`.
///
/// `config` is null or flat `key = value` text using the command-line keys;
/// only the training settings are used, with the first `lambda` value.
///
/// # Safety
/// `ds` must be a live handle, `config` null or nul-terminated, `labels`
/// valid for `len` writes and `final_loss` null or writable.
#[no_mangle]
pub unsafe extern "C" fn udgc_fit(
    ds: *const UdgcDataset,
    config: *const c_char,
    labels: *mut usize,
    len: usize,
    final_loss: *mut f64,
) -> UdgcStatus {
    guard(|| {
        let ds = unsafe { deref(ds, "dataset") }?;
        let run = if config.is_null() { RunConfig::default() } else { RunConfig::from_text(unsafe { string(config, "config") }?)? };
        if len != ds.0.len() {
            return Err(Error::Shape { op: "udgc_fit", detail: format!("buffer holds {len}, dataset has {}", ds.0.len()) }.into());
        }
        let fitted = fit(&ds.0, &run.train)?;
        write_labels(&fitted.assignment.labels, labels, len)?;
        if let Some(l) = unsafe { final_loss.as_mut() } {
            *l = fitted.final_loss;
        }
        Ok(())
    })
}
