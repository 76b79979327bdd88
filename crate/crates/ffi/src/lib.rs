//! C ABI for the dead-time library.
//!
//! Objects are exposed as opaque handles created by `*_new` functions and
//! released with the matching `*_free`. Every fallible function returns a
//! [`DtStatus`]; on failure a description is available from
//! [`dt_last_error`] until the next failing call on the same thread.
//! Output arrays are caller-allocated and sized with the `*_len` queries.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use deadtime::correction::{
    solve_mchc, CorrectionResult, InverseProblem, SolverOptions, Termination,
};
use deadtime::estimate::{estimate_depth, DepthReferences, Method};
use deadtime::markov::{detection_pdf, fisher_information, Distribution};
use deadtime::{
    apply_dead_time, arrival_pdf, bin_detections, sample_arrivals, BinGrid, BinnedHistogram, Error,
    SceneModel,
};

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidModel = 3,
    DegenerateModel = 4,
    InsufficientData = 5,
    Capacity = 6,
    Unsupported = 7,
    NotConverged = 8,
    DegenerateResult = 9,
    BufferTooSmall = 10,
    Io = 11,
    Panic = 12,
}

/// Ranging methods.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DtMethod {
    Lf = 0,
    Hf = 1,
    Sc = 2,
    Mcpdf = 3,
    Mchc = 4,
}

/// Which distribution a Fisher information refers to.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DtDistribution {
    Arrival = 0,
    Detection = 1,
}

/// Scene parameters together with a bin grid.
pub struct DtScene {
    model: SceneModel,
    grid: BinGrid,
}

/// Precomputed references for delay estimation on one scene.
pub struct DtEstimator {
    refs: DepthReferences,
}

/// Output of one histogram correction.
pub struct DtCorrection {
    result: CorrectionResult,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).unwrap_or_default());
}

fn status_of(e: &Error) -> DtStatus {
    match e {
        Error::InvalidModel(_) => DtStatus::InvalidModel,
        Error::InvalidArgument(_) | Error::InvalidInterval { .. } | Error::Config(_) => {
            DtStatus::InvalidArgument
        }
        Error::DegenerateModel(_) => DtStatus::DegenerateModel,
        Error::InsufficientData(_) => DtStatus::InsufficientData,
        Error::Capacity { .. } => DtStatus::Capacity,
        Error::UnsupportedMode => DtStatus::Unsupported,
        Error::NotConverged { .. } => DtStatus::NotConverged,
        Error::DegenerateResult(_) => DtStatus::DegenerateResult,
        Error::Io { .. } | Error::Parse { .. } => DtStatus::Io,
    }
}

struct Fail(DtStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DtStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            DtStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(DtStatus::NullPointer, format!("{what} is null"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_slice<'a, T>(
    p: *mut T,
    len: usize,
    need: usize,
    what: &str,
) -> Result<&'a mut [T], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    if len < need {
        return Err(Fail(
            DtStatus::BufferTooSmall,
            format!("{what} holds {len} values, {need} needed"),
        ));
    }
    Ok(std::slice::from_raw_parts_mut(p, need))
}

unsafe fn in_slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the last failed call on this thread; empty if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Creates a scene with bins of width `t_bin` ns.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn dt_scene_new(
    t_r: f64,
    t_d: f64,
    sigma: f64,
    signal: f64,
    background: f64,
    tau: f64,
    t_bin: f64,
    out: *mut *mut DtScene,
) -> DtStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let model = SceneModel::new(t_r, t_d, sigma, signal, background, tau)?;
        let grid = BinGrid::with_bin_width(&model, t_bin)?;
        out.write(Box::into_raw(Box::new(DtScene { model, grid })));
        Ok(())
    })
}

/// Releases a scene. Null is ignored.
///
/// # Safety
/// `scene` must come from [`dt_scene_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dt_scene_free(scene: *mut DtScene) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}

/// Number of bins of the scene grid.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn dt_scene_n_bins(scene: *const DtScene, out: *mut usize) -> DtStatus {
    guard(|| {
        let s = deref(scene, "scene")?;
        put(out, s.grid.n_bins(), "out")
    })
}

/// Arrival pdf (1/ns) at the bin centers.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn dt_arrival_pdf(
    scene: *const DtScene,
    out: *mut f64,
    len: usize,
) -> DtStatus {
    guard(|| {
        let s = deref(scene, "scene")?;
        let buf = out_slice(out, len, s.grid.n_bins(), "out")?;
        buf.copy_from_slice(&arrival_pdf(&s.model, &s.grid)?);
        Ok(())
    })
}

/// Stationary detection-time pdf (1/ns) at the bin centers.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn dt_detection_pdf(
    scene: *const DtScene,
    out: *mut f64,
    len: usize,
) -> DtStatus {
    guard(|| {
        let s = deref(scene, "scene")?;
        let buf = out_slice(out, len, s.grid.n_bins(), "out")?;
        buf.copy_from_slice(&detection_pdf(&s.model, &s.grid)?);
        Ok(())
    })
}

/// Fisher information about the delay per detection (1/ns²).
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn dt_fisher_information(
    scene: *const DtScene,
    which: DtDistribution,
    delta_tau: f64,
    out: *mut f64,
) -> DtStatus {
    guard(|| {
        let s = deref(scene, "scene")?;
        let d = match which {
            DtDistribution::Arrival => Distribution::Arrival,
            DtDistribution::Detection => Distribution::Detection,
        };
        put(
            out,
            fisher_information(&s.model, &s.grid, d, delta_tau)?,
            "out",
        )
    })
}

/// Simulates `n_r` periods with dead time and bins the detections.
///
/// # Safety
/// `counts` must point to `len` writable values; `detections` may be null.
#[no_mangle]
pub unsafe extern "C" fn dt_simulate_histogram(
    scene: *const DtScene,
    n_r: u64,
    seed: u64,
    counts: *mut u64,
    len: usize,
    detections: *mut u64,
) -> DtStatus {
    guard(|| {
        let s = deref(scene, "scene")?;
        let buf = out_slice(counts, len, s.grid.n_bins(), "counts")?;
        let det = apply_dead_time(&sample_arrivals(&s.model, n_r, seed)?, s.model.t_d);
        let h = bin_detections(&det, &s.grid);
        buf.copy_from_slice(h.counts());
        if !detections.is_null() {
            detections.write(h.total());
        }
        Ok(())
    })
}

/// Precomputes arrival and detection references for a scene.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn dt_estimator_new(
    scene: *const DtScene,
    out: *mut *mut DtEstimator,
) -> DtStatus {
    guard(|| {
        let s = deref(scene, "scene")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let refs = DepthReferences::new(&s.model, &s.grid)?;
        out.write(Box::into_raw(Box::new(DtEstimator { refs })));
        Ok(())
    })
}

/// Releases an estimator. Null is ignored.
///
/// # Safety
/// `est` must come from [`dt_estimator_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dt_estimator_free(est: *mut DtEstimator) {
    if !est.is_null() {
        drop(Box::from_raw(est));
    }
}

/// Delay estimate in `[0, t_r)` from a histogram on the scene grid.
///
/// # Safety
/// `counts` must point to `len` readable values and `tau_hat` to one double.
#[no_mangle]
pub unsafe extern "C" fn dt_estimate_delay(
    est: *const DtEstimator,
    method: DtMethod,
    counts: *const u64,
    len: usize,
    tau_hat: *mut f64,
) -> DtStatus {
    guard(|| {
        let e = deref(est, "estimator")?;
        let c = in_slice(counts, len, "counts")?;
        let hist = BinnedHistogram::from_counts(c.to_vec(), *e.refs.grid())?;
        let m = match method {
            DtMethod::Lf => Method::LF,
            DtMethod::Hf => Method::HF,
            DtMethod::Sc => Method::SC,
            DtMethod::Mcpdf => Method::MCPDF,
            DtMethod::Mchc => Method::MCHC,
        };
        put(
            tau_hat,
            estimate_depth(m, &hist, &e.refs)?.tau_hat,
            "tau_hat",
        )
    })
}

/// Recovers per-bin arrival intensities from a detection histogram.
/// `max_iter = 0` and `tol <= 0` select the defaults.
///
/// # Safety
/// `hist` must point to `len` readable doubles; `out` to one handle slot.
#[no_mangle]
pub unsafe extern "C" fn dt_correction_solve(
    hist: *const f64,
    len: usize,
    n_d: usize,
    flux: f64,
    max_iter: usize,
    tol: f64,
    out: *mut *mut DtCorrection,
) -> DtStatus {
    guard(|| {
        let h = in_slice(hist, len, "hist")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let problem = InverseProblem::new(h, n_d, flux)?;
        let mut opts = SolverOptions::default();
        if max_iter > 0 {
            opts.max_iter = max_iter;
        }
        if tol > 0.0 {
            opts.tol = tol;
        }
        let result = solve_mchc(&problem, &opts)?;
        out.write(Box::into_raw(Box::new(DtCorrection { result })));
        Ok(())
    })
}

/// Releases a correction result. Null is ignored.
///
/// # Safety
/// `c` must come from [`dt_correction_solve`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dt_correction_free(c: *mut DtCorrection) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Number of bins in a correction result.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn dt_correction_len(c: *const DtCorrection, out: *mut usize) -> DtStatus {
    guard(|| put(out, deref(c, "correction")?.result.lambda_hat.len(), "out"))
}

/// Recovered per-bin expected arrivals.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn dt_correction_lambda(
    c: *const DtCorrection,
    out: *mut f64,
    len: usize,
) -> DtStatus {
    guard(|| {
        let r = &deref(c, "correction")?.result;
        out_slice(out, len, r.lambda_hat.len(), "out")?.copy_from_slice(&r.lambda_hat);
        Ok(())
    })
}

/// Recovered intensities normalized to unit sum.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn dt_correction_histogram(
    c: *const DtCorrection,
    out: *mut f64,
    len: usize,
) -> DtStatus {
    guard(|| {
        let r = &deref(c, "correction")?.result;
        if r.corrected_hist.is_empty() {
            return Err(Fail(
                DtStatus::DegenerateResult,
                "recovered intensity is identically zero".into(),
            ));
        }
        out_slice(out, len, r.corrected_hist.len(), "out")?.copy_from_slice(&r.corrected_hist);
        Ok(())
    })
}

/// Iteration count, final objective and whether the tolerance was met.
///
/// # Safety
/// Output pointers may be null; non-null ones must be writable.
#[no_mangle]
pub unsafe extern "C" fn dt_correction_stats(
    c: *const DtCorrection,
    iterations: *mut usize,
    final_objective: *mut f64,
    converged: *mut bool,
) -> DtStatus {
    guard(|| {
        let r = &deref(c, "correction")?.result;
        if !iterations.is_null() {
            iterations.write(r.iterations);
        }
        if !final_objective.is_null() {
            final_objective.write(r.final_objective());
        }
        if !converged.is_null() {
            converged.write(r.terminated == Termination::Tolerance);
        }
        Ok(())
    })
}

/// Copies the last error message into `buf` (NUL-terminated, truncated to
/// fit) and returns the full message length in bytes.
///
/// # Safety
/// `buf` must point to `len` writable bytes or be null with `len = 0`.
#[no_mangle]
pub unsafe extern "C" fn dt_last_error_copy(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = CStr::to_bytes(&e);
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            buf.add(n).write(0);
        }
        bytes.len()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ptr;

    #[test]
    fn status_mapping_covers_core_errors() {
        assert_eq!(status_of(&Error::UnsupportedMode), DtStatus::Unsupported);
        assert_eq!(
            status_of(&Error::Config("x".into())),
            DtStatus::InvalidArgument
        );
        assert_eq!(
            status_of(&Error::NotConverged {
                iterations: 1,
                residual: 1.0
            }),
            DtStatus::NotConverged
        );
    }

    #[test]
    fn panics_become_status_codes() {
        let s = guard(|| panic!("boom"));
        assert_eq!(s, DtStatus::Panic);
        let msg = unsafe { CStr::from_ptr(dt_last_error()) };
        assert_eq!(msg.to_str().unwrap(), "internal panic");
    }

    #[test]
    fn null_output_is_rejected() {
        let s = unsafe { dt_scene_new(100.0, 75.0, 2.0, 1.0, 1.0, 50.0, 0.5, ptr::null_mut()) };
        assert_eq!(s, DtStatus::NullPointer);
    }
}
