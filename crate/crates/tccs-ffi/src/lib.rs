//! C ABI over the completion toolkit.
//!
//! Conventions:
//! - Handles (`TccsTensor`, `TccsPlan`) are opaque; free them with their
//!   `_free` function. Passing a handle after freeing it is undefined
//!   behaviour, as in any C library.
//! - Every fallible function returns a [`TccsStatus`]; `Ok` is 0. The codes
//!   match the CLI exit codes (2 parameter, 3 I/O, 4 numerical), with 1
//!   reserved for null or otherwise unusable arguments.
//! - On failure a thread-local message is set; read it with
//!   [`tccs_last_error_message`]. The pointer stays valid until the next
//!   failing call on the same thread.
//! - Tensor buffers are exchanged in the library layout: frontal slices
//!   stacked along the third index, each slice row-major, so entry (i, j, k)
//!   sits at `k*n1*n2 + i*n2 + j`.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use tccs::io;
use tccs::metrics;
use tccs::sampling::{make_ccs_plan, CcsPlan};
use tccs::solvers::{itcurtc, tstc, IhtSubSolver, SolverConfig};
use tccs::tcur::cur_reconstruct;
use tccs::tensor::DenseTensor3;
use tccs::Error;

/// Result of every fallible call. Matches the CLI exit codes.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum TccsStatus {
    Ok = 0,
    /// A required pointer was null or a handle was unusable.
    NullArgument = 1,
    /// An argument was outside its documented domain.
    Parameter = 2,
    /// File trouble or malformed on-disk data.
    Io = 3,
    /// The computation failed numerically (divergence, bad values).
    Numerical = 4,
}

/// Opaque third-order tensor handle.
pub struct TccsTensor(DenseTensor3);

/// Opaque sampling-plan handle carrying the observed coordinates and values.
pub struct TccsPlan(CcsPlan);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let cleaned: String = message.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(cleaned).unwrap());
}

fn fail(status: TccsStatus, message: &str) -> TccsStatus {
    set_error(message);
    status
}

fn fail_with(err: &Error) -> TccsStatus {
    let status = match err.exit_code() {
        2 => TccsStatus::Parameter,
        3 => TccsStatus::Io,
        _ => TccsStatus::Numerical,
    };
    fail(status, &err.to_string())
}

/// Runs the body behind a panic guard: a panic must not unwind into C.
fn guarded<F: FnOnce() -> TccsStatus>(f: F) -> TccsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(TccsStatus::Numerical, "internal panic"),
    }
}

/// # Safety
/// `p` must be null or valid for reads.
unsafe fn want<'a, T>(p: *const T, what: &str) -> Result<&'a T, TccsStatus> {
    p.as_ref()
        .ok_or_else(|| fail(TccsStatus::NullArgument, &format!("{what} is null")))
}

/// # Safety
/// `path` must be null or a NUL-terminated string.
unsafe fn want_path<'a>(path: *const c_char) -> Result<&'a Path, TccsStatus> {
    let raw = path
        .as_ref()
        .ok_or_else(|| fail(TccsStatus::NullArgument, "path is null"))?;
    CStr::from_ptr(raw)
        .to_str()
        .map(Path::new)
        .map_err(|_| fail(TccsStatus::Parameter, "path is not valid UTF-8"))
}

unsafe fn give_tensor(t: DenseTensor3, out: *mut *mut TccsTensor) -> TccsStatus {
    if out.is_null() {
        return fail(TccsStatus::NullArgument, "output handle pointer is null");
    }
    *out = Box::into_raw(Box::new(TccsTensor(t)));
    TccsStatus::Ok
}

/// Message describing the most recent failure on this thread; empty if no
/// call has failed yet. Valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn tccs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

// ---------------------------------------------------------------------------
// tensors
// ---------------------------------------------------------------------------

/// Builds an n1 x n2 x n3 tensor from `len` = n1*n2*n3 values laid out as
/// documented in the crate header. The buffer is copied.
///
/// # Safety
/// `values` must point to `len` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tccs_tensor_create(
    n1: usize,
    n2: usize,
    n3: usize,
    values: *const f64,
    len: usize,
    out: *mut *mut TccsTensor,
) -> TccsStatus {
    guarded(|| {
        if values.is_null() {
            return fail(TccsStatus::NullArgument, "values is null");
        }
        if len != n1 * n2 * n3 {
            return fail(
                TccsStatus::Parameter,
                &format!("len = {len} does not match {n1}x{n2}x{n3}"),
            );
        }
        let data = std::slice::from_raw_parts(values, len).to_vec();
        match DenseTensor3::from_vec(n1, n2, n3, data) {
            Ok(t) => give_tensor(t, out),
            Err(e) => fail_with(&e),
        }
    })
}

/// Draws a random tensor of the requested tubal rank from two Gaussian
/// factor tensors. Identical seeds give identical tensors.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tccs_gen_lowrank(
    n1: usize,
    n2: usize,
    n3: usize,
    rank: usize,
    seed: u64,
    out: *mut *mut TccsTensor,
) -> TccsStatus {
    guarded(|| match tccs::experiments::gen_lowrank(n1, n2, n3, rank, seed) {
        Ok(t) => give_tensor(t, out),
        Err(e) => fail_with(&e),
    })
}

/// Frees a tensor handle. Null is a no-op.
///
/// # Safety
/// `t` must be null or a handle this library returned, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tccs_tensor_free(t: *mut TccsTensor) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Writes the three dimensions.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn tccs_tensor_dims(
    t: *const TccsTensor,
    n1: *mut usize,
    n2: *mut usize,
    n3: *mut usize,
) -> TccsStatus {
    guarded(|| {
        let t = match want(t, "tensor") {
            Ok(t) => t,
            Err(s) => return s,
        };
        if n1.is_null() || n2.is_null() || n3.is_null() {
            return fail(TccsStatus::NullArgument, "dimension output is null");
        }
        (*n1, *n2, *n3) = t.0.dims();
        TccsStatus::Ok
    })
}

/// Reads one entry, bounds-checked.
///
/// # Safety
/// `t` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tccs_tensor_get(
    t: *const TccsTensor,
    i: usize,
    j: usize,
    k: usize,
    out: *mut f64,
) -> TccsStatus {
    guarded(|| {
        let t = match want(t, "tensor") {
            Ok(t) => t,
            Err(s) => return s,
        };
        if out.is_null() {
            return fail(TccsStatus::NullArgument, "output is null");
        }
        let (n1, n2, n3) = t.0.dims();
        if i >= n1 || j >= n2 || k >= n3 {
            return fail(
                TccsStatus::Parameter,
                &format!("index ({i}, {j}, {k}) outside {n1}x{n2}x{n3}"),
            );
        }
        *out = t.0.get(i, j, k);
        TccsStatus::Ok
    })
}

/// Copies all entries into `out`, which must hold exactly `len` = n1*n2*n3
/// doubles; the layout matches [`tccs_tensor_create`].
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn tccs_tensor_copy_values(
    t: *const TccsTensor,
    out: *mut f64,
    len: usize,
) -> TccsStatus {
    guarded(|| {
        let t = match want(t, "tensor") {
            Ok(t) => t,
            Err(s) => return s,
        };
        if out.is_null() {
            return fail(TccsStatus::NullArgument, "output buffer is null");
        }
        if len != t.0.len() {
            return fail(
                TccsStatus::Parameter,
                &format!("buffer holds {len} entries, tensor has {}", t.0.len()),
            );
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(t.0.values());
        TccsStatus::Ok
    })
}

/// Reads a tensor file (binary format, bit-exact round trips).
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tccs_tensor_read(
    path: *const c_char,
    out: *mut *mut TccsTensor,
) -> TccsStatus {
    guarded(|| {
        let path = match want_path(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match io::read_tensor(path) {
            Ok(t) => give_tensor(t, out),
            Err(e) => fail_with(&e),
        }
    })
}

/// Writes a tensor file.
///
/// # Safety
/// `path` must be NUL-terminated; `t` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tccs_tensor_write(
    path: *const c_char,
    t: *const TccsTensor,
) -> TccsStatus {
    guarded(|| {
        let path = match want_path(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let t = match want(t, "tensor") {
            Ok(t) => t,
            Err(s) => return s,
        };
        match io::write_tensor(path, &t.0) {
            Ok(()) => TccsStatus::Ok,
            Err(e) => fail_with(&e),
        }
    })
}

// ---------------------------------------------------------------------------
// sampling plans
// ---------------------------------------------------------------------------

/// Draws a cross-concentrated sampling plan over `t`: `size_i` horizontal
/// and `size_j` lateral slices chosen uniformly without replacement, then
/// Bernoulli masks at rates `p_r` / `p_c` on the two slabs. The observed
/// values of `t` are recorded in the plan.
///
/// # Safety
/// `t` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tccs_plan_sample(
    t: *const TccsTensor,
    size_i: usize,
    size_j: usize,
    p_r: f64,
    p_c: f64,
    seed: u64,
    out: *mut *mut TccsPlan,
) -> TccsStatus {
    guarded(|| {
        let t = match want(t, "tensor") {
            Ok(t) => t,
            Err(s) => return s,
        };
        if out.is_null() {
            return fail(TccsStatus::NullArgument, "output handle pointer is null");
        }
        let mut plan = match make_ccs_plan(t.0.dims(), size_i, size_j, p_r, p_c, false, seed) {
            Ok(p) => p,
            Err(e) => return fail_with(&e),
        };
        if let Err(e) = plan.capture(&t.0) {
            return fail_with(&e);
        }
        *out = Box::into_raw(Box::new(TccsPlan(plan)));
        TccsStatus::Ok
    })
}

/// Frees a plan handle. Null is a no-op.
///
/// # Safety
/// `p` must be null or a handle this library returned, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tccs_plan_free(p: *mut TccsPlan) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Fraction of tensor entries the plan observes (duplicates counted once).
///
/// # Safety
/// `p` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tccs_plan_overall_rate(
    p: *const TccsPlan,
    out: *mut f64,
) -> TccsStatus {
    guarded(|| {
        let p = match want(p, "plan") {
            Ok(p) => p,
            Err(s) => return s,
        };
        if out.is_null() {
            return fail(TccsStatus::NullArgument, "output is null");
        }
        *out = p.0.overall_rate();
        TccsStatus::Ok
    })
}

/// Reads a plan file (text format).
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tccs_plan_read(
    path: *const c_char,
    out: *mut *mut TccsPlan,
) -> TccsStatus {
    guarded(|| {
        let path = match want_path(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        if out.is_null() {
            return fail(TccsStatus::NullArgument, "output handle pointer is null");
        }
        match io::read_plan(path) {
            Ok(p) => {
                *out = Box::into_raw(Box::new(TccsPlan(p)));
                TccsStatus::Ok
            }
            Err(e) => fail_with(&e),
        }
    })
}

/// Writes a plan file.
///
/// # Safety
/// `path` must be NUL-terminated; `p` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tccs_plan_write(path: *const c_char, p: *const TccsPlan) -> TccsStatus {
    guarded(|| {
        let path = match want_path(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let p = match want(p, "plan") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match io::write_plan(path, &p.0) {
            Ok(()) => TccsStatus::Ok,
            Err(e) => fail_with(&e),
        }
    })
}

// ---------------------------------------------------------------------------
// solvers
// ---------------------------------------------------------------------------

/// Completes the plan's tensor with the iterative cross solver and returns
/// the dense reconstruction. Step sizes `eta_r`, `eta_c`, `eta_u` of 0 or
/// below select the library defaults (inverse sampling rates). `iterations`,
/// `residual`, and `converged` may be null if not wanted.
///
/// # Safety
/// `p` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn tccs_itcurtc_complete(
    p: *const TccsPlan,
    rank: usize,
    tol: f64,
    max_iter: usize,
    eta_r: f64,
    eta_c: f64,
    eta_u: f64,
    out: *mut *mut TccsTensor,
    iterations: *mut usize,
    residual: *mut f64,
    converged: *mut c_int,
) -> TccsStatus {
    guarded(|| {
        let p = match want(p, "plan") {
            Ok(p) => p,
            Err(s) => return s,
        };
        let mut cfg = SolverConfig::new(rank);
        cfg.tol = tol;
        cfg.max_iter = max_iter;
        cfg.eta_r = (eta_r > 0.0).then_some(eta_r);
        cfg.eta_c = (eta_c > 0.0).then_some(eta_c);
        cfg.eta_u = (eta_u > 0.0).then_some(eta_u);
        let (factors, report) = match itcurtc(&p.0, &cfg) {
            Ok(r) => r,
            Err(e) => return fail_with(&e),
        };
        let dense = match cur_reconstruct(&factors) {
            Ok(t) => t,
            Err(e) => return fail_with(&e),
        };
        if !iterations.is_null() {
            *iterations = report.iterations;
        }
        if !residual.is_null() {
            *residual = report.e_history.last().copied().unwrap_or(f64::NAN);
        }
        if !converged.is_null() {
            *converged = report.converged as c_int;
        }
        give_tensor(dense, out)
    })
}

/// Completes the plan's tensor with the two-stage slab solver. A `sub_eta`
/// of 0 or below selects the default step (inverse slab rate).
///
/// # Safety
/// `p` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tccs_tstc_complete(
    p: *const TccsPlan,
    rank: usize,
    sub_eta: f64,
    tol: f64,
    max_iter: usize,
    out: *mut *mut TccsTensor,
) -> TccsStatus {
    guarded(|| {
        let p = match want(p, "plan") {
            Ok(p) => p,
            Err(s) => return s,
        };
        let sub = IhtSubSolver {
            eta: (sub_eta > 0.0).then_some(sub_eta),
            tol,
            max_iter,
        };
        match tstc(&p.0, rank, &sub) {
            Ok(t) => give_tensor(t, out),
            Err(e) => fail_with(&e),
        }
    })
}

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

unsafe fn metric(
    truth: *const TccsTensor,
    estimate: *const TccsTensor,
    out: *mut f64,
    f: fn(&DenseTensor3, &DenseTensor3) -> tccs::Result<f64>,
) -> TccsStatus {
    let truth = match want(truth, "truth tensor") {
        Ok(t) => t,
        Err(s) => return s,
    };
    let estimate = match want(estimate, "estimate tensor") {
        Ok(t) => t,
        Err(s) => return s,
    };
    if out.is_null() {
        return fail(TccsStatus::NullArgument, "output is null");
    }
    match f(&truth.0, &estimate.0) {
        Ok(v) => {
            *out = v;
            TccsStatus::Ok
        }
        Err(e) => fail_with(&e),
    }
}

/// Frobenius relative error of `estimate` against `truth`.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tccs_rel_error(
    truth: *const TccsTensor,
    estimate: *const TccsTensor,
    out: *mut f64,
) -> TccsStatus {
    guarded(|| metric(truth, estimate, out, metrics::rel_error))
}

/// Peak signal-to-noise ratio in dB; identical tensors give +infinity.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tccs_psnr(
    truth: *const TccsTensor,
    estimate: *const TccsTensor,
    out: *mut f64,
) -> TccsStatus {
    guarded(|| metric(truth, estimate, out, metrics::psnr))
}

/// Mean SSIM over frontal slices.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tccs_ssim(
    truth: *const TccsTensor,
    estimate: *const TccsTensor,
    out: *mut f64,
) -> TccsStatus {
    guarded(|| metric(truth, estimate, out, metrics::ssim_avg))
}
