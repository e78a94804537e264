//! C ABI over `nhsyk`.
//!
//! Every function returns an [`NhsykStatus`]. Results come back through out
//! pointers; handles are created by `*_new`/`nhsyk_solve` and released with the
//! matching `*_free`. On failure a message is kept per thread and can be read
//! with [`nhsyk_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nhsyk::action::{fcs_point, on_shell_action};
use nhsyk::analysis::chord_length;
use nhsyk::contour::{ContourGrid, TwistSpec};
use nhsyk::saddle::{classify_phase, solve_saddle, ModelParams, PhaseKind, TransitionOrder};
use nhsyk::solver::{solve_fixed_point, SolveOptions, Solution};
use nhsyk::Error;

/// Status codes shared by every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NhsykStatus {
    Ok = 0,
    NullPointer = 1,
    Domain = 2,
    Config = 3,
    NoConvergence = 4,
    Singular = 5,
    Io = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NhsykPhase {
    AreaLaw = 0,
    Critical = 1,
    VolumeLaw = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NhsykTransition {
    Continuous = 0,
    FirstOrder = 1,
    NotAtBoundary = 2,
}

/// Model parameters. Opaque to C.
pub struct NhsykModel {
    params: ModelParams,
}

/// A converged saddle. Opaque to C.
pub struct NhsykSolution {
    inner: Solution,
}

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_error(msg: &str) {
    LAST_ERROR.with(|e| {
        let mut v = msg.as_bytes().to_vec();
        v.retain(|&b| b != 0);
        *e.borrow_mut() = v;
    });
}

fn status_of(err: &Error) -> NhsykStatus {
    match err {
        Error::Domain(_) | Error::Bracket { .. } => NhsykStatus::Domain,
        Error::Config(_) => NhsykStatus::Config,
        Error::NoConvergence { .. } | Error::Continuation { .. } => NhsykStatus::NoConvergence,
        Error::Singular { .. } => NhsykStatus::Singular,
        Error::Cache(_) | Error::Io(_) | Error::Csv(_) => NhsykStatus::Io,
    }
}

fn guard(f: impl FnOnce() -> Result<(), Error>) -> NhsykStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            NhsykStatus::Ok
        }
        Ok(Err(e)) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            NhsykStatus::Panic
        }
    }
}

macro_rules! non_null {
    ($($p:expr),+) => {
        if $($p.is_null())||+ {
            set_error("null pointer argument");
            return NhsykStatus::NullPointer;
        }
    };
}

/// Copies the last error message of this thread into `buf` (NUL-terminated).
/// `needed` receives the buffer size required, including the terminator.
///
/// # Safety
/// `buf` must be valid for `len` bytes or null when `len` is 0.
#[no_mangle]
pub unsafe extern "C" fn nhsyk_last_error(buf: *mut c_char, len: usize, needed: *mut usize) -> NhsykStatus {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !needed.is_null() {
            *needed = msg.len() + 1;
        }
        if len < msg.len() + 1 || buf.is_null() {
            return NhsykStatus::BufferTooSmall;
        }
        ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, msg.len());
        *buf.add(msg.len()) = 0;
        NhsykStatus::Ok
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nhsyk_version() -> *const c_char {
    static V: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version string"),
    };
    V.as_ptr()
}

/// Creates a model handle; `l` must be even.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nhsyk_model_new(j: f64, v: f64, zeta: f64, mu: f64, l: usize, t: f64, out: *mut *mut NhsykModel) -> NhsykStatus {
    non_null!(out);
    guard(|| {
        let params = ModelParams::new(j, v, zeta, mu, l, t);
        params.validate()?;
        *out = Box::into_raw(Box::new(NhsykModel { params }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`nhsyk_model_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn nhsyk_model_free(model: *mut NhsykModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Closed-form saddle `(P, S, z)`.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn nhsyk_solve_saddle(model: *const NhsykModel, p: *mut f64, s: *mut f64, z: *mut f64) -> NhsykStatus {
    non_null!(model, p, s, z);
    guard(|| {
        let sp = solve_saddle(&(*model).params)?;
        *p = sp.p;
        *s = sp.s;
        *z = sp.z;
        Ok(())
    })
}

/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn nhsyk_classify_phase(model: *const NhsykModel, kind: *mut NhsykPhase, order: *mut NhsykTransition) -> NhsykStatus {
    non_null!(model, kind, order);
    guard(|| {
        let label = classify_phase(&(*model).params)?;
        *kind = match label.kind {
            PhaseKind::AreaLaw => NhsykPhase::AreaLaw,
            PhaseKind::Critical => NhsykPhase::Critical,
            PhaseKind::VolumeLaw => NhsykPhase::VolumeLaw,
        };
        *order = match label.transition_order {
            TransitionOrder::Continuous => NhsykTransition::Continuous,
            TransitionOrder::FirstOrder => NhsykTransition::FirstOrder,
            TransitionOrder::NotAtBoundary => NhsykTransition::NotAtBoundary,
        };
        Ok(())
    })
}

/// `L sin(pi |A| / L) / pi`.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn nhsyk_chord_length(a_size: usize, l: usize, out: *mut f64) -> NhsykStatus {
    non_null!(out);
    guard(|| {
        *out = chord_length(a_size, l)?;
        Ok(())
    })
}

/// Solves the saddle-point equations directly at twist `phi` on `A = {1..a_size}`
/// with default solver options and `n_t` time steps.
///
/// # Safety
/// `model` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn nhsyk_solve(model: *const NhsykModel, n_t: usize, phi: f64, a_size: usize, out: *mut *mut NhsykSolution) -> NhsykStatus {
    non_null!(model, out);
    guard(|| {
        let params = &(*model).params;
        let grid = ContourGrid::for_model(params, n_t)?;
        let sol = solve_fixed_point(params, &TwistSpec { phi, a_size }, &grid, &SolveOptions::default())?;
        *out = Box::into_raw(Box::new(NhsykSolution { inner: sol }));
        Ok(())
    })
}

/// # Safety
/// `sol` must come from [`nhsyk_solve`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn nhsyk_solution_free(sol: *mut NhsykSolution) {
    if !sol.is_null() {
        drop(Box::from_raw(sol));
    }
}

/// Iterations used and the final change in `G`.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn nhsyk_solution_meta(sol: *const NhsykSolution, iters: *mut usize, final_delta: *mut f64) -> NhsykStatus {
    non_null!(sol, iters, final_delta);
    guard(|| {
        *iters = (*sol).inner.meta.iters;
        *final_delta = (*sol).inner.meta.final_delta;
        Ok(())
    })
}

/// `(P, S)` read off the self-energy at site `x` (1-based) and time step `k`.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn nhsyk_solution_saddle(sol: *const NhsykSolution, x: usize, k: usize, p: *mut f64, s: *mut f64) -> NhsykStatus {
    non_null!(sol, p, s);
    guard(|| {
        let inner = &(*sol).inner;
        if x == 0 || x > inner.params.l || k >= inner.grid.n_t {
            return Err(Error::Domain(format!("site {x} or step {k} out of range")));
        }
        let (pp, ss) = inner.extract_saddle(x, k);
        *p = pp;
        *s = ss;
        Ok(())
    })
}

/// On-shell `-I/N`.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn nhsyk_solution_action(sol: *const NhsykSolution, re: *mut f64, im: *mut f64) -> NhsykStatus {
    non_null!(sol, re, im);
    guard(|| {
        let a = on_shell_action(&(*sol).inner);
        *re = a.re;
        *im = a.im;
        Ok(())
    })
}

/// `F(phi, Q_A)/N` reached by continuation from `phi = 0`.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn nhsyk_fcs_point(model: *const NhsykModel, n_t: usize, phi: f64, a_size: usize, re: *mut f64, im: *mut f64) -> NhsykStatus {
    non_null!(model, re, im);
    guard(|| {
        let params = &(*model).params;
        let grid = ContourGrid::for_model(params, n_t)?;
        let r = fcs_point(params, &TwistSpec { phi, a_size }, &grid, &SolveOptions::default())?;
        *re = r.f_per_n.re;
        *im = r.f_per_n.im;
        Ok(())
    })
}
