//! C ABI over `spmlab`.
//!
//! Objects cross the boundary as opaque handles created by `spm_*_new`-style
//! constructors and released with the matching `spm_*_free`. Every fallible
//! call returns an [`SpmStatus`]; the message of the last failure on the
//! calling thread is available from [`spm_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use spmlab::config::{RunConfig, Setup};
use spmlab::nonlinearity::{make_power_law, regularize_a, Nonlinearity};
use spmlab::solver::Trajectory;
use spmlab::Error;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidParameter = 3,
    Config = 4,
    Validation = 5,
    Numerical = 6,
    Io = 7,
    OutOfRange = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

/// Nonlinearity `A`, raw or regularized.
pub struct SpmNonlinearity(Nonlinearity);

/// A validated run configuration with its assembled problem.
pub struct SpmSetup(Setup);

/// Saved states of one run.
pub struct SpmTrajectory(Trajectory);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(s));
}

fn status_of(e: &Error) -> SpmStatus {
    match e {
        Error::InvalidParameter { .. } | Error::Parse { .. } => SpmStatus::InvalidParameter,
        Error::Config { .. } | Error::Toml(_) | Error::Json(_) | Error::MismatchedConfigs(_) => SpmStatus::Config,
        Error::Validation(_) => SpmStatus::Validation,
        Error::Quadrature { .. } | Error::NewtonDivergence { .. } | Error::NonFinite | Error::Step { .. } => {
            SpmStatus::Numerical
        }
        Error::File { .. } | Error::Io(_) | Error::Csv(_) => SpmStatus::Io,
    }
}

fn fail(status: SpmStatus, msg: impl Into<String>) -> SpmStatus {
    set_error(msg);
    status
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), SpmStatus>) -> SpmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SpmStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(SpmStatus::Panic, "panic inside spmlab"),
    }
}

fn lib<T>(r: spmlab::Result<T>) -> Result<T, SpmStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

unsafe fn obj<'a, T>(p: *const T) -> Result<&'a T, SpmStatus> {
    p.as_ref().ok_or_else(|| fail(SpmStatus::NullPointer, "null handle"))
}

unsafe fn out<'a, T>(p: *mut T) -> Result<&'a mut T, SpmStatus> {
    p.as_mut().ok_or_else(|| fail(SpmStatus::NullPointer, "null output pointer"))
}

unsafe fn text<'a>(p: *const c_char) -> Result<&'a str, SpmStatus> {
    if p.is_null() {
        return Err(fail(SpmStatus::NullPointer, "null string"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(SpmStatus::InvalidUtf8, "string is not valid UTF-8"))
}

/// Message of the last failure on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn spm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Static, NUL-terminated library version.
#[no_mangle]
pub extern "C" fn spm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// `A(r) = |r|^{m-1} r`.
///
/// # Safety
/// `out_nl` must be a valid pointer to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn spm_nonlinearity_power_law(m: f64, k: f64, out_nl: *mut *mut SpmNonlinearity) -> SpmStatus {
    guard(|| {
        let slot = out(out_nl)?;
        let nl = lib(make_power_law(m, k))?;
        *slot = Box::into_raw(Box::new(SpmNonlinearity(nl)));
        Ok(())
    })
}

/// Regularization `A_n` of `nl`; the input handle is left untouched.
///
/// # Safety
/// `nl` must be a live handle and `out_nl` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn spm_nonlinearity_regularize(
    nl: *const SpmNonlinearity,
    n: u32,
    out_nl: *mut *mut SpmNonlinearity,
) -> SpmStatus {
    guard(|| {
        let nl = obj(nl)?;
        let slot = out(out_nl)?;
        let reg = lib(regularize_a(&nl.0, n))?;
        *slot = Box::into_raw(Box::new(SpmNonlinearity(reg)));
        Ok(())
    })
}

/// Which function of the nonlinearity to evaluate.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpmNonlinearityFn {
    /// `A(r)`.
    A = 0,
    /// `A'(r)`.
    DerivativeA = 1,
    /// `𝔞(r) = √A'(r)`.
    SqrtDiffusivity = 2,
    /// `Ψ(r) = ∫_0^r 𝔞`.
    Psi = 3,
}

/// Evaluates `which` at `r`.
///
/// # Safety
/// `nl` must be a live handle and `out_value` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn spm_nonlinearity_eval(
    nl: *const SpmNonlinearity,
    which: SpmNonlinearityFn,
    r: f64,
    out_value: *mut f64,
) -> SpmStatus {
    guard(|| {
        let nl = &obj(nl)?.0;
        *out(out_value)? = match which {
            SpmNonlinearityFn::A => nl.eval_a_fn(r),
            SpmNonlinearityFn::DerivativeA => nl.eval_da(r),
            SpmNonlinearityFn::SqrtDiffusivity => nl.eval_a(r),
            SpmNonlinearityFn::Psi => nl.eval_psi(r),
        };
        Ok(())
    })
}

/// # Safety
/// `nl` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn spm_nonlinearity_free(nl: *mut SpmNonlinearity) {
    if !nl.is_null() {
        drop(Box::from_raw(nl));
    }
}

/// Parses, validates and assembles a run configuration given as TOML.
/// Relative paths inside it resolve against `base_dir` (may be NULL for
/// the current directory).
///
/// # Safety
/// `toml` must be a NUL-terminated string, `base_dir` NULL or one, and
/// `out_setup` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn spm_setup_from_toml(
    toml: *const c_char,
    base_dir: *const c_char,
    out_setup: *mut *mut SpmSetup,
) -> SpmStatus {
    guard(|| {
        let src = text(toml)?;
        let base = if base_dir.is_null() { "." } else { text(base_dir)? };
        let slot = out(out_setup)?;
        let cfg = lib(RunConfig::from_toml_str(src))?;
        let setup = lib(cfg.build(Path::new(base)))?;
        *slot = Box::into_raw(Box::new(SpmSetup(setup)));
        Ok(())
    })
}

/// Copies the hex config hash (64 characters plus NUL) into `buf`.
///
/// # Safety
/// `setup` must be a live handle and `buf` writable for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn spm_setup_config_hash(setup: *const SpmSetup, buf: *mut c_char, len: usize) -> SpmStatus {
    guard(|| {
        let hash = &obj(setup)?.0.hash;
        if buf.is_null() {
            return Err(fail(SpmStatus::NullPointer, "null buffer"));
        }
        if len < hash.len() + 1 {
            return Err(fail(SpmStatus::BufferTooSmall, format!("need {} bytes", hash.len() + 1)));
        }
        ptr::copy_nonoverlapping(hash.as_ptr().cast::<c_char>(), buf, hash.len());
        *buf.add(hash.len()) = 0;
        Ok(())
    })
}

/// Number of ensemble members of the configuration.
///
/// # Safety
/// `setup` must be a live handle and `out_count` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn spm_setup_seed_count(setup: *const SpmSetup, out_count: *mut usize) -> SpmStatus {
    guard(|| {
        let s = obj(setup)?;
        *out(out_count)? = s.0.config.ensemble.count;
        Ok(())
    })
}

/// Seed of ensemble member `index`.
///
/// # Safety
/// `setup` must be a live handle and `out_seed` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn spm_setup_seed(setup: *const SpmSetup, index: usize, out_seed: *mut u64) -> SpmStatus {
    guard(|| {
        let s = obj(setup)?;
        let slot = out(out_seed)?;
        let seeds = s.0.config.seeds();
        *slot = *seeds
            .get(index)
            .ok_or_else(|| fail(SpmStatus::OutOfRange, format!("member {index} of {}", seeds.len())))?;
        Ok(())
    })
}

/// # Safety
/// `setup` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn spm_setup_free(setup: *mut SpmSetup) {
    if !setup.is_null() {
        drop(Box::from_raw(setup));
    }
}

/// Runs the member driven by `seed`.
///
/// # Safety
/// `setup` must be a live handle and `out_traj` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn spm_setup_run(setup: *const SpmSetup, seed: u64, out_traj: *mut *mut SpmTrajectory) -> SpmStatus {
    guard(|| {
        let s = obj(setup)?;
        let slot = out(out_traj)?;
        let t = lib(s.0.run(seed))?;
        *slot = Box::into_raw(Box::new(SpmTrajectory(t)));
        Ok(())
    })
}

/// Number of saved states.
///
/// # Safety
/// `traj` must be a live handle and `out_count` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn spm_trajectory_save_count(traj: *const SpmTrajectory, out_count: *mut usize) -> SpmStatus {
    guard(|| {
        *out(out_count)? = obj(traj)?.0.fields.len();
        Ok(())
    })
}

/// Number of lattice points per saved state.
///
/// # Safety
/// `traj` must be a live handle and `out_len` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn spm_trajectory_field_len(traj: *const SpmTrajectory, out_len: *mut usize) -> SpmStatus {
    guard(|| {
        *out(out_len)? = obj(traj)?.0.fields[0].values.len();
        Ok(())
    })
}

/// Time and values of saved state `index`; `values` receives
/// `spm_trajectory_field_len` doubles.
///
/// # Safety
/// `traj` must be a live handle, `out_time` a valid pointer and `values`
/// writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn spm_trajectory_field(
    traj: *const SpmTrajectory,
    index: usize,
    out_time: *mut f64,
    values: *mut f64,
    len: usize,
) -> SpmStatus {
    guard(|| {
        let t = &obj(traj)?.0;
        let time = out(out_time)?;
        let field = t
            .fields
            .get(index)
            .ok_or_else(|| fail(SpmStatus::OutOfRange, format!("state {index} of {}", t.fields.len())))?;
        if values.is_null() {
            return Err(fail(SpmStatus::NullPointer, "null buffer"));
        }
        if len < field.values.len() {
            return Err(fail(SpmStatus::BufferTooSmall, format!("need {} values", field.values.len())));
        }
        ptr::copy_nonoverlapping(field.values.as_ptr(), values, field.values.len());
        *time = t.times[index];
        Ok(())
    })
}

/// Writes the norm time series as CSV to `path`.
///
/// # Safety
/// `traj` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn spm_trajectory_write_csv(traj: *const SpmTrajectory, path: *const c_char) -> SpmStatus {
    guard(|| {
        let t = &obj(traj)?.0;
        let p = text(path)?;
        let file = std::fs::File::create(p).map_err(|e| fail(SpmStatus::Io, format!("{p}: {e}")))?;
        lib(t.write_csv(std::io::BufWriter::new(file)))
    })
}

/// # Safety
/// `traj` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn spm_trajectory_free(traj: *mut SpmTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}
