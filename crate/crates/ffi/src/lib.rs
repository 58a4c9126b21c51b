//! C ABI over the simulator.
//!
//! Every function returns an [`NsnlStatus`]; on failure the message is kept
//! per thread and read with [`nsnl_last_error_message`]. Handles are opaque
//! and owned by the caller until passed to [`nsnl_sim_free`]. Panics never
//! cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use num_complex::Complex64;
use nsnl_core::dynamics::{Propagator, Scheme};
use nsnl_core::oracle::{GaussianMomentState, MomentSolution};
use nsnl_core::{gaussian_packet, io, make_grid, observables, verify, Error, PhysParams, WaveField};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NsnlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    GuardTripped = 3,
    Numerical = 4,
    Io = 5,
    Format = 6,
    Panic = 7,
}

/// Opaque simulation handle.
pub struct NsnlSim {
    state: WaveField,
    params: PhysParams,
    mass_ratio: f64,
    prop: Propagator,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> NsnlStatus {
    match e {
        Error::StabilityGuardTripped { .. } | Error::NormDriftAbort { .. } => NsnlStatus::GuardTripped,
        Error::NonFinite(_) | Error::SigmaUnderflow(_) | Error::AllNodes | Error::TooManyNodes(_) => {
            NsnlStatus::Numerical
        }
        Error::Io(_) => NsnlStatus::Io,
        Error::BadMagic
        | Error::VersionMismatch { .. }
        | Error::TruncatedPayload(_)
        | Error::ChecksumMismatch { .. } => NsnlStatus::Format,
        _ => NsnlStatus::InvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (NsnlStatus, String)>) -> NsnlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            NsnlStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            NsnlStatus::Panic
        }
    }
}

fn lift<T>(r: nsnl_core::Result<T>) -> Result<T, (NsnlStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), (NsnlStatus, String)> {
    if p.is_null() {
        Err((NsnlStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn nsnl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nsnl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a 1D Gaussian simulation with `M = mass_ratio·μ`, μ = ħ = 1
/// (`mass_ratio = 0` selects linear evolution with M = 1). A non-positive
/// `nl_cutoff` disables the band limit on the nonlinear rate.
///
/// # Safety
/// `out` must be valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn nsnl_sim_new_gaussian(
    n: usize,
    length: f64,
    sigma: f64,
    x0: f64,
    k0: f64,
    mass_ratio: f64,
    dt: f64,
    nl_cutoff: f64,
    out: *mut *mut NsnlSim,
) -> NsnlStatus {
    guard(|| {
        non_null(out, "out")?;
        if !(mass_ratio >= 0.0) || !mass_ratio.is_finite() {
            return Err((NsnlStatus::InvalidArgument, format!("mass ratio {mass_ratio} must be >= 0")));
        }
        let grid = lift(make_grid(&[(n, length)]))?;
        let params = PhysParams {
            nl_cutoff: (nl_cutoff > 0.0).then_some(nl_cutoff),
            ..PhysParams::with_ratio(mass_ratio)
        };
        lift(params.validate())?;
        let state = lift(gaussian_packet(&grid, &[x0], sigma, &[k0]))?;
        let prop = lift(Propagator::new(&grid, &params, Scheme::Strang, dt))?;
        let sim = Box::new(NsnlSim {
            state,
            params,
            mass_ratio,
            prop,
        });
        // SAFETY: `out` is non-null and the caller guarantees it is writable.
        unsafe { *out = Box::into_raw(sim) };
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `sim` must come from [`nsnl_sim_new_gaussian`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nsnl_sim_free(sim: *mut NsnlSim) {
    if !sim.is_null() {
        // SAFETY: ownership returns from the caller, who created it with Box::into_raw.
        drop(unsafe { Box::from_raw(sim) });
    }
}

/// # Safety
/// `sim` must be a live handle.
unsafe fn sim_mut<'a>(sim: *mut NsnlSim) -> Result<&'a mut NsnlSim, (NsnlStatus, String)> {
    non_null(sim, "sim")?;
    // SAFETY: non-null live handle per the caller's contract.
    Ok(unsafe { &mut *sim })
}

/// Advances `steps` strang steps. On a guard trip the state is left at the
/// last completed step.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn nsnl_sim_step(sim: *mut NsnlSim, steps: usize) -> NsnlStatus {
    guard(|| {
        let s = unsafe { sim_mut(sim) }?;
        let dt = s.prop.dt();
        let mut work = s.state.psi.as_slice().to_vec();
        for _ in 0..steps {
            match s.prop.step(&mut work) {
                Ok(_) => {
                    s.state.psi.as_mut_slice().copy_from_slice(&work);
                    s.state.time += dt;
                }
                Err(e) => return lift(Err(e)),
            }
        }
        Ok(())
    })
}

/// # Safety
/// `sim` must be a live handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn nsnl_sim_time(sim: *const NsnlSim, out: *mut f64) -> NsnlStatus {
    guard(|| {
        let s = unsafe { sim_mut(sim.cast_mut()) }?;
        non_null(out, "out")?;
        unsafe { *out = s.state.time };
        Ok(())
    })
}

/// Number of grid points.
///
/// # Safety
/// `sim` must be a live handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn nsnl_sim_len(sim: *const NsnlSim, out: *mut usize) -> NsnlStatus {
    guard(|| {
        let s = unsafe { sim_mut(sim.cast_mut()) }?;
        non_null(out, "out")?;
        unsafe { *out = s.state.psi.len() };
        Ok(())
    })
}

/// Norm, mean position and width of the current state.
///
/// # Safety
/// `sim` must be a live handle; each output pointer valid for one write.
#[no_mangle]
pub unsafe extern "C" fn nsnl_sim_observables(
    sim: *const NsnlSim,
    norm: *mut f64,
    mean_x: *mut f64,
    width: *mut f64,
) -> NsnlStatus {
    guard(|| {
        let s = unsafe { sim_mut(sim.cast_mut()) }?;
        non_null(norm, "norm")?;
        non_null(mean_x, "mean_x")?;
        non_null(width, "width")?;
        let o = lift(observables(&s.state, &s.params))?;
        unsafe {
            *norm = o.norm;
            *mean_x = o.mean_x[0];
            *width = o.width[0];
        }
        Ok(())
    })
}

/// Copies the field into caller buffers of `len` entries each.
///
/// # Safety
/// `re` and `im` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn nsnl_sim_copy_state(
    sim: *const NsnlSim,
    re: *mut f64,
    im: *mut f64,
    len: usize,
) -> NsnlStatus {
    guard(|| {
        let s = unsafe { sim_mut(sim.cast_mut()) }?;
        non_null(re, "re")?;
        non_null(im, "im")?;
        let psi = s.state.psi.as_slice();
        if len != psi.len() {
            return Err((
                NsnlStatus::InvalidArgument,
                format!("buffer length {len} does not match {} grid points", psi.len()),
            ));
        }
        // SAFETY: both buffers hold `len` elements per the caller's contract.
        let (re, im) = unsafe { (std::slice::from_raw_parts_mut(re, len), std::slice::from_raw_parts_mut(im, len)) };
        for (i, z) in psi.iter().enumerate() {
            re[i] = z.re;
            im[i] = z.im;
        }
        Ok(())
    })
}

/// Normalized non-signaling residual of the current state.
///
/// # Safety
/// `sim` must be a live handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn nsnl_sim_nonsignaling_residual(sim: *const NsnlSim, out: *mut f64) -> NsnlStatus {
    guard(|| {
        let s = unsafe { sim_mut(sim.cast_mut()) }?;
        non_null(out, "out")?;
        unsafe { *out = verify::check_nonsignaling(&s.state, &s.params).max_residual };
        Ok(())
    })
}

/// Writes the current state as a binary snapshot file.
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn nsnl_sim_write_snapshot(sim: *const NsnlSim, path: *const c_char) -> NsnlStatus {
    guard(|| {
        let s = unsafe { sim_mut(sim.cast_mut()) }?;
        non_null(path, "path")?;
        // SAFETY: NUL-terminated per the caller's contract.
        let path = unsafe { CStr::from_ptr(path) }
            .to_str()
            .map_err(|_| (NsnlStatus::InvalidArgument, "path is not UTF-8".to_string()))?;
        let bytes = io::write_snapshot(&s.state, s.mass_ratio);
        std::fs::write(path, bytes).map_err(|e| (NsnlStatus::Io, e.to_string()))
    })
}

/// Replaces the state with one read from a snapshot file on the same grid.
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn nsnl_sim_read_snapshot(sim: *mut NsnlSim, path: *const c_char) -> NsnlStatus {
    guard(|| {
        let s = unsafe { sim_mut(sim) }?;
        non_null(path, "path")?;
        let path = unsafe { CStr::from_ptr(path) }
            .to_str()
            .map_err(|_| (NsnlStatus::InvalidArgument, "path is not UTF-8".to_string()))?;
        let bytes = std::fs::read(path).map_err(|e| (NsnlStatus::Io, e.to_string()))?;
        let snap = lift(io::read_snapshot(&bytes))?;
        if snap.state.grid() != s.state.grid() {
            return Err((NsnlStatus::InvalidArgument, "snapshot grid differs from the handle's grid".into()));
        }
        let data: Vec<Complex64> = snap.state.psi.as_slice().to_vec();
        s.state.psi.as_mut_slice().copy_from_slice(&data);
        s.state.time = snap.state.time;
        Ok(())
    })
}

/// Width σ(t) of a Gaussian at rest from the moment equations, with
/// `M = mass_ratio·μ` and μ = ħ = 1.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn nsnl_moment_sigma(sigma0: f64, mass_ratio: f64, t: f64, out: *mut f64) -> NsnlStatus {
    guard(|| {
        non_null(out, "out")?;
        if !(sigma0 > 0.0) || !(t >= 0.0) || !(mass_ratio >= 0.0) {
            return Err((NsnlStatus::InvalidArgument, "need sigma0 > 0, t >= 0, mass_ratio >= 0".into()));
        }
        let params = PhysParams::with_ratio(mass_ratio);
        let sol = lift(MomentSolution::solve(GaussianMomentState::at_rest(sigma0), t.max(1e-12), &params, 1e-10))?;
        unsafe { *out = sol.sigma(t) };
        Ok(())
    })
}
