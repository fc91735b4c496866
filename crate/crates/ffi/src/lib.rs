//! C ABI over `gfn-core`.
//!
//! Objects cross the boundary as opaque heap handles created by a
//! `gfn_*_new`-style call and released by the matching `gfn_*_free`. Every
//! fallible call returns a [`GfnStatus`]; on failure the message is kept per
//! thread and can be copied out with [`gfn_last_error_message`]. Panics are
//! caught at the boundary and reported as `GFN_STATUS_PANIC`.
//!
//! Points are one-dimensional: the C API covers the scalar case only.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use gfn_core::basic_space::{embed_c, embed_j, mul, sub};
use gfn_core::cli::{emit, run_scenario, ScenarioConfig};
use gfn_core::{build_mollifier_at, pullback_rep, Diffeomorphism, Distribution, Error, MultiIndex, Representative, SmoothFn, TestFunction};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GfnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    IllConditioned = 4,
    UnknownName = 5,
    Config = 6,
    Io = 7,
    Numerical = 8,
    Panic = 9,
}

impl From<&Error> for GfnStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::IllConditioned { .. } => GfnStatus::IllConditioned,
            Error::Domain(_) | Error::OutsidePartialDomain { .. } => GfnStatus::Domain,
            Error::UnknownName { .. } => GfnStatus::UnknownName,
            Error::Config(_) => GfnStatus::Config,
            Error::Io(_) => GfnStatus::Io,
            Error::Overflow(_) => GfnStatus::Numerical,
            Error::FormalismMismatch { .. } | Error::NotZeroMass { .. } | Error::InvalidArgument(_) => GfnStatus::InvalidArgument,
        }
    }
}

/// Opaque test function.
pub struct GfnTestFunction(TestFunction);
/// Opaque distribution.
pub struct GfnDistribution(Distribution);
/// Opaque representative on the basic space.
pub struct GfnRepresentative(Representative);
/// Opaque diffeomorphism.
pub struct GfnDiffeo(Diffeomorphism);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

struct Failure(GfnStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure((&e).into(), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(GfnStatus::NullPointer, format!("`{what}` is null"))
}

/// Runs `f`, records any failure, and converts it to a status.
fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> GfnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            GfnStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            GfnStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn write<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = value;
    Ok(())
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(GfnStatus::InvalidArgument, format!("`{what}` is not valid UTF-8")))
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gfn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len - 1` bytes) and returns the full message length. Pass a
/// null `buf` to query the length.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn gfn_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Mollifier of order `q` (unit mass, vanishing moments `1..=q` about the
/// origin) supported in `[center - radius, center + radius]`.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn gfn_mollifier_new(q: u32, radius: f64, center: f64, out: *mut *mut GfnTestFunction) -> GfnStatus {
    guard(|| put(out, GfnTestFunction(build_mollifier_at(q, 1, radius, [center, 0.0])?)))
}

/// `eps^-1 phi(x / eps)` as a new handle.
///
/// # Safety
/// `phi` must be a live handle and `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn gfn_test_function_scale(phi: *const GfnTestFunction, eps: f64, out: *mut *mut GfnTestFunction) -> GfnStatus {
    guard(|| {
        let phi = borrow(phi, "phi")?;
        put(out, GfnTestFunction(phi.0.scale(eps)?))
    })
}

/// # Safety
/// `phi` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn gfn_test_function_eval(phi: *const GfnTestFunction, x: f64, out: *mut f64) -> GfnStatus {
    guard(|| write(out, borrow(phi, "phi")?.0.eval1(x)))
}

/// `int x^k phi(x) dx` by quadrature.
///
/// # Safety
/// `phi` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn gfn_test_function_moment(phi: *const GfnTestFunction, k: u32, out: *mut f64) -> GfnStatus {
    guard(|| write(out, borrow(phi, "phi")?.0.moment(MultiIndex::d1(k)).value))
}

/// # Safety
/// `phi` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gfn_test_function_free(phi: *mut GfnTestFunction) {
    free(phi)
}

/// Dirac delta at `position`.
///
/// # Safety
/// `out` must be a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn gfn_distribution_dirac(position: f64, out: *mut *mut GfnDistribution) -> GfnStatus {
    guard(|| put(out, GfnDistribution(Distribution::dirac(1, [position, 0.0])?)))
}

/// Heaviside step.
///
/// # Safety
/// `out` must be a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn gfn_distribution_heaviside(out: *mut *mut GfnDistribution) -> GfnStatus {
    guard(|| put(out, GfnDistribution(Distribution::heaviside())))
}

/// Principal value of `1/x`.
///
/// # Safety
/// `out` must be a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn gfn_distribution_principal_value(out: *mut *mut GfnDistribution) -> GfnStatus {
    guard(|| put(out, GfnDistribution(Distribution::principal_value())))
}

/// The smooth density `x^k`.
///
/// # Safety
/// `out` must be a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn gfn_distribution_power(k: u32, out: *mut *mut GfnDistribution) -> GfnStatus {
    guard(|| put(out, GfnDistribution(Distribution::density(1, SmoothFn::power(k))?)))
}

/// The smooth density `sin x`.
///
/// # Safety
/// `out` must be a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn gfn_distribution_sin(out: *mut *mut GfnDistribution) -> GfnStatus {
    guard(|| put(out, GfnDistribution(Distribution::density(1, SmoothFn::sin())?)))
}

/// Distributional derivative as a new handle.
///
/// # Safety
/// `u` must be a live handle and `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn gfn_distribution_derivative(u: *const GfnDistribution, out: *mut *mut GfnDistribution) -> GfnStatus {
    guard(|| {
        let u = borrow(u, "u")?;
        put(out, GfnDistribution(u.0.derivative(0)?))
    })
}

/// `<u, psi>`, split into real and imaginary parts.
///
/// # Safety
/// `u` and `psi` must be live handles; `re` and `im` valid.
#[no_mangle]
pub unsafe extern "C" fn gfn_distribution_pair(u: *const GfnDistribution, psi: *const GfnTestFunction, re: *mut f64, im: *mut f64) -> GfnStatus {
    guard(|| {
        let z = borrow(u, "u")?.0.pair(&borrow(psi, "psi")?.0)?;
        write(re, z.re)?;
        write(im, z.im)
    })
}

/// # Safety
/// `u` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gfn_distribution_free(u: *mut GfnDistribution) {
    free(u)
}

/// Embedding of `u` in the C-formalism.
///
/// # Safety
/// `u` must be a live handle and `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn gfn_embed_c(u: *const GfnDistribution, out: *mut *mut GfnRepresentative) -> GfnStatus {
    guard(|| put(out, GfnRepresentative(embed_c(&borrow(u, "u")?.0))))
}

/// Embedding of `u` in the J-formalism.
///
/// # Safety
/// `u` must be a live handle and `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn gfn_embed_j(u: *const GfnDistribution, out: *mut *mut GfnRepresentative) -> GfnStatus {
    guard(|| put(out, GfnRepresentative(embed_j(&borrow(u, "u")?.0))))
}

/// Pointwise difference `a - b`.
///
/// # Safety
/// `a` and `b` must be live handles and `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn gfn_representative_sub(
    a: *const GfnRepresentative,
    b: *const GfnRepresentative,
    out: *mut *mut GfnRepresentative,
) -> GfnStatus {
    guard(|| {
        let r = sub(&borrow(a, "a")?.0, &borrow(b, "b")?.0)?;
        put(out, GfnRepresentative(r))
    })
}

/// Pointwise product `a * b`.
///
/// # Safety
/// `a` and `b` must be live handles and `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn gfn_representative_mul(
    a: *const GfnRepresentative,
    b: *const GfnRepresentative,
    out: *mut *mut GfnRepresentative,
) -> GfnStatus {
    guard(|| {
        let r = mul(&borrow(a, "a")?.0, &borrow(b, "b")?.0)?;
        put(out, GfnRepresentative(r))
    })
}

/// `R(phi, x)`, split into real and imaginary parts.
///
/// # Safety
/// `r` and `phi` must be live handles; `re` and `im` valid.
#[no_mangle]
pub unsafe extern "C" fn gfn_representative_eval(
    r: *const GfnRepresentative,
    phi: *const GfnTestFunction,
    x: f64,
    re: *mut f64,
    im: *mut f64,
) -> GfnStatus {
    guard(|| {
        let z = borrow(r, "r")?.0.eval(&borrow(phi, "phi")?.0, &[x, 0.0])?;
        write(re, z.re)?;
        write(im, z.im)
    })
}

/// # Safety
/// `r` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gfn_representative_free(r: *mut GfnRepresentative) {
    free(r)
}

/// Looks up a catalog diffeomorphism (`id`, `scale2`, `shift1`, `sine`,
/// `cubic`, `affine:A:B`, `sine:A:B`, `cubic:C`).
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn gfn_diffeo_catalog(name: *const c_char, out: *mut *mut GfnDiffeo) -> GfnStatus {
    guard(|| {
        let name = text(name, "name")?;
        put(out, GfnDiffeo(Diffeomorphism::catalog(name)?))
    })
}

/// # Safety
/// `map` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn gfn_diffeo_forward(map: *const GfnDiffeo, x: f64, out: *mut f64) -> GfnStatus {
    guard(|| write(out, borrow(map, "map")?.0.forward(&[x, 0.0])[0]))
}

/// # Safety
/// `map` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn gfn_diffeo_inverse(map: *const GfnDiffeo, y: f64, out: *mut f64) -> GfnStatus {
    guard(|| write(out, borrow(map, "map")?.0.inverse(&[y, 0.0])[0]))
}

/// Pullback of a representative along `map`.
///
/// # Safety
/// `map` and `r` must be live handles and `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn gfn_pullback(map: *const GfnDiffeo, r: *const GfnRepresentative, out: *mut *mut GfnRepresentative) -> GfnStatus {
    guard(|| {
        let pulled = pullback_rep(&borrow(map, "map")?.0, &borrow(r, "r")?.0)?;
        put(out, GfnRepresentative(pulled))
    })
}

/// # Safety
/// `map` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gfn_diffeo_free(map: *mut GfnDiffeo) {
    free(map)
}

/// Runs a named scenario with default settings and the given seed, writing
/// its CSV files into `out_dir`. `passed` receives 1 if every scenario
/// assertion held, 0 otherwise.
///
/// # Safety
/// `scenario` and `out_dir` must be NUL-terminated strings; `passed` valid.
#[no_mangle]
pub unsafe extern "C" fn gfn_run_scenario(scenario: *const c_char, out_dir: *const c_char, seed: u64, passed: *mut i32) -> GfnStatus {
    guard(|| {
        let mut config = ScenarioConfig::new(text(scenario, "scenario")?.parse()?);
        config.out = PathBuf::from(text(out_dir, "out_dir")?);
        config.seed = seed;
        config.battery_seed = seed;
        let report = run_scenario(&config)?;
        emit(&report, &config.out)?;
        write(passed, i32::from(report.passed()))
    })
}
