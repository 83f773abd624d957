//! C ABI over `pyramid-core`.
//!
//! Every entry point returns a [`PyramidStatus`]; results go through out
//! pointers. Objects are opaque handles created by `*_new` and released by
//! the matching `*_free`. The message of the last failure on the calling
//! thread is available from [`pyramid_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use pyramid_core::decomposition::{l2_exponent_report, per_i_exponent};
use pyramid_core::multiplier::{
    decay_bound, multiplier_hybrid, multiplier_mc, multiplier_reduced, FrequencyTriple,
};
use pyramid_core::operator::{apply_pyramid, TestFunction};
use pyramid_core::quadrature::QuadratureSpec;
use pyramid_core::region::{
    contains, exclusion_check, hull, p0, ExponentPoint, HullLabel, Rational,
};
use pyramid_core::special::{normalized_sphere_ft, SphereDim};
use pyramid_core::{Error, RngStream};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PyramidStatus {
    Ok = 0,
    InvalidArgument = 1,
    NonFinite = 2,
    DegenerateFrame = 3,
    BudgetExceeded = 4,
    NonFiniteSample = 5,
    Underpowered = 6,
    NullPointer = 7,
    Panic = 8,
}

/// Hull labels for [`pyramid_region_contains`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PyramidHull {
    Banach = 0,
    Thm1S = 1,
    Sec10S = 2,
    Sec10Sprime = 3,
}

/// A frequency triple `(ξ, δ, η)` in `ℝ^d × ℝ^d × ℝ^d`.
pub struct PyramidTriple(FrequencyTriple);

/// A test function on `ℝ^d`.
pub struct PyramidFunction(TestFunction);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> PyramidStatus {
    match e {
        Error::InvalidArgument(_) => PyramidStatus::InvalidArgument,
        Error::NonFinite(_) => PyramidStatus::NonFinite,
        Error::DegenerateFrame(_) => PyramidStatus::DegenerateFrame,
        Error::BudgetExceeded { .. } => PyramidStatus::BudgetExceeded,
        Error::NonFiniteSample { .. } => PyramidStatus::NonFiniteSample,
        Error::Underpowered { .. } => PyramidStatus::Underpowered,
    }
}

enum Failure {
    Core(Error),
    Null(&'static str),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

/// Runs `f`, converting errors and panics into a status and a message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PyramidStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PyramidStatus::Ok,
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            PyramidStatus::NullPointer
        }
        Err(_) => {
            set_error("internal panic".into());
            PyramidStatus::Panic
        }
    }
}

fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    // SAFETY: callers pass either null or a valid, writable pointer.
    unsafe { p.as_mut() }.ok_or(Failure::Null(what))
}

fn input<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    // SAFETY: callers pass either null or a pointer to a live object.
    unsafe { p.as_ref() }.ok_or(Failure::Null(what))
}

fn array<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    // SAFETY: callers guarantee `len` readable doubles at `p`.
    Ok(unsafe { slice::from_raw_parts(p, len) })
}

fn small_rational(r: &Rational, num: *mut i64, den: *mut i64) -> Result<(), Failure> {
    let n = i64::try_from(r.numer())
        .map_err(|_| Error::InvalidArgument("numerator overflows i64".into()))?;
    let d = i64::try_from(r.denom())
        .map_err(|_| Error::InvalidArgument("denominator overflows i64".into()))?;
    *out(num, "numerator")? = n;
    *out(den, "denominator")? = d;
    Ok(())
}

/// Message of the last failure on this thread; valid until the next call
/// that fails. Never null.
#[no_mangle]
pub extern "C" fn pyramid_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pyramid_version() -> *const c_char {
    const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

/// Creates a triple from three arrays of `d` doubles each; `d >= 4`.
///
/// # Safety
/// `xi`, `delta` and `eta` must each point to `d` readable doubles; `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn pyramid_triple_new(
    d: usize,
    xi: *const f64,
    delta: *const f64,
    eta: *const f64,
    out_triple: *mut *mut PyramidTriple,
) -> PyramidStatus {
    guard(|| {
        let t = FrequencyTriple::new(
            array(xi, d, "xi")?.to_vec(),
            array(delta, d, "delta")?.to_vec(),
            array(eta, d, "eta")?.to_vec(),
        )?;
        t.check_dim()?;
        *out(out_triple, "out_triple")? = Box::into_raw(Box::new(PyramidTriple(t)));
        Ok(())
    })
}

/// Releases a triple. Null is ignored.
///
/// # Safety
/// `triple` must come from [`pyramid_triple_new`] and not be used again.
#[no_mangle]
pub unsafe extern "C" fn pyramid_triple_free(triple: *mut PyramidTriple) {
    if !triple.is_null() {
        drop(Box::from_raw(triple));
    }
}

/// Monte Carlo multiplier over `n` Haar samples from stream `(seed, stream)`.
///
/// # Safety
/// `triple` must be a live handle; out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn pyramid_multiplier_mc(
    triple: *const PyramidTriple,
    n: usize,
    seed: u64,
    stream: u64,
    out_re: *mut f64,
    out_im: *mut f64,
    out_stderr: *mut f64,
) -> PyramidStatus {
    guard(|| {
        let t = input(triple, "triple")?;
        let e = multiplier_mc(&t.0, n, RngStream::new(seed, stream))?;
        *out(out_re, "out_re")? = e.value.re;
        *out(out_im, "out_im")? = e.value.im;
        *out(out_stderr, "out_stderr")? = e.stderr;
        Ok(())
    })
}

/// Deterministic reduced multiplier with `nodes` Gauss–Legendre nodes per
/// axis before oscillation scaling. The value is real.
///
/// # Safety
/// `triple` must be a live handle; `out_value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pyramid_multiplier_reduced(
    triple: *const PyramidTriple,
    nodes: usize,
    out_value: *mut f64,
) -> PyramidStatus {
    guard(|| {
        let t = input(triple, "triple")?;
        let spec = QuadratureSpec::default().with_nodes(nodes);
        spec.validate()?;
        *out(out_value, "out_value")? = multiplier_reduced(&t.0, &spec)?.value.re;
        Ok(())
    })
}

/// Hybrid multiplier: `n_rot` rotation samples around a quadrature inner
/// integral.
///
/// # Safety
/// `triple` must be a live handle; out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn pyramid_multiplier_hybrid(
    triple: *const PyramidTriple,
    n_rot: usize,
    nodes: usize,
    seed: u64,
    stream: u64,
    out_value: *mut f64,
    out_stderr: *mut f64,
) -> PyramidStatus {
    guard(|| {
        let t = input(triple, "triple")?;
        let spec = QuadratureSpec::default().with_nodes(nodes);
        spec.validate()?;
        let e = multiplier_hybrid(&t.0, n_rot, &spec, RngStream::new(seed, stream))?;
        *out(out_value, "out_value")? = e.value.re;
        *out(out_stderr, "out_stderr")? = e.stderr;
        Ok(())
    })
}

/// The decay envelope at `triple`.
///
/// # Safety
/// `triple` must be a live handle; `out_value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pyramid_decay_bound(
    triple: *const PyramidTriple,
    out_value: *mut f64,
) -> PyramidStatus {
    guard(|| {
        let t = input(triple, "triple")?;
        *out(out_value, "out_value")? = decay_bound(&t.0)?;
        Ok(())
    })
}

/// Fourier transform of the normalized surface measure of `𝕊^n` at radius
/// `a`.
///
/// # Safety
/// `out_value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pyramid_sphere_ft(n: u32, a: f64, out_value: *mut f64) -> PyramidStatus {
    guard(|| {
        *out(out_value, "out_value")? = normalized_sphere_ft(SphereDim::new(n)?, a)?;
        Ok(())
    })
}

/// `p₀(d)` as a reduced fraction.
///
/// # Safety
/// Out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn pyramid_p0(d: u32, out_num: *mut i64, out_den: *mut i64) -> PyramidStatus {
    guard(|| small_rational(&p0(d)?, out_num, out_den))
}

fn label_of(h: PyramidHull) -> HullLabel {
    match h {
        PyramidHull::Banach => HullLabel::Banach,
        PyramidHull::Thm1S => HullLabel::Thm1S,
        PyramidHull::Sec10S => HullLabel::Sec10S,
        PyramidHull::Sec10Sprime => HullLabel::Sec10Sprime,
    }
}

/// Exact membership of `(num[k]/den[k])ₖ` in the closed hull `label` at
/// dimension `d`. Writes 1 for inside, 0 for outside.
///
/// # Safety
/// `num` and `den` must point to three readable values; `out_inside` must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn pyramid_region_contains(
    label: PyramidHull,
    d: u32,
    num: *const i64,
    den: *const i64,
    out_inside: *mut i32,
) -> PyramidStatus {
    guard(|| {
        if num.is_null() || den.is_null() {
            return Err(Failure::Null("num/den"));
        }
        let n = slice::from_raw_parts(num, 3);
        let m = slice::from_raw_parts(den, 3);
        let point = ExponentPoint::from_ints([(n[0], m[0]), (n[1], m[1]), (n[2], m[2])])?;
        let h = hull(label_of(label), d)?;
        *out(out_inside, "out_inside")? = i32::from(contains(&h, &point).is_inside());
        Ok(())
    })
}

/// Witness `5d/(2d−8)` of the centre's exclusion from `sec10_S`, checked
/// against the exact feasibility program.
///
/// # Safety
/// Out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn pyramid_exclusion_witness(
    d: u32,
    out_num: *mut i64,
    out_den: *mut i64,
) -> PyramidStatus {
    guard(|| {
        let r = exclusion_check(d)?;
        if !r.agree {
            return Err(
                Error::InvalidArgument("witness and feasibility program disagree".into()).into(),
            );
        }
        small_rational(&r.witness, out_num, out_den)
    })
}

/// Per-level L² exponent at dimension `d` as a reduced fraction.
///
/// # Safety
/// Out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn pyramid_l2_exponent(
    d: u32,
    out_num: *mut i64,
    out_den: *mut i64,
) -> PyramidStatus {
    guard(|| {
        if d < 4 {
            return Err(Error::InvalidArgument("d must be at least 4".into()).into());
        }
        small_rational(&per_i_exponent(d), out_num, out_den)
    })
}

/// Least dimension with a summable per-level L² exponent.
///
/// # Safety
/// `out_dim` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pyramid_l2_threshold(out_dim: *mut u32) -> PyramidStatus {
    guard(|| {
        *out(out_dim, "out_dim")? = l2_exponent_report(4)?.threshold;
        Ok(())
    })
}

/// `exp(−π|x−c|²/w²)` with center `c` of length `d`.
///
/// # Safety
/// `center` must point to `d` readable doubles; `out_fn` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pyramid_function_gaussian(
    d: usize,
    center: *const f64,
    width: f64,
    out_fn: *mut *mut PyramidFunction,
) -> PyramidStatus {
    guard(|| {
        let f = TestFunction::gaussian(array(center, d, "center")?.to_vec(), width)?;
        *out(out_fn, "out_fn")? = Box::into_raw(Box::new(PyramidFunction(f)));
        Ok(())
    })
}

/// Indicator of the closed ball of `radius` about `center`.
///
/// # Safety
/// `center` must point to `d` readable doubles; `out_fn` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pyramid_function_ball(
    d: usize,
    center: *const f64,
    radius: f64,
    out_fn: *mut *mut PyramidFunction,
) -> PyramidStatus {
    guard(|| {
        let f = TestFunction::ball_indicator(array(center, d, "center")?.to_vec(), radius)?;
        *out(out_fn, "out_fn")? = Box::into_raw(Box::new(PyramidFunction(f)));
        Ok(())
    })
}

/// Releases a test function. Null is ignored.
///
/// # Safety
/// `f` must come from a `pyramid_function_*` constructor and not be used
/// again.
#[no_mangle]
pub unsafe extern "C" fn pyramid_function_free(f: *mut PyramidFunction) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// `T(f,g,h)(x)` by Monte Carlo over `n` manifold samples.
///
/// # Safety
/// Handles must be live; `x` must point to `d` readable doubles where `d`
/// is the functions' dimension; out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn pyramid_apply(
    f: *const PyramidFunction,
    g: *const PyramidFunction,
    h: *const PyramidFunction,
    x: *const f64,
    n: usize,
    seed: u64,
    stream: u64,
    out_value: *mut f64,
    out_stderr: *mut f64,
) -> PyramidStatus {
    guard(|| {
        let (f, g, h) = (input(f, "f")?, input(g, "g")?, input(h, "h")?);
        let d = f.0.dim;
        if g.0.dim != d || h.0.dim != d {
            return Err(
                Error::InvalidArgument("test functions must share a dimension".into()).into(),
            );
        }
        let e = apply_pyramid(
            &f.0,
            &g.0,
            &h.0,
            array(x, d, "x")?,
            n,
            RngStream::new(seed, stream),
        )?;
        *out(out_value, "out_value")? = e.value;
        *out(out_stderr, "out_stderr")? = e.stderr;
        Ok(())
    })
}
