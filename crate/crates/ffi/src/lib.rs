//! C ABI over the `tshap` estimators.
//!
//! Every function returns a [`TshapStatus`]. On failure a message is kept
//! per thread and can be copied out with [`tshap_last_error_message`].
//! Handles are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, c_int};
use std::panic::{catch_unwind, AssertUnwindSafe};

use nalgebra::DMatrix;
use tshap::gaussian::{target_shapley_oracle_with, LinearGaussianModel, OracleCost};
use tshap::knn::{estimate_target_shapley_knn, estimate_target_shapley_l1_knn, KnnConfig};
use tshap::shapley::shapley_exact;
use tshap::{CostTable, Error, FailureEvent, SampleSet};

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TshapStatus {
    TshapOk = 0,
    /// A required pointer was null.
    TshapErrNull = 1,
    /// Bad argument or configuration.
    TshapErrInvalid = 2,
    /// Degenerate failure probability or zero variance.
    TshapErrDegenerate = 3,
    /// Singular matrices, collinearity, quadrature failure, domain errors.
    TshapErrNumeric = 4,
    /// Malformed data.
    TshapErrData = 5,
    /// Internal panic.
    TshapErrPanic = 6,
}

/// Which oracle cost to aggregate.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TshapOracleCost {
    TshapCostClosedSobol = 0,
    TshapCostResidual = 1,
    TshapCostL1 = 2,
}

/// Input sample with an output column.
pub struct TshapSample {
    inner: SampleSet,
}

/// Linear Gaussian model with a failure threshold.
pub struct TshapLinearModel {
    inner: LinearGaussianModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_error(msg: &str) {
    LAST_ERROR.with(|e| {
        let mut e = e.borrow_mut();
        e.clear();
        e.extend_from_slice(msg.as_bytes());
    });
}

fn status_of(e: &Error) -> TshapStatus {
    match e {
        Error::DegenerateProbability { .. } | Error::ZeroVariance | Error::NonBinaryOutput { .. } => {
            TshapStatus::TshapErrDegenerate
        }
        Error::Singular(_)
        | Error::Collinear(_)
        | Error::QuadratureNonConvergence { .. }
        | Error::NonFiniteOutput { .. }
        | Error::Domain(_) => TshapStatus::TshapErrNumeric,
        Error::Data(_) => TshapStatus::TshapErrData,
        _ => TshapStatus::TshapErrInvalid,
    }
}

enum Fail {
    Null(&'static str),
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> TshapStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            TshapStatus::TshapOk
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(&format!("null pointer: {what}"));
            TshapStatus::TshapErrNull
        }
        Ok(Err(Fail::Core(e))) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            TshapStatus::TshapErrPanic
        }
    }
}

fn null_error(what: &'static str) -> Fail {
    Fail::Null(what)
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null_error(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &'static str) -> Result<&'a mut [f64], Fail> {
    if p.is_null() {
        return Err(null_error(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn copy_out(dst: &mut [f64], src: &[f64]) -> Result<(), Fail> {
    if dst.len() != src.len() {
        return Err(Fail::Core(Error::InvalidInput(format!("output buffer holds {}, need {}", dst.len(), src.len()))));
    }
    dst.copy_from_slice(src);
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tshap_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length without the NUL.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn tshap_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = e.len().min(len - 1);
            std::ptr::copy_nonoverlapping(e.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        e.len()
    })
}

/// Creates a sample from `n` rows of `d` inputs (row-major) and `n` outputs.
///
/// # Safety
/// `inputs` must hold `n * d` values, `output` `n` values, and `out` must be
/// a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tshap_sample_new(
    inputs: *const f64,
    n: usize,
    d: usize,
    output: *const f64,
    out: *mut *mut TshapSample,
) -> TshapStatus {
    guard(|| {
        if out.is_null() {
            return Err(null_error("out"));
        }
        *out = std::ptr::null_mut();
        let total = n.checked_mul(d).ok_or_else(|| Error::InvalidInput("n * d overflows".into()))?;
        let x = slice(inputs, total, "inputs")?;
        let y = slice(output, n, "output")?;
        let columns = (0..d).map(|j| (0..n).map(|i| x[i * d + j]).collect()).collect();
        let inner = SampleSet::new(columns, tshap::sample::default_names(d), Some(y.to_vec()))?;
        *out = Box::into_raw(Box::new(TshapSample { inner }));
        Ok(())
    })
}

/// # Safety
/// `sample` must be null or a handle from [`tshap_sample_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tshap_sample_free(sample: *mut TshapSample) {
    if !sample.is_null() {
        drop(Box::from_raw(sample));
    }
}

/// Number of rows and inputs of a sample.
///
/// # Safety
/// `sample` must be a live handle; `n` and `d` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn tshap_sample_shape(sample: *const TshapSample, n: *mut usize, d: *mut usize) -> TshapStatus {
    guard(|| {
        let s = sample.as_ref().ok_or_else(|| null_error("sample"))?;
        if n.is_null() || d.is_null() {
            return Err(null_error("n/d"));
        }
        *n = s.inner.len();
        *d = s.inner.dim();
        Ok(())
    })
}

/// Nearest-neighbour target Shapley effects for the event `output > threshold`.
///
/// `effects` receives `d` values; `p_hat` (optional) the failure frequency.
/// A non-zero `l1` selects the mean-absolute-deviation cost.
///
/// # Safety
/// `sample` must be a live handle and `effects` valid for `d` values.
#[no_mangle]
pub unsafe extern "C" fn tshap_knn_effects(
    sample: *const TshapSample,
    threshold: f64,
    n_s: usize,
    standardize: c_int,
    l1: c_int,
    seed: u64,
    effects: *mut f64,
    d: usize,
    p_hat: *mut f64,
) -> TshapStatus {
    guard(|| {
        let s = sample.as_ref().ok_or_else(|| null_error("sample"))?;
        let out = slice_mut(effects, d, "effects")?;
        let event = FailureEvent::new(threshold)?;
        let cfg = KnnConfig { n_s, standardize: standardize != 0, seed, ..KnnConfig::default() };
        let e = if l1 != 0 {
            estimate_target_shapley_l1_knn(&s.inner, &event, &cfg)?
        } else {
            estimate_target_shapley_knn(&s.inner, &event, &cfg)?
        };
        copy_out(out, &e.effects)?;
        if !p_hat.is_null() {
            *p_hat = e.config.get("failure_probability").and_then(|v| v.as_f64()).unwrap_or(f64::NAN);
        }
        Ok(())
    })
}

/// Creates `Y = beta0 + beta . X` with `X ~ N(mu, sigma)` (`sigma` row-major
/// `d x d`) and failure event `Y > threshold`.
///
/// # Safety
/// `beta` and `mu` must hold `d` values, `sigma` `d * d`, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn tshap_linear_model_new(
    beta0: f64,
    beta: *const f64,
    mu: *const f64,
    sigma: *const f64,
    d: usize,
    threshold: f64,
    out: *mut *mut TshapLinearModel,
) -> TshapStatus {
    guard(|| {
        if out.is_null() {
            return Err(null_error("out"));
        }
        *out = std::ptr::null_mut();
        let total = d.checked_mul(d).ok_or_else(|| Error::InvalidInput("d * d overflows".into()))?;
        let b = slice(beta, d, "beta")?.to_vec();
        let m = slice(mu, d, "mu")?.to_vec();
        let s = DMatrix::from_row_slice(d, d, slice(sigma, total, "sigma")?);
        let inner = LinearGaussianModel::new(beta0, b, m, s, FailureEvent::new(threshold)?)?;
        *out = Box::into_raw(Box::new(TshapLinearModel { inner }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from [`tshap_linear_model_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tshap_linear_model_free(model: *mut TshapLinearModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Exact failure probability of a linear model.
///
/// # Safety
/// `model` must be a live handle and `p` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tshap_linear_model_failure_probability(
    model: *const TshapLinearModel,
    p: *mut f64,
) -> TshapStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null_error("model"))?;
        if p.is_null() {
            return Err(null_error("p"));
        }
        *p = m.inner.failure_probability();
        Ok(())
    })
}

/// Reference target Shapley effects of a linear model.
///
/// # Safety
/// `model` must be a live handle and `effects` valid for `d` values.
#[no_mangle]
pub unsafe extern "C" fn tshap_oracle_effects(
    model: *const TshapLinearModel,
    cost: TshapOracleCost,
    effects: *mut f64,
    d: usize,
) -> TshapStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null_error("model"))?;
        let out = slice_mut(effects, d, "effects")?;
        let cost = match cost {
            TshapOracleCost::TshapCostClosedSobol => OracleCost::ClosedSobol,
            TshapOracleCost::TshapCostResidual => OracleCost::Residual,
            TshapOracleCost::TshapCostL1 => OracleCost::L1,
        };
        let e = target_shapley_oracle_with(&m.inner, cost)?;
        copy_out(out, &e.effects)
    })
}

/// Shapley effects of a cost table with `2^d` entries indexed by bitmask
/// (bit `j` set when input `j` is in the subset).
///
/// # Safety
/// `costs` must hold `2^d` values and `effects` `d` values.
#[no_mangle]
pub unsafe extern "C" fn tshap_shapley_exact(costs: *const f64, d: usize, effects: *mut f64) -> TshapStatus {
    guard(|| {
        if d == 0 || d > 62 {
            return Err(Error::DimensionOutOfRange(d).into());
        }
        let c = slice(costs, 1usize << d, "costs")?;
        let out = slice_mut(effects, d, "effects")?;
        let table = CostTable::from_values(d, c)?;
        copy_out(out, &shapley_exact(&table)?)
    })
}
