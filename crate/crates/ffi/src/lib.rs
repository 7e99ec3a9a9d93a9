//! C ABI over the `cfr` crate.
//!
//! Every function returns a [`CfrStatus`]; on failure a message is kept per
//! thread and can be read with [`cfr_last_error`]. Objects are opaque
//! handles that the caller releases with the matching `_free` function.
//! Strings returned through out-pointers are released with [`cfr_string_free`].
//! The generated header lives at `include/cfr.h`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use cfr::data::{load_dataset, predict};
use cfr::model::RandomInit;
use cfr::{CfrError, ContinuedFraction, Dataset, EvalOutcome, MaConfig, NmConfig};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CfrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Parse = 3,
    Io = 4,
    Pole = 5,
    Degenerate = 6,
    Panic = 7,
}

/// A fitted or loaded continued fraction model.
pub struct CfrModel(ContinuedFraction);

/// A table of feature rows and targets.
pub struct CfrDataset(Dataset);

/// Search settings. Obtain defaults from [`cfr_config_default`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CfrConfig {
    pub delta: f64,
    pub depth: usize,
    pub generations: usize,
    pub mutation_rate: f64,
    pub nm_instances: usize,
    pub nm_iterations: usize,
    pub nm_stagnation: usize,
    pub subsample: f64,
    pub reset_stagnation: usize,
    pub seed: u64,
}

impl From<&CfrConfig> for MaConfig {
    fn from(c: &CfrConfig) -> Self {
        MaConfig {
            delta: c.delta,
            depth: c.depth,
            generations: c.generations,
            mutation_rate: c.mutation_rate,
            nm_instances: c.nm_instances,
            nm: NmConfig { max_iterations: c.nm_iterations, stagnation_limit: c.nm_stagnation, ..NmConfig::default() },
            subsample_fraction: c.subsample,
            reset_stagnation: c.reset_stagnation,
            init: RandomInit::default(),
            seed: c.seed,
            ..MaConfig::default()
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(CfrStatus, String);

impl From<CfrError> for Failure {
    fn from(e: CfrError) -> Self {
        let status = match &e {
            CfrError::InvalidInput(_) | CfrError::DimensionMismatch { .. } => CfrStatus::InvalidInput,
            CfrError::Parse { .. } => CfrStatus::Parse,
            CfrError::Load { .. } | CfrError::Io(_) => CfrStatus::Io,
            CfrError::Pole(_) => CfrStatus::Pole,
            CfrError::DegenerateTarget => CfrStatus::Degenerate,
        };
        Failure(status, e.to_string())
    }
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CfrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            CfrStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            CfrStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(CfrStatus::NullPointer, format!("{what} is null"))
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure(CfrStatus::InvalidInput, format!("{what} is not UTF-8")))
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).unwrap_or_default().into_raw()
}

/// Message describing the last failed call on this thread, or NULL after a
/// successful call. Valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn cfr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cfr_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[no_mangle]
pub extern "C" fn cfr_config_default() -> CfrConfig {
    let d = MaConfig::default();
    CfrConfig {
        delta: d.delta,
        depth: d.depth,
        generations: d.generations,
        mutation_rate: d.mutation_rate,
        nm_instances: d.nm_instances,
        nm_iterations: d.nm.max_iterations,
        nm_stagnation: d.nm.stagnation_limit,
        subsample: d.subsample_fraction,
        reset_stagnation: d.reset_stagnation,
        seed: d.seed,
    }
}

/// Parses a model document.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cfr_model_from_text(text: *const c_char, out: *mut *mut CfrModel) -> CfrStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let cf = ContinuedFraction::from_text(str_arg(text, "text")?)?;
        *out = Box::into_raw(Box::new(CfrModel(cf)));
        Ok(())
    })
}

/// Serialises a model document. Free the result with [`cfr_string_free`].
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cfr_model_to_text(model: *const CfrModel, out: *mut *mut c_char) -> CfrStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = into_c_string(borrow(model, "model")?.0.to_text());
        Ok(())
    })
}

/// # Safety
/// `model` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cfr_model_free(model: *mut CfrModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of input variables, or 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cfr_model_n_vars(model: *const CfrModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.n_vars())
}

/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cfr_model_depth(model: *const CfrModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.depth())
}

/// Evaluates the model at `x` (length `n`). Returns `CFR_STATUS_POLE` when
/// the evaluation hits a pole or overflows.
///
/// # Safety
/// `x` must point to `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cfr_model_evaluate(model: *const CfrModel, x: *const f64, n: usize, out: *mut f64) -> CfrStatus {
    guard(|| {
        let m = &borrow(model, "model")?.0;
        let out = out_ptr(out, "out")?;
        if x.is_null() && n > 0 {
            return Err(null("x"));
        }
        let xs = if n == 0 { &[][..] } else { std::slice::from_raw_parts(x, n) };
        match m.evaluate(xs)? {
            EvalOutcome::Finite(v) => {
                *out = v;
                Ok(())
            }
            EvalOutcome::NonFinite => Err(Failure(CfrStatus::Pole, "evaluation is not finite".into())),
        }
    })
}

/// Formula text, plain or LaTeX, using default variable names.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cfr_model_render(model: *const CfrModel, latex: bool, out: *mut *mut c_char) -> CfrStatus {
    guard(|| {
        let m = &borrow(model, "model")?.0;
        let out = out_ptr(out, "out")?;
        *out = into_c_string(if latex { m.render_latex(None) } else { m.render(None) });
        Ok(())
    })
}

/// Loads a delimiter-separated file (optionally gzip-compressed) with a header row.
///
/// # Safety
/// `path` and `target_column` must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cfr_dataset_load(
    path: *const c_char,
    target_column: *const c_char,
    out: *mut *mut CfrDataset,
) -> CfrStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let ds = load_dataset(Path::new(str_arg(path, "path")?), str_arg(target_column, "target_column")?, None)?;
        *out = Box::into_raw(Box::new(CfrDataset(ds)));
        Ok(())
    })
}

/// Copies `n_rows x n_cols` row-major features and `n_rows` targets.
/// Columns are named `x0`, `x1`, ...
///
/// # Safety
/// `features` must hold `n_rows * n_cols` doubles, `targets` `n_rows`.
#[no_mangle]
pub unsafe extern "C" fn cfr_dataset_from_arrays(
    features: *const f64,
    n_rows: usize,
    n_cols: usize,
    targets: *const f64,
    out: *mut *mut CfrDataset,
) -> CfrStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let len = n_rows
            .checked_mul(n_cols)
            .ok_or_else(|| Failure(CfrStatus::InvalidInput, "dataset size overflows".into()))?;
        if (features.is_null() && len > 0) || targets.is_null() {
            return Err(null("features or targets"));
        }
        let f = if len == 0 { Vec::new() } else { std::slice::from_raw_parts(features, len).to_vec() };
        let t = std::slice::from_raw_parts(targets, n_rows).to_vec();
        let names = (0..n_cols).map(|j| format!("x{j}")).collect();
        *out = Box::into_raw(Box::new(CfrDataset(Dataset::from_flat(f, t, names, "arrays")?)));
        Ok(())
    })
}

/// # Safety
/// `ds` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cfr_dataset_free(ds: *mut CfrDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// # Safety
/// `ds` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cfr_dataset_n_rows(ds: *const CfrDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.n_rows())
}

/// # Safety
/// `ds` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cfr_dataset_n_cols(ds: *const CfrDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.n_cols())
}

/// Runs the memetic search on `train`. `test` may be NULL, in which case
/// `train` is used for the final metrics too. `config` may be NULL for defaults.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cfr_fit(
    train: *const CfrDataset,
    test: *const CfrDataset,
    config: *const CfrConfig,
    out: *mut *mut CfrModel,
) -> CfrStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let train = &borrow(train, "train")?.0;
        let test = test.as_ref().map_or(train, |t| &t.0);
        let cfg = config.as_ref().map_or_else(MaConfig::default, MaConfig::from);
        let res = cfr::memetic::run(train, test, &cfg)?;
        *out = Box::into_raw(Box::new(CfrModel(res.best)));
        Ok(())
    })
}

/// Mean squared error of the model on `ds`; infinite if any prediction is not finite.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cfr_model_mse(model: *const CfrModel, ds: *const CfrDataset, out: *mut f64) -> CfrStatus {
    guard(|| {
        let (m, d) = model_and_data(model, ds)?;
        let out = out_ptr(out, "out")?;
        *out = cfr::mse(d.targets(), &predict(m, d))?;
        Ok(())
    })
}

/// MSE divided by the sample variance of the targets.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cfr_model_nmse(model: *const CfrModel, ds: *const CfrDataset, out: *mut f64) -> CfrStatus {
    guard(|| {
        let (m, d) = model_and_data(model, ds)?;
        let out = out_ptr(out, "out")?;
        *out = cfr::nmse(d.targets(), &predict(m, d))?;
        Ok(())
    })
}

unsafe fn model_and_data<'a>(
    model: *const CfrModel,
    ds: *const CfrDataset,
) -> Result<(&'a ContinuedFraction, &'a Dataset), Failure> {
    let m = &borrow(model, "model")?.0;
    let d = &borrow(ds, "dataset")?.0;
    if m.n_vars() != d.n_cols() {
        return Err(CfrError::DimensionMismatch { expected: m.n_vars(), got: d.n_cols() }.into());
    }
    Ok((m, d))
}
