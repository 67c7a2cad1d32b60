//! C interface to sharplab.
//!
//! Models are opaque `ShlbModel` handles owned by the caller and released
//! with [`shlb_model_free`]. Every fallible call returns a [`ShlbStatus`];
//! on failure the message is available from [`shlb_last_error`] on the same
//! thread until the next failing call. Panics are caught at the boundary.

use sharplab_core::autodiff::ParamVector;
use sharplab_core::curvature::directional_sharpness;
use sharplab_core::data::{BatchShape, CorpusSpec, EvalSet};
use sharplab_core::harness::{pareto_frontier, TradeoffPoint};
use sharplab_core::model::{ModelConfig, ModelState};
use sharplab_core::persistence::{load_state, save_checkpoint, Dtype};
use sharplab_core::probes::{gaussian_perturb, quantize, QuantBits};
use sharplab_core::schedule::{lr_at, ScheduleSpec};
use sharplab_core::Error;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShlbStatus {
    Ok = 0,
    Io = 1,
    Config = 2,
    NotFound = 3,
    Numeric = 4,
    Corrupt = 5,
    Version = 6,
    Structure = 7,
    Domain = 8,
    Input = 9,
    NullPointer = 10,
    Panic = 11,
}

/// Opaque model handle.
pub struct ShlbModel {
    state: ModelState,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> ShlbStatus {
    match e {
        Error::Io(_) | Error::Csv(_) => ShlbStatus::Io,
        Error::Config(_) | Error::Json(_) => ShlbStatus::Config,
        Error::NotFound(_) => ShlbStatus::NotFound,
        Error::Numeric { .. } => ShlbStatus::Numeric,
        Error::Corrupt(_) => ShlbStatus::Corrupt,
        Error::Version { .. } => ShlbStatus::Version,
        Error::Structure(_) => ShlbStatus::Structure,
        Error::Domain(_) => ShlbStatus::Domain,
        Error::Input(_) => ShlbStatus::Input,
    }
}

enum Fail {
    Core(Error),
    Null(&'static str),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

impl From<serde_json::Error> for Fail {
    fn from(e: serde_json::Error) -> Self {
        Fail::Core(Error::Json(e))
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> ShlbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ShlbStatus::Ok,
        Ok(Err(Fail::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            ShlbStatus::NullPointer
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            ShlbStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail::Core(Error::Input(format!("{what} is not UTF-8"))))
}

unsafe fn model_ref<'a>(m: *const ShlbModel) -> Result<&'a ShlbModel, Fail> {
    m.as_ref().ok_or(Fail::Null("model"))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

fn boxed(state: ModelState) -> *mut ShlbModel {
    Box::into_raw(Box::new(ShlbModel { state }))
}

fn eval_set(corpus_json: &str, batch_size: usize, seq_len: usize, max_batches: usize) -> Result<EvalSet, Fail> {
    let spec = CorpusSpec::from_json(corpus_json)?;
    Ok(EvalSet::new(&spec, BatchShape { batch_size, seq_len }, max_batches)?)
}

/// Message of the most recent failure on this thread, or NULL. The pointer
/// stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn shlb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn shlb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Fresh model from a JSON model config (`layers`, `heads`, `hidden_dim`,
/// `vocab_size`, `context_len`, `seed`).
///
/// # Safety
/// `config_json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn shlb_model_init(config_json: *const c_char, out: *mut *mut ShlbModel) -> ShlbStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let cfg: ModelConfig = serde_json::from_str(str_arg(config_json, "config_json")?)?;
        *out = boxed(ModelState::init(&cfg)?);
        Ok(())
    })
}

/// Load the weights of a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn shlb_model_load(path: *const c_char, out: *mut *mut ShlbModel) -> ShlbStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = boxed(load_state(Path::new(str_arg(path, "path")?))?);
        Ok(())
    })
}

/// Save weights without optimizer state, as f32 when `single_precision` is nonzero.
///
/// # Safety
/// `model` must come from this library and `path` be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn shlb_model_save(model: *const ShlbModel, path: *const c_char, single_precision: i32) -> ShlbStatus {
    guard(|| {
        let m = model_ref(model)?;
        let dtype = if single_precision != 0 { Dtype::F32 } else { Dtype::F64 };
        save_checkpoint(Path::new(str_arg(path, "path")?), &m.state, None, dtype)?;
        Ok(())
    })
}

/// Release a handle. NULL is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn shlb_model_free(model: *mut ShlbModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of scalar parameters, 0 for NULL.
///
/// # Safety
/// `model` must be NULL or come from this library.
#[no_mangle]
pub unsafe extern "C" fn shlb_model_param_count(model: *const ShlbModel) -> usize {
    model.as_ref().map_or(0, |m| m.state.params().len())
}

/// Copy the flat parameters into `buf`, which must hold exactly `len` values.
///
/// # Safety
/// `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn shlb_model_copy_params(model: *const ShlbModel, buf: *mut f64, len: usize) -> ShlbStatus {
    guard(|| {
        let m = model_ref(model)?;
        let p = m.state.params();
        if len != p.len() {
            return Err(Error::Structure(format!("buffer holds {len} values, model has {}", p.len())).into());
        }
        if buf.is_null() {
            return Err(Fail::Null("buf"));
        }
        std::slice::from_raw_parts_mut(buf, len).copy_from_slice(p);
        Ok(())
    })
}

/// Replace the flat parameters.
///
/// # Safety
/// `values` must point to `len` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn shlb_model_set_params(model: *mut ShlbModel, values: *const f64, len: usize) -> ShlbStatus {
    guard(|| {
        let m = model.as_mut().ok_or(Fail::Null("model"))?;
        let v = slice_arg(values, len, "values")?;
        if len != m.state.params().len() {
            return Err(Error::Structure(format!("got {len} values, model has {}", m.state.params().len())).into());
        }
        m.state = m.state.with_params(ParamVector::new(v.to_vec())?)?;
        Ok(())
    })
}

/// Mean next-token loss over the first `max_batches` batches of a corpus
/// given as JSON.
///
/// # Safety
/// Pointers must be valid; `corpus_json` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn shlb_model_eval_loss(
    model: *const ShlbModel,
    corpus_json: *const c_char,
    batch_size: usize,
    seq_len: usize,
    max_batches: usize,
    out_loss: *mut f64,
) -> ShlbStatus {
    guard(|| {
        let m = model_ref(model)?;
        let out = out_arg(out_loss, "out_loss")?;
        let eval = eval_set(str_arg(corpus_json, "corpus_json")?, batch_size, seq_len, max_batches)?;
        *out = eval.loss(&m.state)?;
        Ok(())
    })
}

/// Blockwise quantised copy; `bits` is 4 (NF4) or 8 (int8).
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn shlb_model_quantize(
    model: *const ShlbModel,
    bits: u32,
    block_size: usize,
    out: *mut *mut ShlbModel,
) -> ShlbStatus {
    guard(|| {
        let m = model_ref(model)?;
        let out = out_arg(out, "out")?;
        let bits = match bits {
            4 => QuantBits::Four,
            8 => QuantBits::Eight,
            b => return Err(Error::Config(format!("unsupported bit width {b}")).into()),
        };
        *out = boxed(quantize(&m.state, bits, block_size)?);
        Ok(())
    })
}

/// Copy with per-tensor Gaussian noise of relative Frobenius size `gamma`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn shlb_model_perturb(
    model: *const ShlbModel,
    gamma: f64,
    seed: u64,
    out: *mut *mut ShlbModel,
) -> ShlbStatus {
    guard(|| {
        let m = model_ref(model)?;
        let out = out_arg(out, "out")?;
        *out = boxed(gaussian_perturb(&m.state, gamma, seed)?);
        Ok(())
    })
}

/// Curvature of the loss along `direction`, averaged over eval batches.
///
/// # Safety
/// `direction` must point to `len` doubles; other pointers valid.
#[no_mangle]
pub unsafe extern "C" fn shlb_directional_sharpness(
    model: *const ShlbModel,
    direction: *const f64,
    len: usize,
    corpus_json: *const c_char,
    batch_size: usize,
    seq_len: usize,
    max_batches: usize,
    out_kappa: *mut f64,
) -> ShlbStatus {
    guard(|| {
        let m = model_ref(model)?;
        let out = out_arg(out_kappa, "out_kappa")?;
        let d = slice_arg(direction, len, "direction")?;
        let eval = eval_set(str_arg(corpus_json, "corpus_json")?, batch_size, seq_len, max_batches)?;
        let batches: Vec<_> = eval.batches().iter().collect();
        *out = directional_sharpness(&m.state.objective(), m.state.params(), d, &batches)?;
        Ok(())
    })
}

/// Learning rate at step `t` of a schedule given as JSON.
///
/// # Safety
/// Pointers must be valid; `schedule_json` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn shlb_lr_at(schedule_json: *const c_char, t: u64, out_lr: *mut f64) -> ShlbStatus {
    guard(|| {
        let out = out_arg(out_lr, "out_lr")?;
        let spec: ScheduleSpec = serde_json::from_str(str_arg(schedule_json, "schedule_json")?)?;
        *out = lr_at(&spec, t)?;
        Ok(())
    })
}

/// Mark the Pareto-optimal points of `(l_ft[i], l_pt[i])`, both minimised:
/// `out_mask[i]` is 1 on the frontier and 0 otherwise.
///
/// # Safety
/// All three arrays must hold `n` elements.
#[no_mangle]
pub unsafe extern "C" fn shlb_pareto_mask(l_ft: *const f64, l_pt: *const f64, n: usize, out_mask: *mut u8) -> ShlbStatus {
    guard(|| {
        let ft = slice_arg(l_ft, n, "l_ft")?;
        let pt = slice_arg(l_pt, n, "l_pt")?;
        if n > 0 && out_mask.is_null() {
            return Err(Fail::Null("out_mask"));
        }
        let points: Vec<TradeoffPoint> = (0..n)
            .map(|i| TradeoffPoint { ft_lr: 0.0, l_ft: ft[i], l_pt: pt[i], ft_run_id: i.to_string() })
            .collect();
        let front = pareto_frontier(&points, "ffi")?;
        let mask = std::slice::from_raw_parts_mut(out_mask, n);
        mask.fill(0);
        for p in front.points {
            mask[p.ft_run_id.parse::<usize>().expect("index id")] = 1;
        }
        Ok(())
    })
}
