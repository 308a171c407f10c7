//! C interface to trained checkpoints: load a model, pull features for a
//! text, compute category distributions and count parameters.
//!
//! Every function returns a [`LutlmStatus`]. On failure a description is kept
//! per thread and can be read with [`lutlm_last_error`]. Panics never cross
//! the boundary; they come back as [`LutlmStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use lutlm::encoder::count_parameters;
use lutlm::latent::latent_distribution;
use lutlm::model::{extract_features, text_example};
use lutlm::preprocess::MAX_LEN;
use lutlm::trainer::{load_checkpoint, Checkpoint, TrainConfig};
use lutlm::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LutlmStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Format = 4,
    InvalidInput = 5,
    Numeric = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Opaque handle to a loaded checkpoint.
pub struct LutlmModel {
    checkpoint: Checkpoint,
    checksum_ok: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let clean = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = clean);
}

fn fail(status: LutlmStatus, message: &str) -> LutlmStatus {
    set_error(message);
    status
}

fn status_of(e: &Error) -> LutlmStatus {
    match e {
        Error::Io { .. } => LutlmStatus::Io,
        Error::Checkpoint(lutlm::trainer::CheckpointError::Io { .. }) => LutlmStatus::Io,
        Error::Checkpoint(_) | Error::Preprocess(_) => LutlmStatus::Format,
        Error::Numeric(_) | Error::Diverged { .. } => LutlmStatus::Numeric,
        _ => LutlmStatus::InvalidInput,
    }
}

fn guarded(f: impl FnOnce() -> Result<(), (LutlmStatus, String)>) -> LutlmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LutlmStatus::Ok,
        Ok(Err((status, message))) => fail(status, &message),
        Err(_) => fail(LutlmStatus::Panic, "internal panic"),
    }
}

fn lib_error(e: impl Into<Error>) -> (LutlmStatus, String) {
    let e = e.into();
    (status_of(&e), e.to_string())
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (LutlmStatus, String)> {
    if p.is_null() {
        return Err((LutlmStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (LutlmStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn model_arg<'a>(p: *const LutlmModel) -> Result<&'a LutlmModel, (LutlmStatus, String)> {
    p.as_ref()
        .ok_or_else(|| (LutlmStatus::NullArgument, "model is null".to_string()))
}

unsafe fn out_slice<'a>(
    p: *mut f32,
    len: usize,
    needed: usize,
    what: &str,
) -> Result<&'a mut [f32], (LutlmStatus, String)> {
    if len < needed {
        return Err((
            LutlmStatus::BufferTooSmall,
            format!("{what} needs {needed} values, buffer holds {len}"),
        ));
    }
    if needed == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err((LutlmStatus::NullArgument, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts_mut(p, needed))
}

/// Message describing the last failure on this thread; empty if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn lutlm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lutlm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a checkpoint. On success `*out` owns a handle to release with
/// [`lutlm_model_free`]. A checksum mismatch still loads; see
/// [`lutlm_model_checksum_ok`].
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lutlm_model_open(
    path: *const c_char,
    out: *mut *mut LutlmModel,
) -> LutlmStatus {
    guarded(|| {
        if out.is_null() {
            return Err((LutlmStatus::NullArgument, "out is null".into()));
        }
        *out = std::ptr::null_mut();
        let path = str_arg(path, "path")?;
        let loaded = load_checkpoint(Path::new(path)).map_err(lib_error)?;
        let model = Box::new(LutlmModel {
            checkpoint: loaded.checkpoint,
            checksum_ok: loaded.checksum_ok,
        });
        *out = Box::into_raw(model);
        Ok(())
    })
}

/// Releases a handle from [`lutlm_model_open`]. Null is ignored.
///
/// # Safety
/// `model` must come from `lutlm_model_open` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lutlm_model_free(model: *mut LutlmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Writes `(vocabulary size, hidden width, latent categories)`; the last is
/// 0 for variants without latent categories. Any output may be null.
///
/// # Safety
/// `model` must be a live handle; non-null outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn lutlm_model_dims(
    model: *const LutlmModel,
    vocab: *mut usize,
    hidden: *mut usize,
    latent: *mut usize,
) -> LutlmStatus {
    guarded(|| {
        let m = model_arg(model)?;
        let c = &m.checkpoint.config;
        for (p, v) in [(vocab, c.vocab), (hidden, c.hidden), (latent, c.latent())] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// 1 if the stored whole-file checksum matched on load, else 0.
///
/// # Safety
/// `model` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn lutlm_model_checksum_ok(model: *const LutlmModel) -> i32 {
    model.as_ref().map_or(0, |m| i32::from(m.checksum_ok))
}

/// Category distribution (`latent` values) and `[CLS]` vector (`hidden`
/// values) for a text. For variants without latent categories pass a
/// distribution length of 0; the pointer may then be null.
///
/// # Safety
/// `text` must be NUL-terminated; buffers must hold at least the given
/// number of floats.
#[no_mangle]
pub unsafe extern "C" fn lutlm_model_features(
    model: *const LutlmModel,
    text: *const c_char,
    distribution: *mut f32,
    distribution_len: usize,
    classification: *mut f32,
    classification_len: usize,
) -> LutlmStatus {
    guarded(|| {
        let m = model_arg(model)?;
        let text = str_arg(text, "text")?;
        let ck = &m.checkpoint;
        let dist_out = out_slice(distribution, distribution_len, ck.config.latent(), "distribution")?;
        let cls_out = out_slice(classification, classification_len, ck.config.hidden, "classification")?;
        let max_len = MAX_LEN.min(ck.config.max_positions);
        let ex = text_example(text, &ck.vocab, max_len)
            .ok_or_else(|| (LutlmStatus::InvalidInput, "text has no tokens".to_string()))?;
        let f = extract_features(&ck.params, &ck.config, &ex).map_err(lib_error)?;
        cls_out.copy_from_slice(&f.classification);
        if let Some(p) = f.distribution {
            dist_out.copy_from_slice(&p);
        }
        Ok(())
    })
}

/// Category distribution for a multiset of token ids.
///
/// # Safety
/// `ids` must point to `count` values (or be null with `count` 0); `out`
/// must hold `out_len` floats.
#[no_mangle]
pub unsafe extern "C" fn lutlm_latent_distribution(
    model: *const LutlmModel,
    ids: *const u32,
    count: usize,
    out: *mut f32,
    out_len: usize,
) -> LutlmStatus {
    guarded(|| {
        let m = model_arg(model)?;
        let l = m.checkpoint.config.latent();
        if l == 0 {
            return Err((LutlmStatus::InvalidInput, "model has no latent categories".into()));
        }
        let ids: &[u32] = if count == 0 {
            &[]
        } else if ids.is_null() {
            return Err((LutlmStatus::NullArgument, "ids is null".into()));
        } else {
            std::slice::from_raw_parts(ids, count)
        };
        let dest = out_slice(out, out_len, l, "out")?;
        let b = m
            .checkpoint
            .params
            .require("latent.bias_matrix")
            .map_err(lib_error)?;
        let p = latent_distribution(b, ids).map_err(lib_error)?;
        dest.copy_from_slice(&p);
        Ok(())
    })
}

/// Parameter counts for a configuration in the `key = value` format used by
/// `lutlm train`; `vocab` must be set. `reported` excludes the pretraining heads.
///
/// # Safety
/// `config_text` must be NUL-terminated; outputs must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn lutlm_count_parameters(
    config_text: *const c_char,
    reported: *mut u64,
    total: *mut u64,
) -> LutlmStatus {
    guarded(|| {
        let text = str_arg(config_text, "config_text")?;
        let cfg = TrainConfig::parse(text).map_err(lib_error)?.model;
        if cfg.vocab == 0 {
            return Err((LutlmStatus::InvalidInput, "vocab must be given".into()));
        }
        cfg.validate().map_err(lib_error)?;
        let c = count_parameters(&cfg);
        if !reported.is_null() {
            *reported = c.reported as u64;
        }
        if !total.is_null() {
            *total = c.total as u64;
        }
        Ok(())
    })
}
