//! C interface to attnvar.
//!
//! Every fallible function returns an [`AttnvarStatus`]; on failure the
//! message is available from [`attnvar_last_error`] on the same thread.
//! Models are opaque handles released with [`attnvar_model_free`]; strings
//! returned to the caller are released with [`attnvar_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use attnvar::data::ExtendedExample;
use attnvar::decoding::DecodeConfig;
use attnvar::harness::decode_one;
use attnvar::losses::{mixed_loss, DecodeTrace};
use attnvar::metrics::{duplication_rate, rouge_l, rouge_n};
use attnvar::model::{load_checkpoint, Checkpoint};
use attnvar::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttnvarStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Checkpoint = 4,
    InvalidInput = 5,
    DegenerateGate = 6,
    Panic = 7,
}

/// Loaded checkpoint. Opaque to C.
pub struct AttnvarModel {
    checkpoint: Checkpoint,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AttnvarRouge {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AttnvarLoss {
    pub mle: f64,
    pub local: f64,
    pub global: f64,
    pub total: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> AttnvarStatus {
    match e {
        Error::Io(_) => AttnvarStatus::Io,
        Error::Checkpoint(_) | Error::VocabMismatch(_) => AttnvarStatus::Checkpoint,
        Error::DegenerateGate { .. } => AttnvarStatus::DegenerateGate,
        _ => AttnvarStatus::InvalidInput,
    }
}

struct Failure(AttnvarStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> AttnvarStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            AttnvarStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            AttnvarStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(AttnvarStatus::NullArgument, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(AttnvarStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn tokens_arg(p: *const c_char, what: &str) -> Result<Vec<String>, Failure> {
    Ok(str_arg(p, what)?.split_whitespace().map(str::to_string).collect())
}

/// Message of the last failed call on this thread, or an empty string.
/// The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn attnvar_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Loads a checkpoint file into a new model handle.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn attnvar_model_load(path: *const c_char, out: *mut *mut AttnvarModel) -> AttnvarStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        let checkpoint = load_checkpoint(Path::new(path))?;
        *out = Box::into_raw(Box::new(AttnvarModel { checkpoint }));
        Ok(())
    })
}

/// Releases a model handle. Null is ignored.
///
/// # Safety
/// `model` must come from [`attnvar_model_load`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn attnvar_model_free(model: *mut AttnvarModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Vocabulary size of the model, reserved ids included.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn attnvar_model_vocab_size(model: *const AttnvarModel, out: *mut usize) -> AttnvarStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = m.checkpoint.vocab.len();
        Ok(())
    })
}

/// Beam-decodes a space-separated source. The summary is written to `*out`
/// as a new string that must be released with [`attnvar_string_free`].
///
/// # Safety
/// `model` must be a live handle, `source` a NUL-terminated string and
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn attnvar_model_decode(
    model: *const AttnvarModel,
    source: *const c_char,
    beam_size: usize,
    max_len: usize,
    block_trigrams: bool,
    out: *mut *mut c_char,
) -> AttnvarStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let tokens = tokens_arg(source, "source")?;
        let ck = &m.checkpoint;
        let example = ExtendedExample::new(tokens, Vec::new(), &ck.vocab);
        let cfg = DecodeConfig::new(beam_size, max_len, block_trigrams);
        let decoded = decode_one(&ck.params, &ck.vocab, &example, &cfg)?;
        let text = CString::new(decoded.words.join(" "))
            .map_err(|_| Failure(AttnvarStatus::InvalidInput, "decoded text contains NUL".into()))?;
        *out = text.into_raw();
        Ok(())
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn attnvar_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// ROUGE between two space-separated token strings; `n = 0` selects
/// ROUGE-L, otherwise ROUGE-N.
///
/// # Safety
/// Both strings must be NUL-terminated and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn attnvar_rouge(
    candidate: *const c_char,
    reference: *const c_char,
    n: usize,
    out: *mut AttnvarRouge,
) -> AttnvarStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let c = tokens_arg(candidate, "candidate")?;
        let r = tokens_arg(reference, "reference")?;
        let s = if n == 0 { rouge_l(&c, &r) } else { rouge_n(&c, &r, n) };
        *out = AttnvarRouge {
            precision: s.precision,
            recall: s.recall,
            f1: s.f1,
        };
        Ok(())
    })
}

/// Fraction of repeated n-gram occurrences in a space-separated string.
///
/// # Safety
/// `tokens` must be NUL-terminated and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn attnvar_duplication_rate(tokens: *const c_char, n: usize, out: *mut f64) -> AttnvarStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        if n == 0 {
            return Err(Failure(AttnvarStatus::InvalidInput, "n must be positive".into()));
        }
        *out = duplication_rate(&tokens_arg(tokens, "tokens")?, n);
        Ok(())
    })
}

/// Mixed training loss from a row-major `steps x source_len` matrix of
/// refined attention and the `steps` gold-token probabilities.
///
/// # Safety
/// `refined` must point to `steps * source_len` values, `gold_probs` to
/// `steps` values, and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn attnvar_mixed_loss(
    refined: *const f64,
    steps: usize,
    source_len: usize,
    gold_probs: *const f64,
    lambda_local: f64,
    lambda_global: f64,
    epsilon: f64,
    out: *mut AttnvarLoss,
) -> AttnvarStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        if refined.is_null() {
            return Err(null("refined"));
        }
        if gold_probs.is_null() {
            return Err(null("gold_probs"));
        }
        let len = steps
            .checked_mul(source_len)
            .ok_or_else(|| Failure(AttnvarStatus::InvalidInput, "matrix size overflows".into()))?;
        let values = std::slice::from_raw_parts(refined, len);
        let rows: Vec<Vec<f64>> = values.chunks(source_len.max(1)).map(<[f64]>::to_vec).collect();
        let probs = std::slice::from_raw_parts(gold_probs, steps);
        let trace = DecodeTrace::with_gold_probs(rows, probs)?;
        let b = mixed_loss(&trace, lambda_local, lambda_global, epsilon)?;
        *out = AttnvarLoss {
            mle: b.mle,
            local: b.local,
            global: b.global,
            total: b.total,
        };
        Ok(())
    })
}
