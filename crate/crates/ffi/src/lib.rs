//! C ABI over a trained `hlan` checkpoint: load, predict, explain.
//!
//! Every function returns an [`HlanStatus`]; on failure the message is
//! available from [`hlan_last_error`] on the same thread. Strings handed
//! out by the library must be released with [`hlan_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::ptr;

use hlan::autodiff::TensorError;
use hlan::corpus::{encode, EncodedDocument, RawDocument, Vocabulary};
use hlan::explainer::{explain, HighlightOptions};
use hlan::model::{load_checkpoint, predict_proba, Checkpoint};
use hlan::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HlanStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Io = 4,
    Format = 5,
    Mismatch = 6,
    Numeric = 7,
    BufferSize = 8,
    Panic = 9,
}

/// A loaded checkpoint with its vocabulary. Opaque to C callers.
pub struct HlanModel {
    ckpt: Checkpoint,
    vocab: Vocabulary,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn status_of(err: &Error) -> HlanStatus {
    match err {
        Error::Io { .. } => HlanStatus::Io,
        Error::Format { .. } => HlanStatus::Format,
        Error::Mismatch(_) | Error::UnknownLabels(_) | Error::Dimension { .. } => HlanStatus::Mismatch,
        Error::Tensor(TensorError::NonFinite(_)) | Error::NonFiniteGradient(_) | Error::Divergence { .. } => {
            HlanStatus::Numeric
        }
        _ => HlanStatus::InvalidArgument,
    }
}

struct Failure(HlanStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> HlanStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            HlanStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            HlanStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(HlanStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(HlanStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn model_arg<'a>(p: *const HlanModel) -> Result<&'a HlanModel, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure(HlanStatus::NullPointer, "model is null".into()))
}

fn out_string(s: String, out: *mut *mut c_char) -> Result<(), Failure> {
    let c = CString::new(s).map_err(|_| Failure(HlanStatus::Format, "output contains a NUL byte".into()))?;
    unsafe { *out = c.into_raw() };
    Ok(())
}

impl HlanModel {
    fn load(checkpoint: &Path, vocab: Option<&Path>) -> Result<Self, Error> {
        let ckpt = load_checkpoint(checkpoint)?;
        let vocab_path: PathBuf = match vocab {
            Some(p) => p.to_path_buf(),
            None => checkpoint.parent().unwrap_or(Path::new(".")).join("vocab.tsv"),
        };
        let text = std::fs::read_to_string(&vocab_path).map_err(|e| Error::Io {
            path: vocab_path.clone(),
            source: e,
        })?;
        let vocab = Vocabulary::from_tsv(&text)?;
        if vocab.fingerprint() != ckpt.vocab_fingerprint {
            return Err(Error::Mismatch(format!(
                "{} is not the vocabulary the checkpoint was trained with",
                vocab_path.display()
            )));
        }
        Ok(Self { ckpt, vocab })
    }

    fn encode(&self, id: &str, text: &str) -> Result<EncodedDocument, Error> {
        let raw = RawDocument::new(id, text, Vec::<String>::new());
        encode(&raw, &self.vocab, &self.ckpt.labels, &self.ckpt.config.encode_config())
    }
}

/// Loads a checkpoint. `vocab_path` may be null, in which case `vocab.tsv`
/// next to the checkpoint is used. On success `*out` owns a model that must
/// be released with [`hlan_model_free`].
///
/// # Safety
/// Path arguments must be null or NUL-terminated strings; `out` must be a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hlan_model_load(
    checkpoint_path: *const c_char,
    vocab_path: *const c_char,
    out: *mut *mut HlanModel,
) -> HlanStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure(HlanStatus::NullPointer, "out is null".into()));
        }
        *out = ptr::null_mut();
        let ckpt = str_arg(checkpoint_path, "checkpoint_path")?;
        let vocab = if vocab_path.is_null() {
            None
        } else {
            Some(Path::new(str_arg(vocab_path, "vocab_path")?))
        };
        let model = HlanModel::load(Path::new(ckpt), vocab)?;
        *out = Box::into_raw(Box::new(model));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a pointer from [`hlan_model_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hlan_model_free(model: *mut HlanModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must come from [`hlan_model_load`]; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hlan_model_num_labels(model: *const HlanModel, out: *mut usize) -> HlanStatus {
    guard(|| {
        let m = model_arg(model)?;
        if out.is_null() {
            return Err(Failure(HlanStatus::NullPointer, "out is null".into()));
        }
        *out = m.ckpt.labels.len();
        Ok(())
    })
}

/// Name of label `index` as a new string.
///
/// # Safety
/// `model` must come from [`hlan_model_load`]; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hlan_model_label(model: *const HlanModel, index: usize, out: *mut *mut c_char) -> HlanStatus {
    guard(|| {
        let m = model_arg(model)?;
        if out.is_null() {
            return Err(Failure(HlanStatus::NullPointer, "out is null".into()));
        }
        if index >= m.ckpt.labels.len() {
            return Err(Failure(
                HlanStatus::InvalidArgument,
                format!("label index {index} outside {} labels", m.ckpt.labels.len()),
            ));
        }
        out_string(m.ckpt.labels.name(index).to_string(), out)
    })
}

/// Writes one probability per label, in label order, into `probabilities`,
/// which must hold exactly as many entries as the model has labels.
///
/// # Safety
/// `model` must come from [`hlan_model_load`]; `text` must be a
/// NUL-terminated string; `probabilities` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn hlan_predict(
    model: *const HlanModel,
    text: *const c_char,
    probabilities: *mut f64,
    len: usize,
) -> HlanStatus {
    guard(|| {
        let m = model_arg(model)?;
        let text = str_arg(text, "text")?;
        if probabilities.is_null() {
            return Err(Failure(HlanStatus::NullPointer, "probabilities is null".into()));
        }
        if len != m.ckpt.labels.len() {
            return Err(Failure(
                HlanStatus::BufferSize,
                format!("buffer holds {len} values, model has {} labels", m.ckpt.labels.len()),
            ));
        }
        let doc = m.encode("input", text)?;
        let p = predict_proba(&doc, &m.ckpt.params, &m.ckpt.config)?;
        std::slice::from_raw_parts_mut(probabilities, len).copy_from_slice(&p);
        Ok(())
    })
}

/// Prediction and highlights for every label whose probability exceeds
/// `threshold`, as a JSON object with `doc_id`, `probabilities`, `predicted`
/// and `highlights`. Highlight thresholds are the library defaults.
///
/// # Safety
/// `model` must come from [`hlan_model_load`]; `doc_id` and `text` must be
/// NUL-terminated strings; `out_json` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hlan_explain_json(
    model: *const HlanModel,
    doc_id: *const c_char,
    text: *const c_char,
    threshold: f64,
    out_json: *mut *mut c_char,
) -> HlanStatus {
    guard(|| {
        let m = model_arg(model)?;
        let id = str_arg(doc_id, "doc_id")?;
        let text = str_arg(text, "text")?;
        if out_json.is_null() {
            return Err(Failure(HlanStatus::NullPointer, "out_json is null".into()));
        }
        *out_json = ptr::null_mut();
        let doc = m.encode(id, text)?;
        let (e, _) = explain(
            &doc,
            &m.ckpt.params,
            &m.ckpt.config,
            &m.ckpt.labels,
            threshold,
            &HighlightOptions::default(),
        )?;
        let json = serde_json::to_string(&e).map_err(|e| Failure(HlanStatus::Format, e.to_string()))?;
        out_string(json, out_json)
    })
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hlan_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message of the last failed call on this thread, or an empty string.
/// Valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn hlan_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn hlan_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
