//! C ABI over `rxnemb`: load a checkpoint, embed and score reactions.
//!
//! Every fallible call returns an [`RxnembStatus`]; on failure the message
//! is kept per thread and read with [`rxnemb_last_error`]. Models are opaque
//! handles owned by the caller and released with [`rxnemb_model_free`].
//! Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::BufReader;
use std::panic::{catch_unwind, AssertUnwindSafe};

use rxnemb::chem::{parse_reaction, Reaction};
use rxnemb::encoder::{read_checkpoint, InferenceSession, ModelCheckpoint};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RxnembStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    BadModel = 4,
    BadSmiles = 5,
    Inference = 6,
    /// The output buffer is too small; nothing was written.
    BufferTooSmall = 7,
    Panic = 8,
}

/// Loaded model. Opaque to C.
pub struct RxnembModel {
    checkpoint: ModelCheckpoint,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

type Failure = (RxnembStatus, String);

/// Runs `f`, recording its error message and converting panics.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RxnembStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            RxnembStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            RxnembStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err((RxnembStatus::NullPointer, format!("{name} is NULL")));
    }
    // SAFETY: caller passes a NUL-terminated string that outlives the call.
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|e| (RxnembStatus::InvalidUtf8, format!("{name}: {e}")))
}

unsafe fn model_arg<'a>(p: *const RxnembModel) -> Result<&'a RxnembModel, Failure> {
    // SAFETY: non-null handles come from `rxnemb_model_load`.
    unsafe { p.as_ref() }.ok_or((RxnembStatus::NullPointer, "model is NULL".into()))
}

fn reaction(smiles: &str) -> Result<Reaction, Failure> {
    parse_reaction(smiles, "ffi").map_err(|e| (RxnembStatus::BadSmiles, e.to_string()))
}

/// Loads a checkpoint file and stores a new handle in `*out`.
///
/// # Safety
/// `path` is a NUL-terminated string; `out` points to writable storage.
#[no_mangle]
pub unsafe extern "C" fn rxnemb_model_load(path: *const c_char, out: *mut *mut RxnembModel) -> RxnembStatus {
    guard(|| {
        if out.is_null() {
            return Err((RxnembStatus::NullPointer, "out is NULL".into()));
        }
        let path = unsafe { str_arg(path, "path") }?;
        let file = File::open(path).map_err(|e| (RxnembStatus::Io, format!("{path}: {e}")))?;
        let checkpoint =
            read_checkpoint(BufReader::new(file)).map_err(|e| (RxnembStatus::BadModel, format!("{path}: {e}")))?;
        let handle = Box::into_raw(Box::new(RxnembModel { checkpoint }));
        // SAFETY: checked non-null above.
        unsafe { *out = handle };
        Ok(())
    })
}

/// Releases a handle. NULL is ignored.
///
/// # Safety
/// `model` came from [`rxnemb_model_load`] and is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rxnemb_model_free(model: *mut RxnembModel) {
    if !model.is_null() {
        // SAFETY: ownership returns from the caller.
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Length of the embedding vector, or 0 for a NULL handle.
///
/// # Safety
/// `model` is NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rxnemb_model_emb_dim(model: *const RxnembModel) -> usize {
    unsafe { model.as_ref() }.map_or(0, |m| m.checkpoint.config.emb_dim)
}

/// Embeds a reaction SMILES into `out[0..len]`; `len` must be at least
/// the model's embedding dimension.
///
/// # Safety
/// `model` is a live handle, `rxn_smiles` a NUL-terminated string, and
/// `out` points to `len` writable floats.
#[no_mangle]
pub unsafe extern "C" fn rxnemb_embed(
    model: *const RxnembModel,
    rxn_smiles: *const c_char,
    out: *mut f32,
    len: usize,
) -> RxnembStatus {
    guard(|| {
        let m = unsafe { model_arg(model) }?;
        let smiles = unsafe { str_arg(rxn_smiles, "rxn_smiles") }?;
        if out.is_null() {
            return Err((RxnembStatus::NullPointer, "out is NULL".into()));
        }
        let dim = m.checkpoint.config.emb_dim;
        if len < dim {
            return Err((RxnembStatus::BufferTooSmall, format!("need {dim} floats, got {len}")));
        }
        let rxn = reaction(smiles)?;
        let emb = InferenceSession::new(&m.checkpoint)
            .embedding(&rxn)
            .map_err(|e| (RxnembStatus::Inference, e.to_string()))?;
        // SAFETY: `out` holds at least `dim` floats.
        unsafe { std::slice::from_raw_parts_mut(out, dim) }.copy_from_slice(&emb.values);
        Ok(())
    })
}

/// Probability in [0, 1] that the reaction is real, stored in `*p_real`.
///
/// # Safety
/// `model` is a live handle, `rxn_smiles` a NUL-terminated string, and
/// `p_real` points to a writable double.
#[no_mangle]
pub unsafe extern "C" fn rxnemb_classify(
    model: *const RxnembModel,
    rxn_smiles: *const c_char,
    p_real: *mut f64,
) -> RxnembStatus {
    guard(|| {
        let m = unsafe { model_arg(model) }?;
        let smiles = unsafe { str_arg(rxn_smiles, "rxn_smiles") }?;
        if p_real.is_null() {
            return Err((RxnembStatus::NullPointer, "p_real is NULL".into()));
        }
        let rxn = reaction(smiles)?;
        let p = InferenceSession::new(&m.checkpoint)
            .probability(&rxn)
            .map_err(|e| (RxnembStatus::Inference, e.to_string()))?;
        // SAFETY: checked non-null above.
        unsafe { *p_real = p };
        Ok(())
    })
}

/// Parses a reaction SMILES and writes it back from the parsed graphs as
/// a NUL-terminated string. `*needed` (if non-NULL) receives the size
/// including the terminator, so a first call with `cap = 0` sizes the
/// buffer.
///
/// # Safety
/// `rxn_smiles` is a NUL-terminated string; `buf` points to `cap` writable
/// bytes (or is NULL when `cap` is 0); `needed` is NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn rxnemb_write_smiles(
    rxn_smiles: *const c_char,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> RxnembStatus {
    guard(|| {
        let smiles = unsafe { str_arg(rxn_smiles, "rxn_smiles") }?;
        let text = reaction(smiles)?.to_smiles();
        let size = text.len() + 1;
        if !needed.is_null() {
            // SAFETY: checked non-null.
            unsafe { *needed = size };
        }
        if cap < size {
            return Err((RxnembStatus::BufferTooSmall, format!("need {size} bytes, got {cap}")));
        }
        if buf.is_null() {
            return Err((RxnembStatus::NullPointer, "buf is NULL".into()));
        }
        // SAFETY: `buf` holds at least `size` bytes.
        let dst = unsafe { std::slice::from_raw_parts_mut(buf.cast::<u8>(), size) };
        dst[..text.len()].copy_from_slice(text.as_bytes());
        dst[text.len()] = 0;
        Ok(())
    })
}

/// Message of the last failed call on this thread, or NULL after a
/// success. Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn rxnemb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rxnemb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
