//! C ABI over the ditok core: RNN-T loss, WER scoring, k-means codebooks,
//! BPE models and fbank extraction.
//!
//! Every function returns a [`DitokStatus`]. On failure the message is
//! kept per thread and can be read with [`ditok_last_error`]. Handles are
//! opaque and must be released with their `_free` function. Panics never
//! cross the boundary; they surface as `DITOK_STATUS_INTERNAL`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ditok_core::bpe::BpeModel;
use ditok_core::corpus::{read_codebook, EmbeddingSequence};
use ditok_core::decode::wer_text;
use ditok_core::fbank::{compute_fbank, FbankConfig};
use ditok_core::rnnt::rnnt_loss_raw;
use ditok_core::tokenizer::{assign, Codebook};
use ditok_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DitokStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    Numeric = 4,
    Format = 5,
    Io = 6,
    Capacity = 7,
    BufferTooSmall = 8,
    Internal = 9,
}

/// Word-level edit counts.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DitokWerStats {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub ref_words: usize,
}

/// Opaque k-means codebook.
pub struct DitokCodebook(Codebook);

/// Opaque BPE model.
pub struct DitokBpe(BpeModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> DitokStatus {
    match e {
        Error::Dimension(_) | Error::Length(_) => DitokStatus::Dimension,
        Error::Numeric(_) | Error::Divergence { .. } => DitokStatus::Numeric,
        Error::Format(_) | Error::Parse { .. } | Error::Json(_) => DitokStatus::Format,
        Error::Io { .. } => DitokStatus::Io,
        Error::Capacity(_) => DitokStatus::Capacity,
        _ => DitokStatus::InvalidArgument,
    }
}

struct Fail(DitokStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn fail<T>(status: DitokStatus, msg: impl Into<String>) -> Result<T, Fail> {
    Err(Fail(status, msg.into()))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DitokStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            DitokStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            DitokStatus::Internal
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), Fail> {
    if p.is_null() {
        fail(DitokStatus::NullPointer, format!("{name} is null"))
    } else {
        Ok(())
    }
}

/// # Safety
/// `p` must be null or point to `n` readable values.
unsafe fn slice<'a, T>(p: *const T, n: usize, name: &str) -> Result<&'a [T], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    non_null(p, name)?;
    Ok(std::slice::from_raw_parts(p, n))
}

/// # Safety
/// `p` must be null or a nul-terminated string.
unsafe fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    non_null(p, name)?;
    CStr::from_ptr(p)
        .to_str()
        .or_else(|_| fail(DitokStatus::InvalidArgument, format!("{name} is not UTF-8")))
}

/// Message of the last failed call on this thread, or null after a
/// success. Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn ditok_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// RNN-T loss of a `frames x (label_len + 1) x vocab` row-major log-prob
/// buffer. When `grad_out` is non-null it receives d loss / d log-probs in
/// the same layout.
///
/// # Safety
/// Pointers must reference buffers of the stated sizes.
#[no_mangle]
pub unsafe extern "C" fn ditok_rnnt_loss(
    log_probs: *const f64,
    frames: usize,
    label_len: usize,
    vocab: usize,
    labels: *const u32,
    blank: u32,
    loss_out: *mut f64,
    grad_out: *mut f64,
) -> DitokStatus {
    guard(|| {
        non_null(loss_out, "loss_out")?;
        let n = frames
            .checked_mul(label_len + 1)
            .and_then(|x| x.checked_mul(vocab))
            .ok_or(Fail(DitokStatus::InvalidArgument, "lattice size overflows".into()))?;
        let lp = slice(log_probs, n, "log_probs")?;
        let lab = slice(labels, label_len, "labels")?;
        let out = rnnt_loss_raw(lp, frames, vocab, lab, blank)?;
        *loss_out = out.loss;
        if !grad_out.is_null() {
            ptr::copy_nonoverlapping(out.grad.as_ptr(), grad_out, n);
        }
        Ok(())
    })
}

/// Word error counts between two UTF-8 transcripts, after normalization.
///
/// # Safety
/// `reference` and `hypothesis` must be nul-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn ditok_wer(
    reference: *const c_char,
    hypothesis: *const c_char,
    out: *mut DitokWerStats,
) -> DitokStatus {
    guard(|| {
        non_null(out, "out")?;
        let s = wer_text(text(reference, "reference")?, text(hypothesis, "hypothesis")?);
        *out = DitokWerStats {
            substitutions: s.substitutions,
            deletions: s.deletions,
            insertions: s.insertions,
            ref_words: s.ref_words,
        };
        Ok(())
    })
}

/// Loads a DSCB codebook.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ditok_codebook_load(path: *const c_char, out: *mut *mut DitokCodebook) -> DitokStatus {
    guard(|| {
        non_null(out, "out")?;
        let cb = read_codebook(text(path, "path")?)?;
        *out = Box::into_raw(Box::new(DitokCodebook(cb)));
        Ok(())
    })
}

/// # Safety
/// `cb` must come from [`ditok_codebook_load`] and not be freed yet.
#[no_mangle]
pub unsafe extern "C" fn ditok_codebook_shape(cb: *const DitokCodebook, k: *mut usize, dim: *mut usize) -> DitokStatus {
    guard(|| {
        non_null(cb, "codebook")?;
        non_null(k, "k")?;
        non_null(dim, "dim")?;
        *k = (*cb).0.k();
        *dim = (*cb).0.dim();
        Ok(())
    })
}

/// Nearest-centroid ids for `frames` row-major vectors of length `dim`.
///
/// # Safety
/// `data` holds `frames * dim` floats, `out` room for `frames` ids.
#[no_mangle]
pub unsafe extern "C" fn ditok_codebook_assign(
    cb: *const DitokCodebook,
    data: *const f32,
    frames: usize,
    dim: usize,
    out: *mut u32,
) -> DitokStatus {
    guard(|| {
        non_null(cb, "codebook")?;
        non_null(out, "out")?;
        let n = frames
            .checked_mul(dim)
            .ok_or(Fail(DitokStatus::InvalidArgument, "frames * dim overflows".into()))?;
        let x = slice(data, n, "data")?;
        let seq = EmbeddingSequence::new(x.to_vec(), frames, dim, 1.0, "ffi")?;
        let tokens = assign(&seq, &(*cb).0)?;
        ptr::copy_nonoverlapping(tokens.group(0).as_ptr(), out, frames);
        Ok(())
    })
}

/// # Safety
/// `cb` must be null or an unfreed handle.
#[no_mangle]
pub unsafe extern "C" fn ditok_codebook_free(cb: *mut DitokCodebook) {
    if !cb.is_null() {
        drop(Box::from_raw(cb));
    }
}

/// Loads a BPE model saved as JSON.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ditok_bpe_load(path: *const c_char, out: *mut *mut DitokBpe) -> DitokStatus {
    guard(|| {
        non_null(out, "out")?;
        let model = BpeModel::load(text(path, "path")?)?;
        *out = Box::into_raw(Box::new(DitokBpe(model)));
        Ok(())
    })
}

/// # Safety
/// `bpe` must be an unfreed handle.
#[no_mangle]
pub unsafe extern "C" fn ditok_bpe_vocab_size(bpe: *const DitokBpe, out: *mut usize) -> DitokStatus {
    guard(|| {
        non_null(bpe, "bpe")?;
        non_null(out, "out")?;
        *out = (*bpe).0.vocab_size();
        Ok(())
    })
}

/// Encodes `text` into at most `cap` ids. `len` always receives the full
/// length; `DITOK_STATUS_BUFFER_TOO_SMALL` means retry with `cap >= *len`.
///
/// # Safety
/// `ids` must have room for `cap` values.
#[no_mangle]
pub unsafe extern "C" fn ditok_bpe_encode(
    bpe: *const DitokBpe,
    input: *const c_char,
    ids: *mut u32,
    cap: usize,
    len: *mut usize,
) -> DitokStatus {
    guard(|| {
        non_null(bpe, "bpe")?;
        non_null(len, "len")?;
        let enc = (*bpe).0.encode(text(input, "text")?);
        *len = enc.len();
        if enc.len() > cap {
            return fail(DitokStatus::BufferTooSmall, format!("{} ids do not fit in {cap}", enc.len()));
        }
        if !enc.is_empty() {
            non_null(ids, "ids")?;
            ptr::copy_nonoverlapping(enc.as_ptr(), ids, enc.len());
        }
        Ok(())
    })
}

/// Decodes ids into a nul-terminated string of at most `cap` bytes
/// including the terminator. `len` receives the string length without it.
///
/// # Safety
/// `ids` holds `n` values, `buf` room for `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn ditok_bpe_decode(
    bpe: *const DitokBpe,
    ids: *const u32,
    n: usize,
    buf: *mut c_char,
    cap: usize,
    len: *mut usize,
) -> DitokStatus {
    guard(|| {
        non_null(bpe, "bpe")?;
        non_null(len, "len")?;
        let s = (*bpe).0.decode(slice(ids, n, "ids")?)?;
        *len = s.len();
        if s.len() + 1 > cap {
            return fail(DitokStatus::BufferTooSmall, format!("{} bytes do not fit in {cap}", s.len() + 1));
        }
        non_null(buf, "buf")?;
        ptr::copy_nonoverlapping(s.as_ptr() as *const c_char, buf, s.len());
        *buf.add(s.len()) = 0;
        Ok(())
    })
}

/// # Safety
/// `bpe` must be null or an unfreed handle.
#[no_mangle]
pub unsafe extern "C" fn ditok_bpe_free(bpe: *mut DitokBpe) {
    if !bpe.is_null() {
        drop(Box::from_raw(bpe));
    }
}

/// Number of mel bands written per frame by [`ditok_fbank`].
#[no_mangle]
pub extern "C" fn ditok_fbank_dim() -> usize {
    FbankConfig::default().n_mels
}

/// 25 ms / 10 ms log-mel fbank of 16 kHz PCM. `frames_out` receives the
/// frame count; `out` must hold `cap_frames * ditok_fbank_dim()` values.
///
/// # Safety
/// `pcm` holds `n` samples, `out` room for `cap_frames` frames.
#[no_mangle]
pub unsafe extern "C" fn ditok_fbank(
    pcm: *const i16,
    n: usize,
    sample_rate_hz: u32,
    out: *mut f32,
    cap_frames: usize,
    frames_out: *mut usize,
) -> DitokStatus {
    guard(|| {
        non_null(frames_out, "frames_out")?;
        let seq = compute_fbank(slice(pcm, n, "pcm")?, sample_rate_hz, &FbankConfig::default())?;
        *frames_out = seq.num_frames();
        if seq.num_frames() > cap_frames {
            return fail(
                DitokStatus::BufferTooSmall,
                format!("{} frames do not fit in {cap_frames}", seq.num_frames()),
            );
        }
        non_null(out, "out")?;
        ptr::copy_nonoverlapping(seq.frames().as_ptr(), out, seq.frames().len());
        Ok(())
    })
}
