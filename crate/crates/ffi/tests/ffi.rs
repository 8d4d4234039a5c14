use std::ffi::{CStr, CString};
use std::process::Command;

use ditok_core::bpe::bpe_train;
use ditok_core::corpus::write_codebook;
use ditok_core::fbank::{compute_fbank, FbankConfig};
use ditok_core::numerics::Tensor;
use ditok_core::rnnt::rnnt_loss;
use ditok_core::tokenizer::Codebook;
use ditok_ffi::*;

fn last_error() -> String {
    let p = ditok_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn rnnt_uniform_two_frames() {
    // T=2, U=1, V=2 uniform: two paths of probability 1/8 each
    let lp = vec![(0.5f64).ln(); 2 * 2 * 2];
    let mut loss = 0.0;
    let mut grad = vec![0.0; 8];
    let s = unsafe { ditok_rnnt_loss(lp.as_ptr(), 2, 1, 2, [1u32].as_ptr(), 0, &mut loss, grad.as_mut_ptr()) };
    assert_eq!(s, DitokStatus::Ok);
    assert!((loss - 4f64.ln()).abs() < 1e-12);
    let t = Tensor::new(vec![2, 2, 2], lp).unwrap();
    let (l2, g2) = rnnt_loss(&t, &[1], 0).unwrap();
    assert_eq!(loss, l2);
    assert_eq!(grad, g2.data());
    assert!(ditok_last_error().is_null());
}

#[test]
fn rnnt_errors_are_reported() {
    let mut loss = 0.0;
    let s = unsafe { ditok_rnnt_loss(std::ptr::null(), 2, 0, 2, std::ptr::null(), 0, &mut loss, std::ptr::null_mut()) };
    assert_eq!(s, DitokStatus::NullPointer);
    assert!(last_error().contains("log_probs"));
    let lp = vec![(0.5f64).ln(); 4];
    let s = unsafe { ditok_rnnt_loss(lp.as_ptr(), 1, 1, 2, [5u32].as_ptr(), 0, &mut loss, std::ptr::null_mut()) };
    assert_ne!(s, DitokStatus::Ok);
    assert!(!last_error().is_empty());
}

#[test]
fn wer_counts() {
    let r = CString::new("the cat sat").unwrap();
    let h = CString::new("The cat sat down").unwrap();
    let mut out = DitokWerStats::default();
    assert_eq!(unsafe { ditok_wer(r.as_ptr(), h.as_ptr(), &mut out) }, DitokStatus::Ok);
    assert_eq!((out.substitutions, out.deletions, out.insertions, out.ref_words), (0, 0, 1, 3));
}

#[test]
fn codebook_handle() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cb.dscb");
    let cb = Codebook::new(vec![0.0, 0.0, 10.0, 10.0], 2, 2, "syn".into()).unwrap();
    write_codebook(&cb, &path).unwrap();
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let mut h = std::ptr::null_mut();
    assert_eq!(unsafe { ditok_codebook_load(cpath.as_ptr(), &mut h) }, DitokStatus::Ok);
    let (mut k, mut d) = (0, 0);
    assert_eq!(unsafe { ditok_codebook_shape(h, &mut k, &mut d) }, DitokStatus::Ok);
    assert_eq!((k, d), (2, 2));
    let x = [1.0f32, -1.0, 9.0, 11.0, 6.0, 6.0];
    let mut ids = [9u32; 3];
    assert_eq!(unsafe { ditok_codebook_assign(h, x.as_ptr(), 3, 2, ids.as_mut_ptr()) }, DitokStatus::Ok);
    assert_eq!(ids, [0, 1, 1]);
    assert_eq!(unsafe { ditok_codebook_assign(h, x.as_ptr(), 2, 3, ids.as_mut_ptr()) }, DitokStatus::Dimension);
    unsafe { ditok_codebook_free(h) };

    let missing = CString::new(dir.path().join("none.dscb").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { ditok_codebook_load(missing.as_ptr(), &mut h) }, DitokStatus::Io);
    assert!(last_error().contains("none.dscb"));
}

#[test]
fn bpe_handle_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bpe.json");
    bpe_train(&["low lower lowest", "new newer"], 40).unwrap().save(&path).unwrap();
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let mut h = std::ptr::null_mut();
    assert_eq!(unsafe { ditok_bpe_load(cpath.as_ptr(), &mut h) }, DitokStatus::Ok);
    let text = CString::new("lower new").unwrap();
    let mut len = 0;
    let s = unsafe { ditok_bpe_encode(h, text.as_ptr(), std::ptr::null_mut(), 0, &mut len) };
    assert_eq!(s, DitokStatus::BufferTooSmall);
    let mut ids = vec![0u32; len];
    assert_eq!(unsafe { ditok_bpe_encode(h, text.as_ptr(), ids.as_mut_ptr(), len, &mut len) }, DitokStatus::Ok);
    let mut buf = vec![0 as std::ffi::c_char; 64];
    let mut n = 0;
    assert_eq!(
        unsafe { ditok_bpe_decode(h, ids.as_ptr(), ids.len(), buf.as_mut_ptr(), buf.len(), &mut n) },
        DitokStatus::Ok
    );
    assert_eq!(unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap(), "lower new");
    assert_eq!(n, "lower new".len());
    unsafe { ditok_bpe_free(h) };
}

#[test]
fn fbank_matches_core() {
    let pcm: Vec<i16> = (0..4000).map(|i| ((i as f64 * 0.3).sin() * 8000.0) as i16).collect();
    let mut frames = 0;
    let s = unsafe { ditok_fbank(pcm.as_ptr(), pcm.len(), 16000, std::ptr::null_mut(), 0, &mut frames) };
    assert_eq!(s, DitokStatus::BufferTooSmall);
    let mut out = vec![0f32; frames * ditok_fbank_dim()];
    assert_eq!(
        unsafe { ditok_fbank(pcm.as_ptr(), pcm.len(), 16000, out.as_mut_ptr(), frames, &mut frames) },
        DitokStatus::Ok
    );
    let core = compute_fbank(&pcm, 16000, &FbankConfig::default()).unwrap();
    assert_eq!(out, core.frames());
    assert_ne!(
        unsafe { ditok_fbank(pcm.as_ptr(), pcm.len(), 8000, out.as_mut_ptr(), frames, &mut frames) },
        DitokStatus::Ok
    );
}

#[test]
fn header_is_valid_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/ditok.h");
    let text = std::fs::read_to_string(header).unwrap();
    for sym in ["ditok_rnnt_loss", "ditok_wer", "ditok_codebook_assign", "ditok_bpe_encode", "ditok_fbank", "DITOK_STATUS_OK"] {
        assert!(text.contains(sym), "{sym} missing from header");
    }
    if let Ok(out) = Command::new("cc").args(["-fsyntax-only", "-x", "c", header]).output() {
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
}
