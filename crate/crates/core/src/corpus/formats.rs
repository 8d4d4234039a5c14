use std::fs;
use std::path::Path;

use super::binary::{put_string, Reader};
use super::{EmbeddingSequence, TokenSequence};
use crate::error::{Error, Result};
use crate::tokenizer::Codebook;

pub const DSEM_MAGIC: &[u8; 4] = b"DSEM";
pub const DSTK_MAGIC: &[u8; 4] = b"DSTK";
pub const DSCB_MAGIC: &[u8; 4] = b"DSCB";
pub const FORMAT_VERSION: u16 = 1;

fn to_u32(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Validation(format!("{what} {n} exceeds u32")))
}

pub fn encode_embeddings(seq: &EmbeddingSequence) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(20 + seq.source_tag.len() + seq.frames().len() * 4);
    out.extend_from_slice(DSEM_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&to_u32(seq.num_frames(), "frame count")?.to_le_bytes());
    out.extend_from_slice(&to_u32(seq.dim(), "dimension")?.to_le_bytes());
    out.extend_from_slice(&seq.frame_rate_hz.to_le_bytes());
    put_string(&mut out, &seq.source_tag)?;
    for v in seq.frames() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_embeddings(bytes: &[u8]) -> Result<EmbeddingSequence> {
    let mut r = Reader::new(bytes, "DSEM");
    r.magic(DSEM_MAGIC)?;
    r.version(FORMAT_VERSION)?;
    let t = r.u32()? as usize;
    let d = r.u32()? as usize;
    let rate = r.f32()?;
    let tag = r.string()?;
    let frames = r.f32s(t * d)?;
    r.finish()?;
    EmbeddingSequence::new(frames, t, d, rate, tag)
}

pub fn encode_tokens(seq: &TokenSequence) -> Result<Vec<u8>> {
    let g = u16::try_from(seq.num_groups())
        .map_err(|_| Error::Validation("too many token groups".into()))?;
    let mut out = Vec::new();
    out.extend_from_slice(DSTK_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&g.to_le_bytes());
    out.extend_from_slice(&to_u32(seq.num_frames(), "frame count")?.to_le_bytes());
    out.extend_from_slice(&seq.frame_rate_hz().to_le_bytes());
    for k in seq.codebook_sizes() {
        out.extend_from_slice(&k.to_le_bytes());
    }
    for group in seq.groups() {
        for tok in group {
            out.extend_from_slice(&tok.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_tokens(bytes: &[u8]) -> Result<TokenSequence> {
    let mut r = Reader::new(bytes, "DSTK");
    r.magic(DSTK_MAGIC)?;
    r.version(FORMAT_VERSION)?;
    let g = r.u16()? as usize;
    let t = r.u32()? as usize;
    let rate = r.f32()?;
    let sizes = r.u32s(g)?;
    let flat = r.u32s(g * t)?;
    r.finish()?;
    let groups = if t == 0 {
        vec![Vec::new(); g]
    } else {
        flat.chunks(t).map(<[u32]>::to_vec).collect()
    };
    TokenSequence::new(groups, sizes, rate)
}

pub fn encode_codebook(cb: &Codebook) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(16 + cb.lang_scope.len() + cb.centroids().len() * 4);
    out.extend_from_slice(DSCB_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&to_u32(cb.k(), "codebook size")?.to_le_bytes());
    out.extend_from_slice(&to_u32(cb.dim(), "dimension")?.to_le_bytes());
    put_string(&mut out, &cb.lang_scope)?;
    for v in cb.centroids() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_codebook(bytes: &[u8]) -> Result<Codebook> {
    let mut r = Reader::new(bytes, "DSCB");
    r.magic(DSCB_MAGIC)?;
    r.version(FORMAT_VERSION)?;
    let k = r.u32()? as usize;
    let d = r.u32()? as usize;
    let lang = r.string()?;
    let centroids = r.f32s(k * d)?;
    r.finish()?;
    Codebook::new(centroids, k, d, lang)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write_embedding_file(seq: &EmbeddingSequence, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &encode_embeddings(seq)?)
}

pub fn read_embedding_file(path: impl AsRef<Path>) -> Result<EmbeddingSequence> {
    decode_embeddings(&read_bytes(path.as_ref())?)
}

pub fn write_token_file(seq: &TokenSequence, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &encode_tokens(seq)?)
}

pub fn read_token_file(path: impl AsRef<Path>) -> Result<TokenSequence> {
    decode_tokens(&read_bytes(path.as_ref())?)
}

pub fn write_codebook(cb: &Codebook, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &encode_codebook(cb)?)
}

pub fn read_codebook(path: impl AsRef<Path>) -> Result<Codebook> {
    decode_codebook(&read_bytes(path.as_ref())?)
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    write_bytes(path, bytes)
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    read_bytes(path)
}
