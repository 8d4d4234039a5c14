//! On-disk formats consumed by every stage: JSON-lines manifests and the
//! little-endian DSEM (embeddings), DSTK (tokens) and DSCB (codebook) files.

pub(crate) mod binary;
pub mod formats;
pub mod manifest;
pub mod wav;

pub use formats::{
    decode_codebook, decode_embeddings, decode_tokens, encode_codebook, encode_embeddings,
    encode_tokens, read_codebook, read_embedding_file, read_token_file, write_codebook,
    write_embedding_file, write_token_file,
};
pub use manifest::{read_manifest, resolve_source, total_duration_s, write_manifest, Utterance};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Frame-major real matrix (`T × D`) at a fixed frame rate.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSequence {
    frames: Vec<f32>,
    num_frames: usize,
    dim: usize,
    pub frame_rate_hz: f32,
    pub source_tag: String,
}

impl EmbeddingSequence {
    pub fn new(frames: Vec<f32>, num_frames: usize, dim: usize, frame_rate_hz: f32, source_tag: impl Into<String>) -> Result<Self> {
        if num_frames == 0 || dim == 0 {
            return Err(Error::Validation(format!(
                "embedding sequence must be non-empty, got {num_frames}x{dim}"
            )));
        }
        if frames.len() != num_frames * dim {
            return Err(Error::Dimension(format!(
                "{num_frames}x{dim} embedding needs {} values, got {}",
                num_frames * dim,
                frames.len()
            )));
        }
        if !(frame_rate_hz > 0.0) || !frame_rate_hz.is_finite() {
            return Err(Error::Validation(format!("frame rate {frame_rate_hz} must be positive")));
        }
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("embedding contains non-finite values".into()));
        }
        Ok(Self {
            frames,
            num_frames,
            dim,
            frame_rate_hz,
            source_tag: source_tag.into(),
        })
    }

    /// Builds a sequence from `f64` data, rounding each value to `f32`.
    pub fn from_tensor(t: &Tensor, frame_rate_hz: f32, source_tag: impl Into<String>) -> Result<Self> {
        let frames = t.data().iter().map(|v| *v as f32).collect();
        Self::new(frames, t.rows(), t.cols(), frame_rate_hz, source_tag)
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frames(&self) -> &[f32] {
        &self.frames
    }

    pub fn frame(&self, i: usize) -> &[f32] {
        &self.frames[i * self.dim..(i + 1) * self.dim]
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(
            vec![self.num_frames, self.dim],
            self.frames.iter().map(|v| *v as f64).collect(),
        )
        .expect("validated on construction")
    }

    pub fn duration_s(&self) -> f64 {
        self.num_frames as f64 / self.frame_rate_hz as f64
    }
}

/// `G` parallel integer code streams of equal length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    groups: Vec<Vec<u32>>,
    codebook_sizes: Vec<u32>,
    frame_rate_bits: u32,
}

impl TokenSequence {
    pub fn new(groups: Vec<Vec<u32>>, codebook_sizes: Vec<u32>, frame_rate_hz: f32) -> Result<Self> {
        if groups.is_empty() || groups.len() != codebook_sizes.len() {
            return Err(Error::Validation(format!(
                "{} token groups with {} codebook sizes",
                groups.len(),
                codebook_sizes.len()
            )));
        }
        let t = groups[0].len();
        if groups.iter().any(|g| g.len() != t) {
            return Err(Error::Validation("token groups differ in length".into()));
        }
        if codebook_sizes.contains(&0) {
            return Err(Error::Validation("codebook size must be positive".into()));
        }
        for (g, (seq, &k)) in groups.iter().zip(&codebook_sizes).enumerate() {
            if let Some(frame) = seq.iter().position(|&tok| tok >= k) {
                return Err(Error::Validation(format!(
                    "token {} at group {g}, frame {frame} exceeds codebook size {k}",
                    seq[frame]
                )));
            }
        }
        if !(frame_rate_hz > 0.0) || !frame_rate_hz.is_finite() {
            return Err(Error::Validation(format!("frame rate {frame_rate_hz} must be positive")));
        }
        Ok(Self {
            groups,
            codebook_sizes,
            frame_rate_bits: frame_rate_hz.to_bits(),
        })
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn num_frames(&self) -> usize {
        self.groups[0].len()
    }

    pub fn group(&self, g: usize) -> &[u32] {
        &self.groups[g]
    }

    pub fn groups(&self) -> &[Vec<u32>] {
        &self.groups
    }

    pub fn codebook_sizes(&self) -> &[u32] {
        &self.codebook_sizes
    }

    pub fn frame_rate_hz(&self) -> f32 {
        f32::from_bits(self.frame_rate_bits)
    }
}
