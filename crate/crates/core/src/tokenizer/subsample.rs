use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{read_embedding_file, read_manifest, resolve_source, Utterance};
use crate::error::{Error, Result};

/// Utterances picked for codebook training, in draw order.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub indices: Vec<usize>,
    pub duration_s: f64,
}

/// Pooled frames of the selected utterances.
#[derive(Debug, Clone, Default)]
pub struct FrameSample {
    pub frames: Vec<f32>,
    pub dim: usize,
    pub utt_ids: Vec<String>,
    pub duration_s: f64,
    /// Set when the sample came out empty.
    pub warning: Option<String>,
}

impl FrameSample {
    pub fn num_frames(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.frames.len() / self.dim
        }
    }

    pub fn hours(&self) -> f64 {
        self.duration_s / 3600.0
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Appends another sample; used to build the shared-codebook union.
    pub fn extend(&mut self, other: FrameSample) -> Result<()> {
        if other.is_empty() {
            return Ok(());
        }
        if !self.is_empty() && self.dim != other.dim {
            return Err(Error::Dimension(format!(
                "cannot pool {}-dim and {}-dim frames",
                self.dim, other.dim
            )));
        }
        self.dim = other.dim;
        self.frames.extend(other.frames);
        self.utt_ids.extend(other.utt_ids);
        self.duration_s += other.duration_s;
        self.warning = None;
        Ok(())
    }
}

/// Draws utterances without replacement until the cumulative duration
/// reaches `min(target_hours, total)`.
pub fn select_for_training(utts: &[Utterance], target_hours: f64, seed: u64) -> Selection {
    let total: f64 = utts.iter().map(|u| u.duration_s).sum();
    let goal = (target_hours.max(0.0) * 3600.0).min(total);
    let mut order: Vec<usize> = (0..utts.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut indices = Vec::new();
    let mut acc = 0.0;
    for i in order {
        if acc >= goal && !indices.is_empty() {
            break;
        }
        acc += utts[i].duration_s;
        indices.push(i);
    }
    if goal <= 0.0 && total > 0.0 && indices.len() > 1 {
        indices.truncate(1);
        acc = utts[indices[0]].duration_s;
    }
    Selection {
        indices,
        duration_s: acc,
    }
}

/// Reads a manifest, selects a subset and loads the DSEM files it points at.
pub fn subsample_for_training(
    manifest_path: impl AsRef<Path>,
    target_hours: f64,
    seed: u64,
) -> Result<FrameSample> {
    let manifest_path = manifest_path.as_ref();
    let utts = read_manifest(manifest_path)?;
    if utts.is_empty() {
        log::warn!("{} lists no utterances", manifest_path.display());
        return Ok(FrameSample {
            warning: Some(format!("empty manifest {}", manifest_path.display())),
            ..FrameSample::default()
        });
    }
    let sel = select_for_training(&utts, target_hours, seed);
    let mut sample = FrameSample::default();
    for &i in &sel.indices {
        let seq = read_embedding_file(resolve_source(manifest_path, &utts[i]))?;
        if sample.dim != 0 && seq.dim() != sample.dim {
            return Err(Error::Dimension(format!(
                "{} has {}-dim frames, expected {}",
                utts[i].utt_id,
                seq.dim(),
                sample.dim
            )));
        }
        sample.dim = seq.dim();
        sample.frames.extend_from_slice(seq.frames());
        sample.utt_ids.push(utts[i].utt_id.clone());
    }
    sample.duration_s = sel.duration_s;
    Ok(sample)
}
