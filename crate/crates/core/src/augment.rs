//! Training-time augmentation of embedded token sequences: time warping,
//! time masking, embedding-dimension masking and additive Gaussian noise.
//!
//! Every transform is sampled up front into an [`AugmentPlan`] which can be
//! applied to a plain tensor or recorded on the autodiff tape; both paths
//! produce the same values.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbank::{sample_span, Span};
use crate::numerics::{Graph, RowMix, Tensor, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub enabled: bool,
    pub warp_window: usize,
    pub time_masks_min: usize,
    pub time_masks_max: usize,
    pub time_mask_max: usize,
    pub emb_mask_max: usize,
    pub emb_masks: usize,
    pub noise_prob: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            warp_window: 40,
            time_masks_min: 1,
            time_masks_max: 3,
            time_mask_max: 40,
            emb_mask_max: 20,
            emb_masks: 2,
            noise_prob: 0.5,
            noise_std: 1.0,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.noise_prob) {
            return Err(Error::Config(format!("noise_prob {} outside [0, 1]", self.noise_prob)));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::Config(format!("noise_std {} must be finite and >= 0", self.noise_std)));
        }
        if self.time_masks_min > self.time_masks_max {
            return Err(Error::Config(format!(
                "time mask count range [{}, {}] is empty",
                self.time_masks_min, self.time_masks_max
            )));
        }
        Ok(())
    }
}

/// Stable per-utterance seed (FNV-1a over the global seed, id and epoch).
pub fn utterance_seed(global: u64, utt_id: &str, epoch: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut feed = |b: u8| {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    };
    global.to_le_bytes().into_iter().for_each(&mut feed);
    utt_id.bytes().for_each(&mut feed);
    feed(0xff);
    epoch.to_le_bytes().into_iter().for_each(&mut feed);
    h
}

/// Row mix that resamples `[0, c]` onto `[0, c+d]` and `[c, T-1]` onto
/// `[c+d, T-1]`; the first and last frames stay anchored.
pub fn warp_mix(t: usize, c: usize, d: isize) -> RowMix {
    let target = (c as isize + d) as f64;
    let (c, last) = (c as f64, (t - 1) as f64);
    RowMix::linear(t, t, |j| {
        let j = j as f64;
        if j < target {
            j * c / target
        } else if last > target {
            c + (j - target) * (last - c) / (last - target)
        } else {
            last
        }
    })
}

/// Every masked row becomes the mean of all input rows.
pub fn mean_fill_mix(t: usize, spans: &[Span]) -> RowMix {
    let mean: Vec<(usize, f64)> = (0..t).map(|i| (i, 1.0 / t as f64)).collect();
    let rows = (0..t)
        .map(|j| {
            if spans.iter().any(|s| j >= s.start && j < s.start + s.width) {
                mean.clone()
            } else {
                vec![(j, 1.0)]
            }
        })
        .collect();
    RowMix { n_in: t, rows }
}

/// Sampled augmentation for one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentPlan {
    pub frames: usize,
    pub dim: usize,
    /// Warp centre and displacement.
    pub warp: Option<(usize, isize)>,
    pub time_spans: Vec<Span>,
    pub bands: Vec<Span>,
    pub noise: Option<Vec<f64>>,
}

impl AugmentPlan {
    pub fn identity(frames: usize, dim: usize) -> Self {
        Self {
            frames,
            dim,
            warp: None,
            time_spans: Vec::new(),
            bands: Vec::new(),
            noise: None,
        }
    }

    /// Draws, in order, the warp, the time masks, the embedding bands and
    /// the noise from one seeded stream.
    pub fn sample(cfg: &AugmentConfig, frames: usize, dim: usize, seed: u64) -> Self {
        if !cfg.enabled {
            return Self::identity(frames, dim);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let warp = sample_warp(&mut rng, frames, cfg.warp_window);
        let n = rng.gen_range(cfg.time_masks_min..=cfg.time_masks_max);
        let time_spans = (0..n).map(|_| sample_span(&mut rng, frames, cfg.time_mask_max)).collect();
        let bands = (0..cfg.emb_masks).map(|_| sample_span(&mut rng, dim, cfg.emb_mask_max)).collect();
        let noise = sample_noise(&mut rng, frames * dim, cfg.noise_prob, cfg.noise_std);
        Self {
            frames,
            dim,
            warp,
            time_spans,
            bands,
            noise,
        }
    }

    fn check(&self, rows: usize, cols: usize) -> Result<()> {
        if (rows, cols) != (self.frames, self.dim) {
            return Err(Error::Dimension(format!(
                "plan for {}x{} applied to {rows}x{cols}",
                self.frames, self.dim
            )));
        }
        Ok(())
    }

    fn keep(&self) -> Option<Vec<bool>> {
        let mut keep = vec![true; self.dim];
        let mut any = false;
        for b in &self.bands {
            for k in &mut keep[b.start..b.start + b.width] {
                *k = false;
                any = true;
            }
        }
        any.then_some(keep)
    }

    fn masks_time(&self) -> bool {
        self.time_spans.iter().any(|s| s.width > 0)
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        let (t, d) = (x.rows(), x.cols());
        self.check(t, d)?;
        let mut data = x.data().to_vec();
        if let Some((c, off)) = self.warp {
            data = warp_mix(t, c, off).apply(&data, d);
        }
        if self.masks_time() {
            data = mean_fill_mix(t, &self.time_spans).apply(&data, d);
        }
        if let Some(keep) = self.keep() {
            for row in data.chunks_mut(d) {
                for (v, k) in row.iter_mut().zip(&keep) {
                    if !k {
                        *v = 0.0;
                    }
                }
            }
        }
        if let Some(noise) = &self.noise {
            data.iter_mut().zip(noise).for_each(|(v, n)| *v += n);
        }
        Tensor::new(vec![t, d], data)
    }

    pub fn apply_graph(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let (t, d) = g.shape(x);
        self.check(t, d)?;
        let mut v = x;
        if let Some((c, off)) = self.warp {
            v = g.row_mix(v, Arc::new(warp_mix(t, c, off)))?;
        }
        if self.masks_time() {
            v = g.row_mix(v, Arc::new(mean_fill_mix(t, &self.time_spans)))?;
        }
        if let Some(keep) = self.keep() {
            v = g.col_mask(v, keep)?;
        }
        if let Some(noise) = &self.noise {
            v = g.add_const(v, noise)?;
        }
        Ok(v)
    }
}

fn sample_warp(rng: &mut impl Rng, t: usize, w: usize) -> Option<(usize, isize)> {
    if w == 0 || t <= 2 * w {
        return None;
    }
    let c = rng.gen_range(w..t - w);
    let lo = -(w as isize).min(c as isize - 1);
    let d = rng.gen_range(lo..=w as isize);
    (d != 0).then_some((c, d))
}

fn sample_noise(rng: &mut impl Rng, n: usize, prob: f64, std: f64) -> Option<Vec<f64>> {
    if !rng.gen_bool(prob) || std == 0.0 {
        return None;
    }
    let normal = Normal::new(0.0, std).expect("validated std");
    Some((0..n).map(|_| normal.sample(rng)).collect())
}

/// Warp with a seeded centre in `[W, T−W)` and displacement in `[−W, W]`.
pub fn time_warp(x: &Tensor, w: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match sample_warp(&mut rng, x.rows(), w) {
        None => x.clone(),
        Some((c, d)) => time_warp_at(x, c, d),
    }
}

pub fn time_warp_at(x: &Tensor, c: usize, d: isize) -> Tensor {
    let mix = warp_mix(x.rows(), c, d);
    Tensor::new(x.shape().to_vec(), mix.apply(x.data(), x.cols())).expect("shape preserved")
}

/// Replaces `n_masks` random spans with the utterance mean; returns the
/// spans used.
pub fn time_mask(x: &Tensor, n_masks: usize, max_width: usize, seed: u64) -> (Tensor, Vec<Span>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spans: Vec<Span> = (0..n_masks).map(|_| sample_span(&mut rng, x.rows(), max_width)).collect();
    let plan = AugmentPlan {
        time_spans: spans.clone(),
        ..AugmentPlan::identity(x.rows(), x.cols())
    };
    (plan.apply(x).expect("shape matches"), spans)
}

/// Zeroes two independent channel bands; returns the bands used.
pub fn embedding_mask(x: &Tensor, max_width: usize, seed: u64) -> (Tensor, Vec<Span>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bands: Vec<Span> = (0..2).map(|_| sample_span(&mut rng, x.cols(), max_width)).collect();
    let plan = AugmentPlan {
        bands: bands.clone(),
        ..AugmentPlan::identity(x.rows(), x.cols())
    };
    (plan.apply(x).expect("shape matches"), bands)
}

pub fn add_gaussian_noise(x: &Tensor, prob: f64, std: f64, seed: u64) -> Result<Tensor> {
    if !(0.0..=1.0).contains(&prob) || !(std >= 0.0) {
        return Err(Error::Config(format!("invalid noise prob {prob} / std {std}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plan = AugmentPlan {
        noise: sample_noise(&mut rng, x.len(), prob, std),
        ..AugmentPlan::identity(x.rows(), x.cols())
    };
    plan.apply(x)
}
