use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Codebook;
use crate::corpus::{EmbeddingSequence, TokenSequence};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum KmeansMode {
    /// Lloyd iterations over the whole sample.
    Full,
    /// Sculley-style mini-batch updates.
    MiniBatch { batch: usize, epochs: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub tol: f64,
    pub mode: KmeansMode,
    /// Independent k-means++ restarts; the run with the lowest final
    /// inertia is kept.
    pub n_init: usize,
}

impl KmeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            max_iters: 100,
            tol: 1e-4,
            mode: KmeansMode::Full,
            n_init: 10,
        }
    }

    pub fn mini_batch() -> KmeansMode {
        KmeansMode::MiniBatch {
            batch: 4096,
            epochs: 10,
        }
    }
}

fn sq_dist<A: Copy + Into<f64>>(x: &[A], c: &[f64]) -> f64 {
    x.iter()
        .zip(c)
        .map(|(a, b)| {
            let d = (*a).into() - b;
            d * d
        })
        .sum()
}

/// Index and squared distance of the closest centroid; ties go to the
/// lowest index.
pub fn nearest_centroid<A: Copy + Into<f64>>(x: &[A], centroids: &[f64], dim: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.chunks(dim).enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn count_distinct(points: &[f32], dim: usize, cap: usize) -> usize {
    let mut seen = HashSet::new();
    for p in points.chunks(dim) {
        // +0.0 and -0.0 are the same location
        let key: Vec<u32> = p.iter().map(|v| (v + 0.0).to_bits()).collect();
        seen.insert(key);
        if seen.len() >= cap {
            break;
        }
    }
    seen.len()
}

fn kmeans_pp(points: &[f32], dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = points.len() / dim;
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.gen_range(0..n);
    centroids.extend(points[first * dim..(first + 1) * dim].iter().map(|v| *v as f64));
    let mut d2: Vec<f64> = points
        .par_chunks(dim)
        .map(|p| sq_dist(p, &centroids[..dim]))
        .collect();
    while centroids.len() < k * dim {
        let total: f64 = d2.iter().sum();
        let mut target = rng.gen::<f64>() * total;
        let mut pick = n - 1;
        for (i, d) in d2.iter().enumerate() {
            if *d > 0.0 && target < *d {
                pick = i;
                break;
            }
            target -= d;
        }
        if d2[pick] == 0.0 {
            // Rounding walked past the end; take the last point still uncovered.
            pick = d2.iter().rposition(|d| *d > 0.0).expect("distinct points remain");
        }
        let start = centroids.len();
        centroids.extend(points[pick * dim..(pick + 1) * dim].iter().map(|v| *v as f64));
        let c = centroids[start..].to_vec();
        d2.par_iter_mut()
            .zip(points.par_chunks(dim))
            .for_each(|(d, p)| *d = d.min(sq_dist(p, &c)));
    }
    centroids
}

fn assign_all(points: &[f32], centroids: &[f64], dim: usize) -> (Vec<usize>, Vec<f64>) {
    points
        .par_chunks(dim)
        .map(|p| nearest_centroid(p, centroids, dim))
        .unzip()
}

/// Trains a codebook with k-means++ seeding followed by Lloyd iterations
/// (or mini-batch updates). `points` is a flat `N × dim` buffer.
pub fn kmeans_train(points: &[f32], dim: usize, cfg: &KmeansConfig) -> Result<Codebook> {
    if cfg.k == 0 {
        return Err(Error::Config("k-means needs K >= 1".into()));
    }
    if dim == 0 || points.len() % dim != 0 {
        return Err(Error::Dimension(format!(
            "{} values do not form rows of dimension {dim}",
            points.len()
        )));
    }
    let distinct = count_distinct(points, dim, cfg.k);
    if distinct < cfg.k {
        return Err(Error::Capacity(format!(
            "{distinct} distinct points cannot support K = {}",
            cfg.k
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    for _ in 0..cfg.n_init.max(1) {
        let mut centroids = kmeans_pp(points, dim, cfg.k, &mut rng);
        let history = match cfg.mode {
            KmeansMode::Full => lloyd(points, dim, cfg, &mut centroids)?,
            KmeansMode::MiniBatch { batch, epochs } => {
                mini_batch(points, dim, batch, epochs, &mut rng, &mut centroids)
            }
        };
        let (_, dists) = assign_all(points, &centroids, dim);
        let inertia: f64 = dists.iter().sum();
        if best.as_ref().is_none_or(|(b, _, _)| inertia < *b) {
            best = Some((inertia, centroids, history));
        }
    }
    let (_, centroids, history) = best.expect("at least one restart");
    let mut cb = Codebook::new(
        centroids.iter().map(|v| *v as f32).collect(),
        cfg.k,
        dim,
        String::new(),
    )?;
    cb.inertia_history = history;
    Ok(cb)
}

fn lloyd(points: &[f32], dim: usize, cfg: &KmeansConfig, centroids: &mut [f64]) -> Result<Vec<f64>> {
    let k = cfg.k;
    let mut history: Vec<f64> = Vec::new();
    loop {
        let (labels, dists) = assign_all(points, centroids, dim);
        let inertia: f64 = dists.iter().sum();
        if let Some(&prev) = history.last() {
            // Exact arithmetic guarantees a non-increasing objective; allow
            // only rounding-level noise.
            if inertia > prev * (1.0 + 1e-12) + 1e-300 {
                return Err(Error::Numeric(format!(
                    "k-means inertia increased from {prev} to {inertia}"
                )));
            }
        }
        let converged = history
            .last()
            .is_some_and(|&prev| prev <= 0.0 || (prev - inertia) <= cfg.tol * prev);
        history.push(inertia);
        if converged || history.len() >= cfg.max_iters.max(1) {
            break;
        }

        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.chunks(dim).zip(&labels) {
            counts[c] += 1;
            for (s, v) in sums[c * dim..(c + 1) * dim].iter_mut().zip(p) {
                *s += *v as f64;
            }
        }
        let mut dists = dists;
        for c in 0..k {
            let row = &mut centroids[c * dim..(c + 1) * dim];
            if counts[c] > 0 {
                for (r, s) in row.iter_mut().zip(&sums[c * dim..(c + 1) * dim]) {
                    *r = s / counts[c] as f64;
                }
            } else {
                let (far, _) = dists
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, d)| if *d > best.1 { (i, *d) } else { best });
                for (r, v) in row.iter_mut().zip(&points[far * dim..(far + 1) * dim]) {
                    *r = *v as f64;
                }
                dists[far] = 0.0;
            }
        }
    }
    Ok(history)
}

fn mini_batch(
    points: &[f32],
    dim: usize,
    batch: usize,
    epochs: usize,
    rng: &mut ChaCha8Rng,
    centroids: &mut [f64],
) -> Vec<f64> {
    let n = points.len() / dim;
    let k = centroids.len() / dim;
    let mut counts = vec![0u64; k];
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        order.shuffle(rng);
        for chunk in order.chunks(batch.max(1)) {
            let labels: Vec<usize> = chunk
                .iter()
                .map(|&i| nearest_centroid(&points[i * dim..(i + 1) * dim], centroids, dim).0)
                .collect();
            for (&i, &c) in chunk.iter().zip(&labels) {
                counts[c] += 1;
                let eta = 1.0 / counts[c] as f64;
                let row = &mut centroids[c * dim..(c + 1) * dim];
                for (r, v) in row.iter_mut().zip(&points[i * dim..(i + 1) * dim]) {
                    *r += eta * (*v as f64 - *r);
                }
            }
        }
        let (_, dists) = assign_all(points, centroids, dim);
        history.push(dists.iter().sum());
    }
    history
}

/// Maps every frame to its nearest centroid.
pub fn assign(seq: &EmbeddingSequence, cb: &Codebook) -> Result<TokenSequence> {
    if seq.dim() != cb.dim() {
        return Err(Error::Dimension(format!(
            "embedding dimension {} vs codebook dimension {}",
            seq.dim(),
            cb.dim()
        )));
    }
    let centroids: Vec<f64> = cb.centroids().iter().map(|v| *v as f64).collect();
    let tokens: Vec<u32> = seq
        .frames()
        .par_chunks(cb.dim())
        .map(|f| nearest_centroid(f, &centroids, cb.dim()).0 as u32)
        .collect();
    TokenSequence::new(vec![tokens], vec![cb.k() as u32], seq.frame_rate_hz)
}
