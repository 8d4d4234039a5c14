//! RNN-T loss: negative log marginal over all monotonic alignments,
//! computed by log-space forward-backward over the `(T × (U+1))` lattice.
//!
//! Node `(t, u)` means "at frame `t`, `u` labels emitted". From there a
//! blank advances to `(t+1, u)` and label `y[u]` advances to `(t, u+1)`.
//! Every complete path ends with a blank emitted at `(T-1, U)`.

use crate::error::{Error, Result};
use crate::numerics::kernels::{log_add_exp, log_sum_exp};
use crate::numerics::Tensor;

/// Forward/backward variables of one utterance.
#[derive(Debug, Clone)]
pub struct RnntLattice {
    pub frames: usize,
    /// `U + 1`
    pub positions: usize,
    pub log_blank: Vec<f64>,
    pub log_label: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// `-log P(y|x)` from the forward variables.
    pub loss: f64,
    /// Same quantity from the backward variables.
    pub loss_backward: f64,
}

impl RnntLattice {
    /// Builds the lattice from a `(T·(U+1)) × V` log-prob matrix.
    pub fn compute(log_probs: &[f64], frames: usize, vocab: usize, labels: &[u32], blank: u32) -> Result<Self> {
        validate(log_probs.len(), frames, vocab, labels, blank)?;
        let positions = labels.len() + 1;
        let n = frames * positions;
        let idx = |t: usize, u: usize| t * positions + u;

        let mut log_blank = vec![0.0; n];
        let mut log_label = vec![f64::NEG_INFINITY; n];
        for t in 0..frames {
            for u in 0..positions {
                let row = &log_probs[idx(t, u) * vocab..(idx(t, u) + 1) * vocab];
                log_blank[idx(t, u)] = row[blank as usize];
                if u < labels.len() {
                    log_label[idx(t, u)] = row[labels[u] as usize];
                }
            }
        }

        let mut alpha = vec![f64::NEG_INFINITY; n];
        alpha[0] = 0.0;
        for t in 0..frames {
            for u in 0..positions {
                if t == 0 && u == 0 {
                    continue;
                }
                let from_blank = if t > 0 {
                    alpha[idx(t - 1, u)] + log_blank[idx(t - 1, u)]
                } else {
                    f64::NEG_INFINITY
                };
                let from_label = if u > 0 {
                    alpha[idx(t, u - 1)] + log_label[idx(t, u - 1)]
                } else {
                    f64::NEG_INFINITY
                };
                alpha[idx(t, u)] = log_add_exp(from_blank, from_label);
            }
        }

        let (tl, ul) = (frames - 1, positions - 1);
        let mut beta = vec![f64::NEG_INFINITY; n];
        beta[idx(tl, ul)] = log_blank[idx(tl, ul)];
        for t in (0..frames).rev() {
            for u in (0..positions).rev() {
                if t == tl && u == ul {
                    continue;
                }
                let via_blank = if t < tl {
                    beta[idx(t + 1, u)] + log_blank[idx(t, u)]
                } else {
                    f64::NEG_INFINITY
                };
                let via_label = if u < ul {
                    beta[idx(t, u + 1)] + log_label[idx(t, u)]
                } else {
                    f64::NEG_INFINITY
                };
                beta[idx(t, u)] = log_add_exp(via_blank, via_label);
            }
        }

        let loss = -(alpha[idx(tl, ul)] + log_blank[idx(tl, ul)]);
        let loss_backward = -beta[0];
        Ok(Self {
            frames,
            positions,
            log_blank,
            log_label,
            alpha,
            beta,
            loss,
            loss_backward,
        })
    }

    /// Gradient of the loss with respect to the `(T·(U+1)) × V` log-probs.
    ///
    /// Only the blank entry and the next-label entry of each node are
    /// non-zero: each is minus the posterior occupancy of that transition.
    pub fn grad(&self, vocab: usize, labels: &[u32], blank: u32) -> Vec<f64> {
        let positions = self.positions;
        let idx = |t: usize, u: usize| t * positions + u;
        let (tl, ul) = (self.frames - 1, positions - 1);
        let log_z = -self.loss;
        let mut grad = vec![0.0; self.frames * positions * vocab];
        if !log_z.is_finite() {
            return grad;
        }
        for t in 0..self.frames {
            for u in 0..positions {
                let a = self.alpha[idx(t, u)];
                if a == f64::NEG_INFINITY {
                    continue;
                }
                let base = idx(t, u) * vocab;
                let after_blank = if t < tl {
                    self.beta[idx(t + 1, u)]
                } else if u == ul {
                    0.0
                } else {
                    f64::NEG_INFINITY
                };
                grad[base + blank as usize] = -(a + self.log_blank[idx(t, u)] + after_blank - log_z).exp();
                if u < ul {
                    let after_label = self.beta[idx(t, u + 1)];
                    grad[base + labels[u] as usize] -=
                        (a + self.log_label[idx(t, u)] + after_label - log_z).exp();
                }
            }
        }
        grad
    }

    pub fn alpha_at(&self, t: usize, u: usize) -> f64 {
        self.alpha[t * self.positions + u]
    }

    pub fn beta_at(&self, t: usize, u: usize) -> f64 {
        self.beta[t * self.positions + u]
    }
}

fn validate(len: usize, frames: usize, vocab: usize, labels: &[u32], blank: u32) -> Result<()> {
    if frames == 0 {
        return Err(Error::Length("RNN-T lattice needs at least one frame".into()));
    }
    if vocab < 2 || blank as usize >= vocab {
        return Err(Error::Validation(format!(
            "blank {blank} invalid for vocabulary of {vocab}"
        )));
    }
    if len != frames * (labels.len() + 1) * vocab {
        return Err(Error::Dimension(format!(
            "log-probs of length {len} do not match {frames} x {} x {vocab}",
            labels.len() + 1
        )));
    }
    for (i, &y) in labels.iter().enumerate() {
        if y == blank {
            return Err(Error::Validation(format!("label {i} is the blank symbol")));
        }
        if y as usize >= vocab {
            return Err(Error::Validation(format!(
                "label {i} = {y} outside vocabulary of {vocab}"
            )));
        }
    }
    Ok(())
}

/// Loss and gradient on a flat `(T·(U+1)) × V` buffer.
#[derive(Debug, Clone)]
pub struct RnntOutput {
    pub loss: f64,
    pub grad: Vec<f64>,
}

pub fn rnnt_loss_raw(log_probs: &[f64], frames: usize, vocab: usize, labels: &[u32], blank: u32) -> Result<RnntOutput> {
    let lattice = RnntLattice::compute(log_probs, frames, vocab, labels, blank)?;
    let grad = lattice.grad(vocab, labels, blank);
    Ok(RnntOutput {
        loss: lattice.loss,
        grad,
    })
}

/// RNN-T loss of a `T × (U+1) × V` log-prob tensor, returning the gradient
/// with respect to those log-probs in the same shape.
pub fn rnnt_loss(log_probs: &Tensor, labels: &[u32], blank: u32) -> Result<(f64, Tensor)> {
    let shape = log_probs.shape();
    if shape.len() != 3 || shape[1] != labels.len() + 1 {
        return Err(Error::Dimension(format!(
            "expected log-probs of shape [T, {}, V], got {shape:?}",
            labels.len() + 1
        )));
    }
    let out = rnnt_loss_raw(log_probs.data(), shape[0], shape[2], labels, blank)?;
    Ok((out.loss, Tensor::new(shape.to_vec(), out.grad)?))
}

/// Largest `T + U` accepted by [`alignment_oracle`].
pub const ORACLE_MAX_SPAN: usize = 12;

/// Brute-force RNN-T loss: enumerates every monotone alignment path and
/// sums their probabilities. Exponential; meant for checking the DP.
pub fn alignment_oracle(log_probs: &Tensor, labels: &[u32], blank: u32) -> Result<f64> {
    let shape = log_probs.shape();
    if shape.len() != 3 || shape[1] != labels.len() + 1 {
        return Err(Error::Dimension(format!(
            "expected log-probs of shape [T, {}, V], got {shape:?}",
            labels.len() + 1
        )));
    }
    let (frames, vocab) = (shape[0], shape[2]);
    if frames + labels.len() > ORACLE_MAX_SPAN {
        return Err(Error::Capacity(format!(
            "enumeration limited to T + U <= {ORACLE_MAX_SPAN}, got {}",
            frames + labels.len()
        )));
    }
    validate(log_probs.len(), frames, vocab, labels, blank)?;
    let lp = |t: usize, u: usize, v: u32| {
        log_probs.data()[(t * (labels.len() + 1) + u) * vocab + v as usize]
    };

    let mut scores = Vec::new();
    let mut stack = vec![(0usize, 0usize, 0.0f64)];
    while let Some((t, u, s)) = stack.pop() {
        if t == frames - 1 && u == labels.len() {
            scores.push(s + lp(t, u, blank));
            continue;
        }
        if t + 1 < frames {
            stack.push((t + 1, u, s + lp(t, u, blank)));
        }
        if u < labels.len() {
            stack.push((t, u + 1, s + lp(t, u, labels[u])));
        }
    }
    Ok(-log_sum_exp(&scores))
}
