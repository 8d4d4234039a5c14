use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::Linear;
use crate::error::{Error, Result};
use crate::numerics::{Graph, ParamId, ParamStore, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorConfig {
    pub context_size: usize,
    pub embed_dim: usize,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            context_size: 2,
            embed_dim: 512,
        }
    }
}

/// Stateless label predictor: embeddings of the last `context_size` labels,
/// a width-`context_size` convolution, ReLU and an output projection.
/// Missing history is padded with the blank id.
#[derive(Debug, Clone)]
pub struct Predictor {
    pub config: PredictorConfig,
    embed: ParamId,
    conv: Linear,
    out: Linear,
    vocab: usize,
    blank: u32,
}

impl Predictor {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        config: PredictorConfig,
        vocab: usize,
        blank: u32,
        out_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if config.context_size == 0 || config.embed_dim == 0 {
            return Err(Error::Config("predictor context and embedding size must be positive".into()));
        }
        let e = config.embed_dim;
        Ok(Self {
            embed: store.add_uniform("predictor.embed", vec![vocab, e], 0.1, rng)?,
            conv: Linear::new(store, "predictor.conv", e * config.context_size, e, rng)?,
            out: Linear::new(store, "predictor.out", e, out_dim, rng)?,
            config,
            vocab,
            blank,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.out.n_out
    }

    pub fn blank(&self) -> u32 {
        self.blank
    }

    pub fn validate_labels(&self, labels: &[u32]) -> Result<()> {
        for (i, &l) in labels.iter().enumerate() {
            if l == self.blank {
                return Err(Error::Validation(format!("blank id at history position {i}")));
            }
            if l as usize >= self.vocab {
                return Err(Error::Validation(format!(
                    "label {l} at position {i} outside vocabulary of {}",
                    self.vocab
                )));
            }
        }
        Ok(())
    }

    /// Context window (oldest first) seen at position `u` of `labels`.
    pub fn context_at(&self, labels: &[u32], u: usize) -> Vec<u32> {
        let c = self.config.context_size;
        (0..c)
            .map(|k| {
                let back = c - k;
                if u >= back {
                    labels[u - back]
                } else {
                    self.blank
                }
            })
            .collect()
    }

    /// `(U+1) × out_dim`; row `u` depends only on `context_at(labels, u)`.
    pub fn forward(&self, g: &mut Graph, labels: &[u32]) -> Result<Var> {
        self.validate_labels(labels)?;
        let c = self.config.context_size;
        let ctx: Vec<Vec<u32>> = (0..=labels.len()).map(|u| self.context_at(labels, u)).collect();
        let table = g.param(self.embed);
        let mut slots = Vec::with_capacity(c);
        for k in 0..c {
            let ids: Vec<usize> = ctx.iter().map(|w| w[k] as usize).collect();
            slots.push(g.gather(table, &ids)?);
        }
        let cat = if c == 1 { slots[0] } else { g.concat_cols(&slots)? };
        let h = self.conv.forward(g, cat)?;
        let h = g.relu(h);
        self.out.forward(g, h)
    }

    /// Output row for one context window, without building a graph.
    pub fn context_vector(&self, store: &ParamStore, ctx: &[u32]) -> Vec<f64> {
        let e = self.config.embed_dim;
        let table = store.get(self.embed).value.data();
        let mut cat = Vec::with_capacity(e * ctx.len());
        for &id in ctx {
            cat.extend_from_slice(&table[id as usize * e..(id as usize + 1) * e]);
        }
        let mut h = self.conv.apply_row(store, &cat);
        h.iter_mut().for_each(|v| *v = v.max(0.0));
        self.out.apply_row(store, &h)
    }
}
