use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::Linear;
use crate::error::{Error, Result};
use crate::numerics::kernels::log_softmax_rows;
use crate::numerics::{Graph, ParamStore, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JointConfig {
    pub joint_dim: usize,
}

impl Default for JointConfig {
    fn default() -> Self {
        Self { joint_dim: 256 }
    }
}

/// `log_softmax(W_o · ReLU(proj_h(h_t) + proj_f(f_u)))` at every lattice node.
#[derive(Debug, Clone)]
pub struct Joint {
    pub config: JointConfig,
    proj_h: Linear,
    proj_f: Linear,
    out: Linear,
}

impl Joint {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        config: JointConfig,
        enc_dim: usize,
        pred_dim: usize,
        vocab: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if vocab < 2 {
            return Err(Error::Config(format!("joint needs at least 2 outputs, got {vocab}")));
        }
        let j = config.joint_dim;
        Ok(Self {
            proj_h: Linear::new(store, "joint.proj_h", enc_dim, j, rng)?,
            proj_f: Linear::new(store, "joint.proj_f", pred_dim, j, rng)?,
            out: Linear::new(store, "joint.out", j, vocab, rng)?,
            config,
        })
    }

    pub fn vocab(&self) -> usize {
        self.out.n_out
    }

    /// `(T'·(U+1)) × V` log-probs, row `t·(U+1) + u`.
    pub fn forward(&self, g: &mut Graph, h: Var, f: Var) -> Result<Var> {
        let (hd, fd) = (g.shape(h).1, g.shape(f).1);
        if hd != self.proj_h.n_in || fd != self.proj_f.n_in {
            return Err(Error::Dimension(format!(
                "joint expects encoder/predictor widths {}/{}, got {hd}/{fd}",
                self.proj_h.n_in, self.proj_f.n_in
            )));
        }
        let ph = self.proj_h.forward(g, h)?;
        let pf = self.proj_f.forward(g, f)?;
        let s = g.pair_add(ph, pf)?;
        let s = g.relu(s);
        let logits = self.out.forward(g, s)?;
        g.log_softmax(logits)
    }

    pub fn project_encoder_row(&self, store: &ParamStore, h: &[f64]) -> Vec<f64> {
        self.proj_h.apply_row(store, h)
    }

    pub fn project_predictor_row(&self, store: &ParamStore, f: &[f64]) -> Vec<f64> {
        self.proj_f.apply_row(store, f)
    }

    /// Log-probs at one node from already projected rows.
    pub fn log_probs_from_projected(&self, store: &ParamStore, ph: &[f64], pf: &[f64]) -> Vec<f64> {
        let g: Vec<f64> = ph.iter().zip(pf).map(|(a, b)| (a + b).max(0.0)).collect();
        let logits = self.out.apply_row(store, &g);
        log_softmax_rows(&logits, logits.len())
    }
}
