use rand::Rng;

use crate::error::Result;
use crate::numerics::{Graph, ParamId, ParamStore, Var};

/// `x·W + b` with `W` stored as `in × out`.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub n_in: usize,
    pub n_out: usize,
}

impl Linear {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, n_in: usize, n_out: usize, rng: &mut R) -> Result<Self> {
        let bound = 1.0 / (n_in as f64).sqrt();
        Ok(Self {
            w: store.add_uniform(format!("{name}.w"), vec![n_in, n_out], bound, rng)?,
            b: store.add_const(format!("{name}.b"), vec![n_out], 0.0)?,
            n_in,
            n_out,
        })
    }

    pub fn zeroed(store: &mut ParamStore, name: &str, n_in: usize, n_out: usize) -> Result<Self> {
        Ok(Self {
            w: store.add_const(format!("{name}.w"), vec![n_in, n_out], 0.0)?,
            b: store.add_const(format!("{name}.b"), vec![n_out], 0.0)?,
            n_in,
            n_out,
        })
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let (w, b) = (g.param(self.w), g.param(self.b));
        g.affine(x, w, b)
    }

    /// Plain single-row evaluation used by the decoders.
    pub fn apply_row(&self, store: &ParamStore, x: &[f64]) -> Vec<f64> {
        let w = store.get(self.w).value.data();
        let mut out = store.get(self.b).value.data().to_vec();
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (o, wv) in out.iter_mut().zip(&w[i * self.n_out..(i + 1) * self.n_out]) {
                *o += xi * wv;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Result<Self> {
        Ok(Self {
            gamma: store.add_const(format!("{name}.gamma"), vec![dim], 1.0)?,
            beta: store.add_const(format!("{name}.beta"), vec![dim], 0.0)?,
        })
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let (gm, bt) = (g.param(self.gamma), g.param(self.beta));
        g.layer_norm(x, gm, bt)
    }
}
