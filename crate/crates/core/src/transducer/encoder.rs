use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{LayerNorm, Linear};
use crate::error::{Error, Result};
use crate::numerics::{Graph, ParamId, ParamStore, RowMix, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackConfig {
    pub factor: usize,
    pub n_blocks: usize,
    pub d_model: usize,
    pub n_heads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub input_dim: usize,
    /// Width of the residual stream between stacks and of the output.
    pub d_model: usize,
    pub stacks: Vec<StackConfig>,
    pub conv_kernel: usize,
    pub ffn_mult: usize,
    /// Longest input (in input frames) the positional tables cover.
    pub max_len: usize,
    /// Final output subsampling.
    pub output_factor: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self::uniform(80, 96, 4, &[1, 2, 4, 8, 4, 2])
    }
}

impl EncoderConfig {
    pub fn uniform(input_dim: usize, d_model: usize, n_heads: usize, factors: &[usize]) -> Self {
        Self {
            input_dim,
            d_model,
            stacks: factors
                .iter()
                .map(|&factor| StackConfig {
                    factor,
                    n_blocks: 1,
                    d_model,
                    n_heads,
                })
                .collect(),
            conv_kernel: 15,
            ffn_mult: 4,
            max_len: 2048,
            output_factor: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.d_model == 0 || self.output_factor == 0 {
            return Err(Error::Config("encoder dimensions and output factor must be positive".into()));
        }
        if self.conv_kernel == 0 || self.conv_kernel % 2 == 0 {
            return Err(Error::Config(format!("conv kernel {} must be odd", self.conv_kernel)));
        }
        for (i, s) in self.stacks.iter().enumerate() {
            if s.factor == 0 || s.d_model == 0 || s.n_heads == 0 {
                return Err(Error::Config(format!("stack {i}: factor, d_model and heads must be positive")));
            }
            if s.d_model % s.n_heads != 0 {
                return Err(Error::Config(format!(
                    "stack {i}: d_model {} not divisible by {} heads",
                    s.d_model, s.n_heads
                )));
            }
        }
        Ok(())
    }

    pub fn min_frames(&self) -> usize {
        self.stacks.iter().map(|s| s.factor).max().unwrap_or(1).max(self.output_factor)
    }

    pub fn output_len(&self, t: usize) -> usize {
        t.div_ceil(self.output_factor)
    }
}

#[derive(Debug, Clone)]
struct Block {
    ln_attn: LayerNorm,
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    ln_conv: LayerNorm,
    conv_k: ParamId,
    conv_b: ParamId,
    conv_out: Linear,
    ln_ffn: LayerNorm,
    ffn_in: Linear,
    ffn_out: Linear,
    heads: usize,
}

impl Block {
    fn new<R: Rng>(store: &mut ParamStore, name: &str, d: usize, heads: usize, cfg: &EncoderConfig, rng: &mut R) -> Result<Self> {
        let kb = 1.0 / (cfg.conv_kernel as f64).sqrt();
        Ok(Self {
            ln_attn: LayerNorm::new(store, &format!("{name}.attn.ln"), d)?,
            q: Linear::new(store, &format!("{name}.attn.q"), d, d, rng)?,
            k: Linear::new(store, &format!("{name}.attn.k"), d, d, rng)?,
            v: Linear::new(store, &format!("{name}.attn.v"), d, d, rng)?,
            o: Linear::new(store, &format!("{name}.attn.o"), d, d, rng)?,
            ln_conv: LayerNorm::new(store, &format!("{name}.conv.ln"), d)?,
            conv_k: store.add_uniform(format!("{name}.conv.kernel"), vec![cfg.conv_kernel, d], kb, rng)?,
            conv_b: store.add_const(format!("{name}.conv.bias"), vec![d], 0.0)?,
            conv_out: Linear::new(store, &format!("{name}.conv.out"), d, d, rng)?,
            ln_ffn: LayerNorm::new(store, &format!("{name}.ffn.ln"), d)?,
            ffn_in: Linear::new(store, &format!("{name}.ffn.in"), d, d * cfg.ffn_mult, rng)?,
            ffn_out: Linear::new(store, &format!("{name}.ffn.out"), d * cfg.ffn_mult, d, rng)?,
            heads,
        })
    }

    fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let d = g.shape(x).1;
        let dh = d / self.heads;

        let n = self.ln_attn.forward(g, x)?;
        let (q, k, v) = (self.q.forward(g, n)?, self.k.forward(g, n)?, self.v.forward(g, n)?);
        let mut heads = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = g.slice_cols(q, h * dh, dh)?;
            let kh = g.slice_cols(k, h * dh, dh)?;
            let vh = g.slice_cols(v, h * dh, dh)?;
            let s = g.matmul_nt(qh, kh)?;
            let s = g.scale(s, 1.0 / (dh as f64).sqrt());
            let a = g.softmax(s);
            heads.push(g.matmul(a, vh)?);
        }
        let cat = if heads.len() == 1 { heads[0] } else { g.concat_cols(&heads)? };
        let att = self.o.forward(g, cat)?;
        let x = g.add(x, att)?;

        let n = self.ln_conv.forward(g, x)?;
        let (kk, kb) = (g.param(self.conv_k), g.param(self.conv_b));
        let c = g.depthwise_conv(n, kk, kb)?;
        let c = g.relu(c);
        let c = self.conv_out.forward(g, c)?;
        let x = g.add(x, c)?;

        let n = self.ln_ffn.forward(g, x)?;
        let f = self.ffn_in.forward(g, n)?;
        let f = g.relu(f);
        let f = self.ffn_out.forward(g, f)?;
        g.add(x, f)
    }
}

#[derive(Debug, Clone)]
struct Stack {
    factor: usize,
    pos: ParamId,
    proj: Option<(Linear, Linear)>,
    blocks: Vec<Block>,
}

/// Multi-rate encoder: each stack pools the residual stream down by its
/// factor, runs its blocks, and adds the upsampled change back.
#[derive(Debug, Clone)]
pub struct Encoder {
    pub config: EncoderConfig,
    input: Linear,
    stacks: Vec<Stack>,
    final_ln: LayerNorm,
}

impl Encoder {
    pub fn new<R: Rng>(store: &mut ParamStore, config: EncoderConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let input = Linear::new(store, "encoder.input", config.input_dim, d, rng)?;
        let mut stacks = Vec::with_capacity(config.stacks.len());
        for (i, s) in config.stacks.iter().enumerate() {
            let name = format!("encoder.stack{i}");
            let proj = if s.d_model != d {
                Some((
                    Linear::new(store, &format!("{name}.proj_in"), d, s.d_model, rng)?,
                    Linear::new(store, &format!("{name}.proj_out"), s.d_model, d, rng)?,
                ))
            } else {
                None
            };
            let rows = config.max_len.div_ceil(s.factor);
            let pos = store.add_uniform(format!("{name}.pos"), vec![rows, s.d_model], 0.02, rng)?;
            let blocks = (0..s.n_blocks)
                .map(|b| Block::new(store, &format!("{name}.block{b}"), s.d_model, s.n_heads, &config, rng))
                .collect::<Result<Vec<_>>>()?;
            stacks.push(Stack {
                factor: s.factor,
                pos,
                proj,
                blocks,
            });
        }
        let final_ln = LayerNorm::new(store, "encoder.final_ln", d)?;
        Ok(Self {
            config,
            input,
            stacks,
            final_ln,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.config.d_model
    }

    /// `T × input_dim` → `ceil(T / output_factor) × d_model`.
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let (t, dim) = g.shape(x);
        if dim != self.config.input_dim {
            return Err(Error::Dimension(format!(
                "encoder expects {}-dim input, got {dim}",
                self.config.input_dim
            )));
        }
        let min = self.config.min_frames();
        if t < min {
            return Err(Error::Length(format!("encoder needs at least {min} frames, got {t}")));
        }
        if t > self.config.max_len {
            return Err(Error::Length(format!(
                "encoder positional tables cover {} frames, got {t}",
                self.config.max_len
            )));
        }
        let mut h = self.input.forward(g, x)?;
        for s in &self.stacks {
            let down = if s.factor == 1 {
                h
            } else {
                g.row_mix(h, Arc::new(RowMix::mean_pool(t, s.factor)))?
            };
            let z0 = match &s.proj {
                Some((pin, _)) => pin.forward(g, down)?,
                None => down,
            };
            let ts = g.shape(z0).0;
            let pos_table = g.param(s.pos);
            let ids: Vec<usize> = (0..ts).collect();
            let pos = g.gather(pos_table, &ids)?;
            let mut z = g.add(z0, pos)?;
            for b in &s.blocks {
                z = b.forward(g, z)?;
            }
            let mut delta = g.sub(z, z0)?;
            if let Some((_, pout)) = &s.proj {
                delta = pout.forward(g, delta)?;
            }
            let up = if s.factor == 1 {
                delta
            } else {
                g.row_mix(delta, Arc::new(RowMix::repeat(ts, s.factor, t)))?
            };
            h = g.add(h, up)?;
        }
        let h = self.final_ln.forward(g, h)?;
        if self.config.output_factor == 1 {
            return Ok(h);
        }
        g.row_mix(h, Arc::new(RowMix::mean_pool(t, self.config.output_factor)))
    }
}
