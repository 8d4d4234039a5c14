//! Token embedding, multi-group fusion and frame-rate interpolation.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::TokenSequence;
use crate::error::{Error, Result};
use crate::numerics::{Graph, ParamId, ParamStore, RowMix, Tensor, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrontendConfig {
    pub dim: usize,
    pub target_rate_hz: f64,
    pub init_bound: f64,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        Self {
            dim: 80,
            target_rate_hz: 100.0,
            init_bound: 0.1,
        }
    }
}

/// `round(T · target / r_in)`, at least one frame.
pub fn interpolated_len(t: usize, r_in: f64, target: f64) -> usize {
    ((t as f64 * target / r_in).round() as usize).max(1)
}

/// Linear resampling from `r_in` to `target` with clamped endpoints.
pub fn interpolation_mix(t: usize, r_in: f64, target: f64) -> Result<RowMix> {
    if t == 0 {
        return Err(Error::EmptyInput("cannot interpolate an empty sequence".into()));
    }
    if !(r_in > 0.0 && target > 0.0) {
        return Err(Error::Config(format!("frame rates must be positive, got {r_in} -> {target}")));
    }
    if r_in == target {
        return Ok(RowMix::identity(t));
    }
    let step = r_in / target;
    Ok(RowMix::linear(t, interpolated_len(t, r_in, target), |j| j as f64 * step))
}

pub fn interpolate_rate(x: &Tensor, r_in: f64, target: f64) -> Result<Tensor> {
    if x.is_empty() {
        return Err(Error::EmptyInput("cannot interpolate an empty sequence".into()));
    }
    let mix = interpolation_mix(x.rows(), r_in, target)?;
    if r_in == target {
        return Ok(x.clone());
    }
    Tensor::new(vec![mix.n_out(), x.cols()], mix.apply(x.data(), x.cols()))
}

/// Per-group embedding tables plus, for several groups, a fusion projection.
#[derive(Debug, Clone)]
pub struct Frontend {
    pub config: FrontendConfig,
    codebook_sizes: Vec<u32>,
    tables: Vec<ParamId>,
    fuse: Option<(ParamId, ParamId)>,
}

impl Frontend {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        codebook_sizes: &[u32],
        config: FrontendConfig,
        rng: &mut R,
    ) -> Result<Self> {
        if codebook_sizes.is_empty() || codebook_sizes.contains(&0) {
            return Err(Error::Config(format!("invalid codebook sizes {codebook_sizes:?}")));
        }
        let d = config.dim;
        let tables = codebook_sizes
            .iter()
            .enumerate()
            .map(|(g, &k)| store.add_uniform(format!("frontend.embed.{g}"), vec![k as usize, d], config.init_bound, rng))
            .collect::<Result<Vec<_>>>()?;
        let fuse = if codebook_sizes.len() > 1 {
            let gd = d * codebook_sizes.len();
            let bound = 1.0 / (gd as f64).sqrt();
            Some((
                store.add_uniform("frontend.fuse.w", vec![gd, d], bound, rng)?,
                store.add_const("frontend.fuse.b", vec![d], 0.0)?,
            ))
        } else {
            None
        };
        Ok(Self {
            config,
            codebook_sizes: codebook_sizes.to_vec(),
            tables,
            fuse,
        })
    }

    /// Re-binds to parameters already present in `store` (e.g. after loading).
    pub fn bind(store: &ParamStore, codebook_sizes: &[u32], config: FrontendConfig) -> Result<Self> {
        let find = |name: String| {
            store
                .id(&name)
                .ok_or_else(|| Error::Format(format!("checkpoint lacks parameter {name}")))
        };
        let tables = (0..codebook_sizes.len())
            .map(|g| find(format!("frontend.embed.{g}")))
            .collect::<Result<Vec<_>>>()?;
        let fuse = if codebook_sizes.len() > 1 {
            Some((find("frontend.fuse.w".into())?, find("frontend.fuse.b".into())?))
        } else {
            None
        };
        Ok(Self {
            config,
            codebook_sizes: codebook_sizes.to_vec(),
            tables,
            fuse,
        })
    }

    pub fn codebook_sizes(&self) -> &[u32] {
        &self.codebook_sizes
    }

    pub fn tables(&self) -> &[ParamId] {
        &self.tables
    }

    /// `T × dim` embedded sequence at the token rate.
    pub fn embed(&self, g: &mut Graph, tokens: &TokenSequence) -> Result<Var> {
        if tokens.num_groups() != self.tables.len() {
            return Err(Error::Validation(format!(
                "{} token groups for a frontend built with {}",
                tokens.num_groups(),
                self.tables.len()
            )));
        }
        if tokens.codebook_sizes() != self.codebook_sizes.as_slice() {
            return Err(Error::Validation(format!(
                "tokens from codebooks of size {:?} for a frontend built for {:?}",
                tokens.codebook_sizes(),
                self.codebook_sizes
            )));
        }
        let mut parts = Vec::with_capacity(self.tables.len());
        for (grp, &table) in self.tables.iter().enumerate() {
            let ids: Vec<usize> = tokens.group(grp).iter().map(|&t| t as usize).collect();
            let tv = g.param(table);
            parts.push(g.gather(tv, &ids)?);
        }
        match self.fuse {
            None => Ok(parts[0]),
            Some((w, b)) => {
                let cat = g.concat_cols(&parts)?;
                let (wv, bv) = (g.param(w), g.param(b));
                g.affine(cat, wv, bv)
            }
        }
    }

    /// Embeds and interpolates to the configured target rate.
    pub fn forward(&self, g: &mut Graph, tokens: &TokenSequence) -> Result<Var> {
        let x = self.embed(g, tokens)?;
        let r_in = tokens.frame_rate_hz() as f64;
        if r_in == self.config.target_rate_hz {
            return Ok(x);
        }
        let mix = interpolation_mix(tokens.num_frames(), r_in, self.config.target_rate_hz)?;
        g.row_mix(x, Arc::new(mix))
    }

    pub fn output_len(&self, tokens: &TokenSequence) -> usize {
        let r_in = tokens.frame_rate_hz() as f64;
        if r_in == self.config.target_rate_hz {
            tokens.num_frames()
        } else {
            interpolated_len(tokens.num_frames(), r_in, self.config.target_rate_hz)
        }
    }
}
