//! DSCP: named parameters with their shapes, stored as little-endian f32.

use std::path::Path;

use crate::corpus::binary::{put_string, Reader};
use crate::corpus::formats::{read_file, write_file};
use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Tensor};

pub const DSCP_MAGIC: &[u8; 4] = b"DSCP";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedParam {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

pub fn encode_checkpoint(params: &[NamedParam]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(DSCP_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let n = u32::try_from(params.len()).map_err(|_| Error::Validation("too many parameters".into()))?;
    out.extend_from_slice(&n.to_le_bytes());
    for p in params {
        let size: usize = p.shape.iter().product();
        if size != p.data.len() {
            return Err(Error::Dimension(format!(
                "{}: shape {:?} holds {size} values, got {}",
                p.name,
                p.shape,
                p.data.len()
            )));
        }
        put_string(&mut out, &p.name)?;
        let rank = u16::try_from(p.shape.len()).map_err(|_| Error::Validation("rank overflow".into()))?;
        out.extend_from_slice(&rank.to_le_bytes());
        for &d in &p.shape {
            let d = u32::try_from(d).map_err(|_| Error::Validation("axis overflow".into()))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in &p.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Vec<NamedParam>> {
    let mut r = Reader::new(bytes, "DSCP");
    r.magic(DSCP_MAGIC)?;
    r.version(CHECKPOINT_VERSION)?;
    let n = r.u32()? as usize;
    let mut out = Vec::with_capacity(n.min(1 << 16));
    for _ in 0..n {
        let name = r.string()?;
        let rank = r.u16()? as usize;
        let shape: Vec<usize> = r.u32s(rank)?.into_iter().map(|d| d as usize).collect();
        let size = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::Length(format!("DSCP: {name} size overflows")))?;
        let data = r.f32s(size)?;
        out.push(NamedParam { name, shape, data });
    }
    r.finish()?;
    Ok(out)
}

/// Snapshot of every parameter, rounded to f32.
pub fn snapshot(store: &ParamStore) -> Vec<NamedParam> {
    store
        .iter()
        .map(|p| NamedParam {
            name: p.name.clone(),
            shape: p.value.shape().to_vec(),
            data: p.value.data().iter().map(|v| *v as f32).collect(),
        })
        .collect()
}

/// Overwrites parameters by name; every store entry must be present with a
/// matching shape.
pub fn restore(store: &mut ParamStore, params: &[NamedParam]) -> Result<()> {
    if params.len() != store.len() {
        return Err(Error::Format(format!(
            "checkpoint has {} parameters, model has {}",
            params.len(),
            store.len()
        )));
    }
    for p in params {
        let id = store
            .id(&p.name)
            .ok_or_else(|| Error::Format(format!("unexpected parameter {}", p.name)))?;
        let param = store.get_mut(id);
        if param.value.shape() != p.shape.as_slice() {
            return Err(Error::Dimension(format!(
                "{}: checkpoint shape {:?}, model shape {:?}",
                p.name,
                p.shape,
                param.value.shape()
            )));
        }
        param.value = Tensor::new(p.shape.clone(), p.data.iter().map(|v| *v as f64).collect())?;
    }
    Ok(())
}

pub fn write_checkpoint(params: &[NamedParam], path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_checkpoint(params)?)
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Vec<NamedParam>> {
    decode_checkpoint(&read_file(path.as_ref())?)
}
