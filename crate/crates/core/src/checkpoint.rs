//! Binary checkpoints: magic, format version, a JSON header (configuration, counters,
//! tensor shapes) and the raw little-endian parameter and optimizer buffers.
//!
//! All random streams are keyed by `(seed, epoch, ...)`, so the seed in the stored
//! configuration plus the epoch counter is the complete generator state.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldConfig, FieldParams, Param};
use crate::training::{Adam, TrainConfig, TrainState};

pub const MAGIC: &[u8; 8] = b"DNRFCKPT";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: TrainConfig,
    field: FieldConfig,
    next_epoch: usize,
    iteration: u64,
    adam_beta1: f64,
    adam_beta2: f64,
    adam_eps: f64,
    adam_step: u64,
    tensors: Vec<TensorInfo>,
}

pub fn to_bytes(cfg: &TrainConfig, state: &TrainState) -> Result<Vec<u8>> {
    let header = Header {
        config: cfg.clone(),
        field: state.params.config,
        next_epoch: state.next_epoch,
        iteration: state.iteration,
        adam_beta1: state.adam.beta1,
        adam_beta2: state.adam.beta2,
        adam_eps: state.adam.eps,
        adam_step: state.adam.step,
        tensors: state
            .params
            .tensors
            .iter()
            .map(|p| TensorInfo {
                name: p.name.clone(),
                rows: p.rows,
                cols: p.cols,
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let floats: usize = state.params.parameter_count() * 3;
    let mut out = Vec::with_capacity(20 + json.len() + 8 * floats);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    let buffers = state
        .params
        .tensors
        .iter()
        .map(|p| &p.values)
        .chain(&state.adam.m)
        .chain(&state.adam.v);
    for buf in buffers {
        for v in buf {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn from_bytes(bytes: &[u8]) -> Result<(TrainConfig, TrainState)> {
    let bad = |msg: &str| Error::Checkpoint(msg.to_string());
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {version}, this build reads version {VERSION}")));
    }
    let json_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let json = bytes.get(20..20usize.saturating_add(json_len)).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(json).map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    let expected = header.field.layout();
    let shapes_match = expected.len() == header.tensors.len()
        && expected.iter().zip(&header.tensors).all(|((n, r, c), t)| *n == t.name && *r == t.rows && *c == t.cols);
    if !shapes_match {
        return Err(bad("tensor table does not match the stored network configuration"));
    }
    let sizes: Vec<usize> = header.tensors.iter().map(|t| t.rows * t.cols).collect();
    let total: usize = sizes.iter().sum();
    let body = &bytes[20 + json_len..];
    if body.len() != 8 * 3 * total {
        return Err(Error::Checkpoint(format!("expected {} data bytes, found {}", 8 * 3 * total, body.len())));
    }
    let mut floats = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let mut take = |n: usize| -> Vec<f64> { floats.by_ref().take(n).collect() };
    let tensors = header
        .tensors
        .iter()
        .zip(&sizes)
        .map(|(t, &n)| Param {
            name: t.name.clone(),
            rows: t.rows,
            cols: t.cols,
            values: take(n),
        })
        .collect();
    let m = sizes.iter().map(|&n| take(n)).collect();
    let v = sizes.iter().map(|&n| take(n)).collect();
    let params = FieldParams {
        config: header.field,
        tensors,
    };
    params.validate()?;
    let state = TrainState {
        params,
        adam: Adam {
            beta1: header.adam_beta1,
            beta2: header.adam_beta2,
            eps: header.adam_eps,
            step: header.adam_step,
            m,
            v,
        },
        next_epoch: header.next_epoch,
        iteration: header.iteration,
    };
    Ok((header.config, state))
}

/// Writes through a temporary file so a crash never leaves a half-written checkpoint.
pub fn save(path: &Path, cfg: &TrainConfig, state: &TrainState) -> Result<()> {
    let bytes = to_bytes(cfg, state)?;
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::data(&tmp, format!("cannot create: {e}")))?;
    f.write_all(&bytes)?;
    f.sync_all()?;
    fs::rename(&tmp, path).map_err(|e| Error::data(path, format!("cannot write: {e}")))
}

pub fn load(path: &Path) -> Result<(TrainConfig, TrainState)> {
    let bytes = fs::read(path).map_err(|e| Error::data(path, format!("cannot read checkpoint: {e}")))?;
    from_bytes(&bytes).map_err(|e| match e {
        Error::Checkpoint(msg) => Error::Checkpoint(format!("{}: {msg}", path.display())),
        other => other,
    })
}
