//! Checkpoint files.
//!
//! Layout (little-endian): magic `PDN1`, version `u32 = 1`, tensor count
//! `u32`, then per tensor a `u16` name length, the UTF-8 name, a `u8` rank,
//! each extent as `u32`, and the row-major `f32` values. Tensors appear in
//! [`TENSOR_NAMES`] order.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Architecture, NetworkParams, TENSOR_NAMES};
use crate::real::Real;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"PDN1";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn checkpoint_bytes<T: Real>(params: &NetworkParams<T>) -> Vec<u8> {
    let mut buf = Vec::with_capacity(64 + 4 * params.param_count());
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(TENSOR_NAMES.len() as u32).to_le_bytes());
    for (name, t) in TENSOR_NAMES.iter().zip(params.tensors()) {
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.push(t.rank() as u8);
        for &e in t.shape() {
            buf.extend_from_slice(&(e as u32).to_le_bytes());
        }
        for v in t.data() {
            buf.extend_from_slice(&v.as_f32().to_le_bytes());
        }
    }
    buf
}

pub fn save_checkpoint<T: Real>(params: &NetworkParams<T>, path: &Path) -> Result<()> {
    fs::write(path, checkpoint_bytes(params)).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let s = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or_else(|| Error::CheckpointFormat {
                offset: self.pos as u64,
                msg: format!("truncated while reading {what}"),
            })?;
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn fail<X>(&self, offset: usize, msg: String) -> Result<X> {
        Err(Error::CheckpointFormat {
            offset: offset as u64,
            msg,
        })
    }
}

/// Parses checkpoint bytes, checking every tensor against `arch`.
pub fn parse_checkpoint(bytes: &[u8], arch: Architecture) -> Result<NetworkParams<f32>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != CHECKPOINT_MAGIC {
        return r.fail(0, "bad magic, expected PDN1".into());
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return r.fail(4, format!("unsupported version {version}"));
    }
    let count = r.u32("tensor count")? as usize;
    if count != TENSOR_NAMES.len() {
        return r.fail(
            8,
            format!("expected {} tensors, found {count}", TENSOR_NAMES.len()),
        );
    }
    let expected = arch.param_shapes()?;
    let mut tensors = Vec::with_capacity(count);
    for (want_name, want_shape) in TENSOR_NAMES.iter().zip(&expected) {
        let start = r.pos;
        let len = u16::from_le_bytes(r.take(2, "name length")?.try_into().unwrap()) as usize;
        let name = std::str::from_utf8(r.take(len, "tensor name")?).map_err(|_| {
            Error::CheckpointFormat {
                offset: (start + 2) as u64,
                msg: "tensor name is not UTF-8".into(),
            }
        })?;
        if name != *want_name {
            return r.fail(
                start,
                format!("expected tensor `{want_name}`, found `{name}`"),
            );
        }
        let rank = r.take(1, "rank")?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("extent")? as usize);
        }
        if &shape != want_shape {
            return r.fail(
                start,
                format!("`{name}` has shape {shape:?} but the network expects {want_shape:?}"),
            );
        }
        let n: usize = shape.iter().product();
        let data_at = r.pos;
        let data: Vec<f32> = r
            .take(4 * n, "tensor values")?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let t = Tensor::from_vec(&shape, data).map_err(|e| Error::CheckpointFormat {
            offset: data_at as u64,
            msg: format!("`{name}`: {e}"),
        })?;
        tensors.push(t);
    }
    if r.pos != bytes.len() {
        return r.fail(r.pos, format!("{} trailing bytes", bytes.len() - r.pos));
    }
    NetworkParams::from_tensors(arch, tensors)
}

/// Loads a checkpoint for `arch` and converts it to the working precision.
pub fn load_checkpoint<T: Real>(path: &Path, arch: Architecture) -> Result<NetworkParams<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_checkpoint(&bytes, arch)?.cast())
}
