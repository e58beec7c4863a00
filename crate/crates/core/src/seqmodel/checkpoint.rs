//! Binary checkpoint format (all integers little-endian):
//!
//! ```text
//! magic       8 bytes  "MSNMTCKP"
//! version     u32      1
//! scalar      u8       4 (f32) or 8 (f64)
//! config      u32 length + UTF-8 JSON ModelConfig
//! metadata    u32 length + UTF-8 JSON owned by the caller
//! count       u32      number of parameters
//! parameter   u32 name length, name, u32 rank, rank x u64 extents, raw scalars
//! ```

use std::fs;
use std::path::Path;

use super::config::ModelConfig;
use super::model::Model;
use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tensor};

pub const MAGIC: &[u8; 8] = b"MSNMTCKP";
pub const VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_blob(out: &mut Vec<u8>, bytes: &[u8]) {
    put_u32(out, bytes.len() as u32);
    out.extend_from_slice(bytes);
}

pub fn to_bytes<T: Scalar>(model: &Model<T>, metadata: &str) -> Result<Vec<u8>> {
    let config = serde_json::to_vec(model.config())
        .map_err(|e| Error::Checkpoint(format!("cannot serialize config: {e}")))?;
    let mut out = Vec::with_capacity(model.params().scalar_count() * T::BYTES + 1024);
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    out.push(T::BYTES as u8);
    put_blob(&mut out, &config);
    put_blob(&mut out, metadata.as_bytes());
    put_u32(&mut out, model.params().len() as u32);
    for (name, tensor) in model.params().iter() {
        put_blob(&mut out, name.as_bytes());
        put_u32(&mut out, tensor.rank() as u32);
        for &d in tensor.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &x in tensor.data() {
            x.write_le(&mut out);
        }
    }
    Ok(out)
}

struct Reader<'b> {
    bytes: &'b [u8],
    pos: usize,
}

impl<'b> Reader<'b> {
    fn take(&mut self, n: usize) -> Result<&'b [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn blob(&mut self) -> Result<&'b [u8]> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    fn utf8(&mut self, what: &str) -> Result<&'b str> {
        std::str::from_utf8(self.blob()?)
            .map_err(|_| Error::Checkpoint(format!("{what} is not valid UTF-8")))
    }
}

/// Parse a checkpoint, returning the model and the caller metadata.
/// Nothing is returned unless the whole file validates.
pub fn from_bytes<T: Scalar>(bytes: &[u8]) -> Result<(Model<T>, String)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported version {version}, expected {VERSION}"
        )));
    }
    let width = r.take(1)?[0] as usize;
    if width != T::BYTES {
        return Err(Error::Checkpoint(format!(
            "checkpoint stores {width}-byte scalars, loader expects {}",
            T::BYTES
        )));
    }
    let config: ModelConfig = serde_json::from_str(r.utf8("config")?)
        .map_err(|e| Error::Checkpoint(format!("bad config: {e}")))?;
    let metadata = r.utf8("metadata")?.to_string();
    let count = r.u32()? as usize;
    let mut named = Vec::with_capacity(count);
    for _ in 0..count {
        let name = r.utf8("parameter name")?.to_string();
        let rank = r.u32()? as usize;
        let shape = (0..rank)
            .map(|_| r.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = r.take(n.checked_mul(T::BYTES).ok_or_else(|| {
            Error::Checkpoint(format!("parameter {name} is implausibly large"))
        })?)?;
        let data = raw.chunks_exact(T::BYTES).map(T::read_le).collect();
        let tensor = Tensor::new(shape, data)
            .map_err(|e| Error::Checkpoint(format!("parameter {name}: {e}")))?;
        named.push((name, tensor));
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes after the last parameter",
            bytes.len() - r.pos
        )));
    }
    let params = ModelParams::from_named(&config, named)?;
    Ok((Model::from_params(config, params), metadata))
}

pub fn save<T: Scalar>(path: &Path, model: &Model<T>, metadata: &str) -> Result<()> {
    let bytes = to_bytes(model, metadata)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load<T: Scalar>(path: &Path) -> Result<(Model<T>, String)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
