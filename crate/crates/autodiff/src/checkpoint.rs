//! Binary parameter checkpoints.
//!
//! Layout (all integers little-endian `u32`, floats little-endian `f64`):
//!
//! ```text
//! "CMK1" | version | metadata length | metadata bytes (UTF-8)
//! | count | count × (name length | name)                  name table
//! | count × (name length | name | batch | rows | cols | data)
//! ```
//!
//! The metadata blob is opaque to this crate; callers store JSON there.

use std::fs;
use std::path::Path;

use crate::error::CheckpointError;
use crate::params::ParamStore;
use crate::tensor::{Shape, Tensor};

pub const MAGIC: &[u8; 4] = b"CMK1";
pub const FORMAT_VERSION: u32 = 1;

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    put_u32(buf, s.len() as u32);
    buf.extend_from_slice(s.as_bytes());
}

pub fn to_bytes(store: &ParamStore, metadata: &str) -> Vec<u8> {
    let mut buf = Vec::with_capacity(64 + 8 * store.numel());
    buf.extend_from_slice(MAGIC);
    put_u32(&mut buf, FORMAT_VERSION);
    put_str(&mut buf, metadata);
    put_u32(&mut buf, store.len() as u32);
    for name in store.names() {
        put_str(&mut buf, name);
    }
    for (name, t) in store.iter() {
        put_str(&mut buf, name);
        let s = t.shape();
        for d in [s.batch, s.rows, s.cols] {
            put_u32(&mut buf, d as u32);
        }
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| CheckpointError::Corrupt(format!("truncated at byte {}", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, CheckpointError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| CheckpointError::Corrupt("invalid UTF-8 string".into()))
    }
}

pub fn from_bytes(buf: &[u8]) -> Result<(ParamStore, String), CheckpointError> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4).map_err(|_| CheckpointError::BadMagic)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(CheckpointError::Version(version));
    }
    let metadata = r.string()?;
    let count = r.u32()? as usize;
    let table = (0..count).map(|_| r.string()).collect::<Result<Vec<_>, _>>()?;
    let mut store = ParamStore::new();
    for expected in &table {
        let name = r.string()?;
        if &name != expected {
            return Err(CheckpointError::Corrupt(format!(
                "parameter `{name}` out of name-table order (expected `{expected}`)"
            )));
        }
        let dims = [r.u32()?, r.u32()?, r.u32()?].map(|d| d as usize);
        let shape = Shape::new(dims[0], dims[1], dims[2]);
        let bytes = r.take(shape.numel().checked_mul(8).ok_or_else(|| {
            CheckpointError::Corrupt(format!("shape {shape} too large"))
        })?)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        store.insert(name, Tensor::new(shape, data))?;
    }
    if r.pos != buf.len() {
        return Err(CheckpointError::Corrupt(format!(
            "{} trailing bytes",
            buf.len() - r.pos
        )));
    }
    Ok((store, metadata))
}

pub fn save(path: impl AsRef<Path>, store: &ParamStore, metadata: &str) -> Result<(), CheckpointError> {
    fs::write(path, to_bytes(store, metadata))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<(ParamStore, String), CheckpointError> {
    from_bytes(&fs::read(path)?)
}
