//! Binary weight files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "EHDCKPT\0"
//! version  u32
//! kind     u32 length + utf-8 bytes
//! config   u32 length + utf-8 bytes (flat key = value text)
//! count    u32
//! count x { name: u32 length + utf-8, trainable: u8, rank: u32, dims: rank x u64 }
//! values   f64 per element, parameters in header order, row-major
//! ```

use std::fs;
use std::path::Path;

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{EhdError, Result};

const MAGIC: &[u8; 8] = b"EHDCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Decoded checkpoint contents.
#[derive(Debug)]
pub struct Checkpoint {
    pub kind: String,
    pub config: String,
    pub params: ParamStore,
}

pub fn encode(kind: &str, config: &str, store: &ParamStore) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    put_str(&mut out, kind);
    put_str(&mut out, config);
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for p in store.iter() {
        put_str(&mut out, &p.name);
        out.push(u8::from(p.trainable));
        out.extend_from_slice(&(p.value.rank() as u32).to_le_bytes());
        for &d in p.value.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
    }
    for p in store.iter() {
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(EhdError::Checkpoint("bad magic; not a checkpoint file".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(EhdError::Checkpoint(format!(
            "unsupported version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    let kind = r.string()?;
    let config = r.string()?;
    let count = r.u32()? as usize;
    let mut headers = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let name = r.string()?;
        let trainable = r.take(1)?[0] != 0;
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(r.u64()? as usize);
        }
        headers.push((name, trainable, shape));
    }
    let mut params = ParamStore::new();
    for (name, trainable, shape) in headers {
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes")));
        }
        params
            .add(&name, Tensor::new(shape, data)?, trainable)
            .map_err(|e| EhdError::Checkpoint(e.to_string()))?;
    }
    if r.pos != bytes.len() {
        return Err(EhdError::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(Checkpoint { kind, config, params })
}

pub fn save(path: &Path, kind: &str, config: &str, store: &ParamStore) -> Result<()> {
    fs::write(path, encode(kind, config, store)).map_err(|e| EhdError::io(path.display().to_string(), e))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| EhdError::io(path.display().to_string(), e))?;
    decode(&bytes)
}

impl Checkpoint {
    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(EhdError::Checkpoint(format!(
                "expected a {kind} checkpoint, found {}",
                self.kind
            )));
        }
        Ok(())
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(EhdError::Checkpoint("truncated file".into()));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| EhdError::Checkpoint("invalid utf-8 in header".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut s = ParamStore::new();
        s.add(
            "a",
            Tensor::matrix(2, 2, vec![0.1, -0.0, 1e-300, f64::MAX]).unwrap(),
            true,
        )
        .unwrap();
        s.add("b", Tensor::scalar(std::f64::consts::PI), false).unwrap();
        let bytes = encode("test", "x = 1\n", &s);
        let c = decode(&bytes).unwrap();
        assert_eq!(c.kind, "test");
        assert_eq!(c.config, "x = 1\n");
        for (p, q) in s.iter().zip(c.params.iter()) {
            assert_eq!(p.name, q.name);
            assert_eq!(p.trainable, q.trainable);
            let pb: Vec<u64> = p.value.data().iter().map(|v| v.to_bits()).collect();
            let qb: Vec<u64> = q.value.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(pb, qb);
        }
    }

    #[test]
    fn truncation_is_detected() {
        let mut s = ParamStore::new();
        s.add("a", Tensor::vector(vec![1.0, 2.0]), true).unwrap();
        let bytes = encode("test", "", &s);
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode(b"nonsense").is_err());
    }
}
