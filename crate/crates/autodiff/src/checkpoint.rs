//! Flat binary parameter checkpoints.
//!
//! Layout (all integers little-endian):
//! `b"MBDL1"`, `u32` parameter count, then per parameter `u32` name length,
//! UTF-8 name, `u32` rank, `rank × u64` dimensions, `f64` payload.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::GraphError;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 5] = b"MBDL1";

pub fn to_bytes(params: &BTreeMap<String, Tensor>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, t) in params {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], GraphError> {
        if self.pos + n > self.buf.len() {
            return Err(GraphError::Checkpoint(format!(
                "truncated at byte {} (wanted {n} more)",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, GraphError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, GraphError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn from_bytes(buf: &[u8]) -> Result<BTreeMap<String, Tensor>, GraphError> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(GraphError::Checkpoint("bad magic".into()));
    }
    let count = r.u32()?;
    let mut params = BTreeMap::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|e| GraphError::Checkpoint(format!("parameter name: {e}")))?
            .to_string();
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u64()? as usize);
        }
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes")));
        }
        let t = Tensor::new(shape, data)
            .map_err(|e| GraphError::Checkpoint(format!("parameter `{name}`: {e}")))?;
        params.insert(name, t);
    }
    if r.pos != buf.len() {
        return Err(GraphError::Checkpoint(format!(
            "{} trailing bytes",
            buf.len() - r.pos
        )));
    }
    Ok(params)
}

pub fn save(path: &Path, params: &BTreeMap<String, Tensor>) -> Result<(), GraphError> {
    fs::write(path, to_bytes(params))
        .map_err(|e| GraphError::Checkpoint(format!("{}: {e}", path.display())))
}

pub fn load(path: &Path) -> Result<BTreeMap<String, Tensor>, GraphError> {
    let buf = fs::read(path).map_err(|e| GraphError::Checkpoint(format!("{}: {e}", path.display())))?;
    from_bytes(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let params = BTreeMap::from([
            ("a".to_string(), Tensor::scalar(-0.1)),
            ("layer.w".to_string(), Tensor::matrix(2, 3, vec![1e-300, 2.5, -3.0, 4.0, 5.0, 6.0])),
        ]);
        let bytes = to_bytes(&params);
        assert_eq!(&bytes[..5], b"MBDL1");
        assert_eq!(from_bytes(&bytes).unwrap(), params);
    }

    #[test]
    fn truncated_input_fails() {
        let params = BTreeMap::from([("a".to_string(), Tensor::vector(vec![1.0, 2.0]))]);
        let bytes = to_bytes(&params);
        assert!(from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(from_bytes(b"XXXX1\0\0\0\0").is_err());
    }
}
