//! `TSR1` weight files: magic, `u32` tensor count, then per tensor a `u8`
//! name length, the UTF-8 name, `u32` rank, `u32` dims and a little-endian
//! `f32` payload.

use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"TSR1";

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

/// Ordered collection of named tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightFile {
    pub tensors: Vec<NamedTensor>,
}

impl WeightFile {
    pub fn get(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&u32_of(self.tensors.len(), "tensor count")?.to_le_bytes());
        for t in &self.tensors {
            let name = t.name.as_bytes();
            if name.is_empty() || name.len() > u8::MAX as usize {
                return Err(Error::Parameter(format!("tensor name {:?} must be 1..=255 bytes", t.name)));
            }
            if t.shape.iter().product::<usize>() != t.data.len() {
                return Err(Error::Shape(format!("{}: shape {:?} vs {} values", t.name, t.shape, t.data.len())));
            }
            out.push(name.len() as u8);
            out.extend_from_slice(name);
            out.extend_from_slice(&u32_of(t.shape.len(), "rank")?.to_le_bytes());
            for &d in &t.shape {
                out.extend_from_slice(&u32_of(d, "dimension")?.to_le_bytes());
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("not a TSR1 file (bad magic)".into()));
        }
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let len = r.take(1)?[0] as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?
                .to_string();
            let rank = r.u32()? as usize;
            let mut shape = Vec::with_capacity(rank.min(16));
            for _ in 0..rank {
                shape.push(r.u32()? as usize);
            }
            let n = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .and_then(|n| n.checked_mul(4).map(|_| n))
                .ok_or_else(|| Error::Format(format!("{name}: shape {shape:?} overflows")))?;
            let payload = r.take(n * 4)?;
            let data = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.push(NamedTensor { name, shape, data });
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(WeightFile { tensors })
    }
}

fn u32_of(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Parameter(format!("{what} {v} exceeds u32")))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("truncated TSR1 file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn read_tsr(path: impl AsRef<Path>) -> Result<WeightFile> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    WeightFile::from_bytes(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn write_tsr(path: impl AsRef<Path>, weights: &WeightFile) -> Result<()> {
    let path = path.as_ref();
    let bytes = weights.to_bytes()?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
