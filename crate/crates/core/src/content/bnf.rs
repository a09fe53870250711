//! `BNF1` matrices: magic, little-endian `u32` T, D and source hop (ms),
//! then `T * D` row-major `f32`. Plain CSV (one frame per line) is accepted
//! on read as a fallback.

use std::path::Path;

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

const MAGIC: &[u8; 4] = b"BNF1";
/// Hop assumed for CSV input, which carries no header.
pub const CSV_SOURCE_HOP_MS: u32 = 10;
pub const DEFAULT_BNF_DIM: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct BnfMatrix {
    pub frames: usize,
    pub dim: usize,
    pub source_hop_ms: u32,
    pub values: Vec<f32>,
}

impl BnfMatrix {
    pub fn new(frames: usize, dim: usize, source_hop_ms: u32, values: Vec<f32>) -> Result<Self> {
        if frames.checked_mul(dim) != Some(values.len()) {
            return Err(Error::Shape(format!("{frames}x{dim} BNF from {} values", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("BNF values".into()));
        }
        Ok(BnfMatrix {
            frames,
            dim,
            source_hop_ms,
            values,
        })
    }

    /// Single-precision copy of a feature matrix.
    pub fn from_features(m: &FeatureMatrix, source_hop_ms: u32) -> Result<Self> {
        Self::new(m.rows, m.cols, source_hop_ms, m.data.iter().map(|&v| v as f32).collect())
    }

    pub fn to_features(&self) -> FeatureMatrix {
        FeatureMatrix {
            rows: self.frames,
            cols: self.dim,
            data: self.values.iter().map(|&v| v as f64).collect(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let dim32 = |v: usize| u32::try_from(v).map_err(|_| Error::Parameter(format!("{v} exceeds u32")));
        let mut out = Vec::with_capacity(16 + 4 * self.values.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&dim32(self.frames)?.to_le_bytes());
        out.extend_from_slice(&dim32(self.dim)?.to_le_bytes());
        out.extend_from_slice(&self.source_hop_ms.to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(Error::Format("not a BNF1 file".into()));
        }
        let word = |i: usize| u32::from_le_bytes([bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]]);
        let (t, d, hop) = (word(4) as usize, word(8) as usize, word(12));
        let want = t
            .checked_mul(d)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Format(format!("BNF1 shape {t}x{d} overflows")))?;
        let payload = &bytes[16..];
        if payload.len() != want {
            return Err(Error::Format(format!(
                "BNF1 header says {t}x{d} ({want} bytes) but payload has {} bytes",
                payload.len()
            )));
        }
        let values = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Self::new(t, d, hop, values).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut values = Vec::new();
        let mut dim = None;
        let mut frames = 0;
        for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let row = line
                .split(',')
                .map(|c| c.trim().parse::<f32>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Format(format!("BNF CSV line {}: {e}", n + 1)))?;
            match dim {
                None => dim = Some(row.len()),
                Some(d) if d != row.len() => {
                    return Err(Error::Format(format!("BNF CSV line {}: {} columns, expected {d}", n + 1, row.len())))
                }
                _ => {}
            }
            values.extend(row);
            frames += 1;
        }
        let dim = dim.ok_or_else(|| Error::Format("empty BNF CSV".into()))?;
        Self::new(frames, dim, CSV_SOURCE_HOP_MS, values).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for row in self.values.chunks_exact(self.dim.max(1)) {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }
}

/// Reads `BNF1`, falling back to CSV when the magic is absent.
pub fn read_bnf(path: impl AsRef<Path>) -> Result<BnfMatrix> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let parsed = if bytes.starts_with(MAGIC) {
        BnfMatrix::from_bytes(&bytes)
    } else {
        let text = std::str::from_utf8(&bytes)
            .map_err(|_| Error::Format("neither BNF1 nor UTF-8 CSV".into()))?;
        BnfMatrix::from_csv(text)
    };
    parsed.map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn write_bnf(path: impl AsRef<Path>, bnf: &BnfMatrix) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, bnf.to_bytes()?).map_err(|e| Error::io(path, e))
}

/// `(lower, upper, fraction)` source positions for `n_out` points spread
/// uniformly over `n_in` rows, first to first and last to last.
pub(crate) fn interp_positions(n_in: usize, n_out: usize) -> Vec<(usize, usize, f64)> {
    (0..n_out)
        .map(|i| {
            if n_in == 1 || n_out == 1 {
                return (0, 0, 0.0);
            }
            let num = i * (n_in - 1);
            let den = n_out - 1;
            let lo = num / den;
            let frac = (num % den) as f64 / den as f64;
            (lo, (lo + 1).min(n_in - 1), frac)
        })
        .collect()
}

/// Resamples the time axis onto `target_frames` by linear interpolation.
pub fn align_bnf(bnf: &BnfMatrix, target_frames: usize) -> Result<FeatureMatrix> {
    if bnf.frames == 0 {
        return Err(Error::Precondition("BNF matrix has no frames".into()));
    }
    let src = bnf.to_features();
    let d = src.cols;
    let mut out = Vec::with_capacity(target_frames * d);
    for (lo, hi, frac) in interp_positions(src.rows, target_frames) {
        let (a, b) = (src.row(lo), src.row(hi));
        if frac == 0.0 {
            out.extend_from_slice(a);
        } else {
            out.extend(a.iter().zip(b).map(|(x, y)| x + frac * (y - x)));
        }
    }
    FeatureMatrix::new(target_frames, d, out)
}
