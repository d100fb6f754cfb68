//! LAXB: a minimal raw tensor container.
//!
//! ```text
//! offset  size     field
//! 0       4        magic "LAXB"
//! 4       1        version (1)
//! 5       4        rank r, u32 little-endian
//! 9       4·r      dims, u32 little-endian each
//! 9+4r    4·Πdims  data, f32 little-endian, row-major
//! ```

use super::AdapterError;

pub const MAGIC: &[u8; 4] = b"LAXB";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self, AdapterError> {
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(AdapterError::Malformed(format!(
                "tensor dims {dims:?} need {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    /// Number of rows along the leading axis.
    pub fn rows(&self) -> usize {
        self.dims.first().copied().unwrap_or(0)
    }

    pub fn row_len(&self) -> usize {
        self.dims.iter().skip(1).product()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let n = self.row_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(9 + 4 * self.dims.len() + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, AdapterError> {
        let bad = |m: String| AdapterError::Malformed(m);
        if bytes.len() < 9 || &bytes[..4] != MAGIC {
            return Err(bad("missing LAXB magic".into()));
        }
        if bytes[4] != VERSION {
            return Err(bad(format!("unsupported LAXB version {}", bytes[4])));
        }
        let u32_at = |o: usize| -> Result<u32, AdapterError> {
            bytes
                .get(o..o + 4)
                .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
                .ok_or_else(|| bad(format!("truncated header at byte {o}")))
        };
        let rank = u32_at(5)? as usize;
        if rank > 8 {
            return Err(bad(format!("rank {rank} too large")));
        }
        let mut dims = Vec::with_capacity(rank);
        for i in 0..rank {
            dims.push(u32_at(9 + 4 * i)? as usize);
        }
        let start = 9 + 4 * rank;
        let count: usize = dims.iter().product();
        let body = &bytes[start..];
        if body.len() != 4 * count {
            return Err(bad(format!(
                "payload has {} bytes, dims {dims:?} need {}",
                body.len(),
                4 * count
            )));
        }
        let data = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Ok(Self { dims, data })
    }
}
