//! Binary checkpoint container shared by models and augmentor snapshots.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "HARDCKPT" | u32 version | u32 len, descriptor utf-8 | u32 tensor count
//! per tensor: u32 len, name utf-8 | u32 rank | rank x u64 extent | f64 values
//! ```

use std::fs;
use std::path::Path;

use crate::diffcore::Tensor;
use crate::error::{FormatError, Result};

pub const MAGIC: &[u8; 8] = b"HARDCKPT";
pub const VERSION: u32 = 1;

/// Upper bound on a declared rank; anything larger is treated as corruption.
const MAX_RANK: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub descriptor: String,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn new(descriptor: impl Into<String>, tensors: Vec<(String, Tensor)>) -> Self {
        Self {
            descriptor: descriptor.into(),
            tensors,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        put_str(&mut out, &self.descriptor);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            put_str(&mut out, name);
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

    /// Parses a checkpoint without any expectation about its architecture.
    pub fn decode(bytes: &[u8]) -> Result<Self, FormatError> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(MAGIC.len())?;
        if magic != MAGIC {
            return Err(FormatError::BadMagic {
                expected: String::from_utf8_lossy(MAGIC).into_owned(),
                found: format!("{magic:02x?}"),
            });
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(FormatError::Version {
                expected: VERSION,
                found: version,
            });
        }
        let descriptor = r.string()?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let name = r.string()?;
            let rank = r.u32()? as usize;
            if rank > MAX_RANK {
                return Err(FormatError::Malformed(format!(
                    "tensor {name:?} declares rank {rank}"
                )));
            }
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                let d = usize::try_from(r.u64()?).map_err(|_| {
                    FormatError::ExtentOverflow(format!("tensor {name:?} extent"))
                })?;
                shape.push(d);
            }
            let n = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .and_then(|n| n.checked_mul(8).map(|_| n))
                .ok_or_else(|| FormatError::ExtentOverflow(format!("tensor {name:?} {shape:?}")))?;
            let raw = r.take(n * 8)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let t = Tensor::new(shape, data).expect("extent product matches value count");
            tensors.push((name, t));
        }
        if r.pos != bytes.len() {
            return Err(FormatError::TrailingBytes(bytes.len() - r.pos));
        }
        Ok(Self { descriptor, tensors })
    }

    /// Parses and checks the architecture descriptor.
    pub fn decode_expecting(bytes: &[u8], descriptor: &str) -> Result<Self, FormatError> {
        let ck = Self::decode(bytes)?;
        if ck.descriptor != descriptor {
            return Err(FormatError::Architecture {
                expected: descriptor.to_string(),
                found: ck.descriptor,
            });
        }
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>, descriptor: &str) -> Result<Self> {
        let bytes = fs::read(path)?;
        Ok(Self::decode_expecting(&bytes, descriptor)?)
    }

    /// Tensors in stored order, after checking names and shapes.
    pub fn into_tensors(self, expected: &[(String, Vec<usize>)]) -> Result<Vec<Tensor>> {
        if self.tensors.len() != expected.len() {
            return Err(FormatError::Malformed(format!(
                "expected {} tensors, found {}",
                expected.len(),
                self.tensors.len()
            ))
            .into());
        }
        let mut out = Vec::with_capacity(expected.len());
        for ((name, t), (want_name, want_shape)) in self.tensors.into_iter().zip(expected) {
            if &name != want_name || t.shape() != want_shape.as_slice() {
                return Err(FormatError::Malformed(format!(
                    "tensor {name:?} {:?}, expected {want_name:?} {want_shape:?}",
                    t.shape()
                ))
                .into());
            }
            out.push(t);
        }
        Ok(out)
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
    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(FormatError::Truncated {
                offset: self.pos,
                needed: n,
                available,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, FormatError> {
        let n = self.u32()? as usize;
        let raw = self.take(n)?;
        String::from_utf8(raw.to_vec())
            .map_err(|_| FormatError::Malformed(format!("invalid utf-8 at offset {}", self.pos - n)))
    }
}
