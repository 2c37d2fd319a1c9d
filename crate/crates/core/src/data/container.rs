//! Binary tensor container, also the checkpoint format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   "STC1"              4 bytes
//! count   u32                 number of entries
//! entry*  name_len  u16
//!         name      UTF-8 bytes
//!         dtype     u8        0 = f32, 1 = f64
//!         rank      u8
//!         extents   u64 * rank
//!         payload   row-major scalars, little-endian
//! ```
//!
//! Round trips are bit-exact for both element widths; names must be unique
//! within a container.

use crate::error::{Error, Result};
use crate::tensor::{element_count, Dtype, NDTensor, Scalar};
use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

pub const MAGIC: [u8; 4] = *b"STC1";

/// One named tensor of either element width.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorEntry {
    F32(NDTensor<f32>),
    F64(NDTensor<f64>),
}

impl TensorEntry {
    pub fn dtype(&self) -> Dtype {
        match self {
            TensorEntry::F32(_) => Dtype::F32,
            TensorEntry::F64(_) => Dtype::F64,
        }
    }

    pub fn shape(&self) -> &[usize] {
        match self {
            TensorEntry::F32(t) => t.shape(),
            TensorEntry::F64(t) => t.shape(),
        }
    }

    /// Exact-width extraction; errors on dtype mismatch rather than
    /// silently converting.
    pub fn into_tensor<T: Scalar>(self) -> Result<NDTensor<T>> {
        match (T::DTYPE, self) {
            (Dtype::F32, TensorEntry::F32(t)) => {
                Ok(t.cast::<T>()) // identity cast between equal widths
            }
            (Dtype::F64, TensorEntry::F64(t)) => Ok(t.cast::<T>()),
            (want, have) => Err(Error::Format(format!(
                "entry holds {:?}, caller wants {want:?}",
                have.dtype()
            ))),
        }
    }

    /// Width-widening extraction: f32 payloads load losslessly into f64
    /// tensors, but narrowing is refused.
    pub fn into_tensor_lossless<T: Scalar>(self) -> Result<NDTensor<T>> {
        match (T::DTYPE, &self) {
            (Dtype::F32, TensorEntry::F64(_)) => Err(Error::Format(
                "refusing lossy f64 -> f32 load; regenerate the file in f32".into(),
            )),
            _ => match self {
                TensorEntry::F32(t) => Ok(t.cast::<T>()),
                TensorEntry::F64(t) => Ok(t.cast::<T>()),
            },
        }
    }

    pub fn wrap<T: Scalar>(t: NDTensor<T>) -> TensorEntry {
        match T::DTYPE {
            Dtype::F32 => TensorEntry::F32(t.cast::<f32>()),
            Dtype::F64 => TensorEntry::F64(t.cast::<f64>()),
        }
    }
}

/// Serializes entries; duplicate names are rejected before any I/O.
pub fn write_container(path: &Path, entries: &[(String, TensorEntry)]) -> Result<()> {
    let mut seen = HashSet::new();
    for (name, _) in entries {
        if !seen.insert(name.as_str()) {
            return Err(Error::Format(format!("duplicate entry name '{name}'")));
        }
    }
    let mut buf = Vec::new();
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (name, entry) in entries {
        let name_bytes = name.as_bytes();
        if name_bytes.len() > u16::MAX as usize {
            return Err(Error::Format(format!("entry name '{name}' too long")));
        }
        buf.extend_from_slice(&(name_bytes.len() as u16).to_le_bytes());
        buf.extend_from_slice(name_bytes);
        buf.push(entry.dtype().code());
        let shape = entry.shape();
        buf.push(shape.len() as u8);
        for &e in shape {
            buf.extend_from_slice(&(e as u64).to_le_bytes());
        }
        match entry {
            TensorEntry::F32(t) => {
                for &v in t.data() {
                    v.write_le(&mut buf);
                }
            }
            TensorEntry::F64(t) => {
                for &v in t.data() {
                    v.write_le(&mut buf);
                }
            }
        }
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format(format!(
                "truncated container: wanted {n} bytes for {what} at offset {}",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }
}

/// Parses a container, validating magic, bounds and payload lengths; a
/// malformed file never yields a partial tensor.
pub fn read_container(path: &Path) -> Result<Vec<(String, TensorEntry)>> {
    let buf = fs::read(path)?;
    let mut r = Reader { buf: &buf, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {magic:?}, expected {MAGIC:?}"
        )));
    }
    let count = r.u32("entry count")? as usize;
    let mut entries = Vec::with_capacity(count.min(1024));
    let mut seen = HashSet::new();
    for i in 0..count {
        let name_len = r.u16("name length")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "name")?)
            .map_err(|_| Error::Format(format!("entry {i} name is not UTF-8")))?
            .to_string();
        if !seen.insert(name.clone()) {
            return Err(Error::Format(format!("duplicate entry name '{name}'")));
        }
        let dtype = Dtype::from_code(r.u8("dtype")?)?;
        let rank = r.u8("rank")? as usize;
        if rank == 0 {
            return Err(Error::Format(format!("entry '{name}' has rank 0")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let e = r.u64("extent")?;
            if e == 0 || e > u32::MAX as u64 {
                return Err(Error::Format(format!(
                    "entry '{name}' has invalid extent {e}"
                )));
            }
            shape.push(e as usize);
        }
        let n = element_count(&shape)
            .map_err(|e| Error::Format(format!("entry '{name}': {e}")))?;
        let payload = r.take(n * dtype.size_bytes(), "payload")?;
        let entry = match dtype {
            Dtype::F32 => {
                let data: Vec<f32> = payload.chunks_exact(4).map(f32::read_le).collect();
                TensorEntry::F32(NDTensor::from_vec(&shape, data)?)
            }
            Dtype::F64 => {
                let data: Vec<f64> = payload.chunks_exact(8).map(f64::read_le).collect();
                TensorEntry::F64(NDTensor::from_vec(&shape, data)?)
            }
        };
        entries.push((name, entry));
    }
    if r.pos != buf.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after last entry",
            buf.len() - r.pos
        )));
    }
    Ok(entries)
}

/// Convenience: looks up one entry by name.
pub fn find_entry(entries: Vec<(String, TensorEntry)>, name: &str) -> Result<TensorEntry> {
    entries
        .into_iter()
        .find(|(n, _)| n == name)
        .map(|(_, e)| e)
        .ok_or_else(|| Error::Format(format!("container has no entry named '{name}'")))
}
