//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    8 bytes  "MPACKPT\0"
//! version  u32
//! dtype    u8       4 = f32, 8 = f64
//! count    u32
//! entries  count x { kind u8 (0 = parameter, 1 = buffer), name_len u32, name utf-8,
//!                    ndim u32, dims ndim x u64, values product(dims) x dtype }
//! ```

use std::path::Path;

use super::params::ParamStore;
use super::tensor::{DType, Real, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"MPACKPT\0";
pub const FORMAT_VERSION: u32 = 1;

pub fn to_bytes<F: Real>(store: &ParamStore<F>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(F::DTYPE.tag());
    let entries = store
        .params()
        .iter()
        .map(|p| (0u8, &p.name, &p.value))
        .chain(store.buffers().iter().map(|b| (1u8, &b.name, &b.value)));
    let count = (store.params().len() + store.buffers().len()) as u32;
    out.extend_from_slice(&count.to_le_bytes());
    for (kind, name, value) in entries {
        out.push(kind);
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(value.ndim() as u32).to_le_bytes());
        for &d in value.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in value.data() {
            v.write_le(&mut out);
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Checkpoint("truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Parses a checkpoint. Values stored in the other precision are converted.
pub fn from_bytes<F: Real>(buf: &[u8]) -> Result<ParamStore<F>> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {version}")));
    }
    let dtype = DType::from_tag(r.u8()?).ok_or_else(|| Error::Checkpoint("unknown dtype".into()))?;
    let count = r.u32()?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let kind = r.u8()?;
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Checkpoint("parameter name is not utf-8".into()))?
            .to_string();
        let ndim = r.u32()? as usize;
        let shape = (0..ndim)
            .map(|_| r.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = r.take(
            n.checked_mul(dtype.size())
                .ok_or_else(|| Error::Checkpoint("overflow".into()))?,
        )?;
        let data: Vec<F> = match dtype {
            DType::F32 => raw
                .chunks_exact(4)
                .map(|b| F::lit(f32::read_le(b) as f64))
                .collect(),
            DType::F64 => raw.chunks_exact(8).map(|b| F::lit(f64::read_le(b))).collect(),
        };
        let value = Tensor::new(shape, data).map_err(|e| Error::Checkpoint(e.to_string()))?;
        match kind {
            0 => {
                store.add(name, value);
            }
            1 => {
                store.add_buffer(name, value);
            }
            k => return Err(Error::Checkpoint(format!("unknown entry kind {k}"))),
        }
    }
    if r.pos != buf.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Ok(store)
}

pub fn save<F: Real>(store: &ParamStore<F>, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(store)).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn load<F: Real>(path: &Path) -> Result<ParamStore<F>> {
    let buf = std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    from_bytes(&buf)
}
