//! `DEMB` dense embedding files.
//!
//! ```text
//! magic   "DEMB"            4 bytes
//! version u32               currently 1
//! count   u64               number of rows
//! dim     u32               floats per row
//! ids     count × (u32 len, UTF-8 bytes)
//! rows    count × dim × f32, row-major
//! ```
//!
//! All integers and floats are little-endian. Rows have a fixed stride of
//! `dim * 4` bytes so the payload can be scanned without parsing.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::binio::{put_f32, put_string, put_u32, put_u64, ByteReader};
use crate::error::{Error, Result};

pub const DEMB_MAGIC: &[u8; 4] = b"DEMB";
pub const DEMB_VERSION: u32 = 1;
pub const DEMB_HEADER_LEN: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    ids: Vec<String>,
    data: Vec<f32>,
}

impl EmbeddingStore {
    pub fn new(dim: usize, ids: Vec<String>, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dim must be positive"));
        }
        if data.len() != ids.len() * dim {
            return Err(Error::DimMismatch { expected: ids.len() * dim, actual: data.len() });
        }
        Ok(EmbeddingStore { dim, ids, data })
    }

    pub fn empty(dim: usize) -> Result<Self> {
        Self::new(dim, Vec::new(), Vec::new())
    }

    pub fn from_rows(ids: Vec<String>, rows: &[Vec<f32>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimMismatch { expected: dim, actual: r.len() });
            }
            data.extend_from_slice(r);
        }
        Self::new(dim, ids, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f32] {
        &self.data
    }

    /// Rows widened to f64, flat row-major.
    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&x| f64::from(x)).collect()
    }

    pub fn position_map(&self) -> HashMap<&str, usize> {
        self.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let id_bytes: usize = self.ids.iter().map(|s| 4 + s.len()).sum();
        let mut out = Vec::with_capacity(DEMB_HEADER_LEN + id_bytes + self.data.len() * 4);
        out.extend_from_slice(DEMB_MAGIC);
        put_u32(&mut out, DEMB_VERSION);
        put_u64(&mut out, self.ids.len() as u64);
        put_u32(&mut out, self.dim as u32);
        for id in &self.ids {
            put_string(&mut out, id);
        }
        for &x in &self.data {
            put_f32(&mut out, x);
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(buf);
        let magic = r.array::<4>("magic")?;
        if &magic != DEMB_MAGIC {
            return Err(Error::format(0, format!("bad magic {:?}, expected \"DEMB\"", String::from_utf8_lossy(&magic))));
        }
        let version = r.u32("version")?;
        if version != DEMB_VERSION {
            return Err(Error::format(4, format!("unsupported version {version}")));
        }
        let count = r.u64("count")?;
        let dim_at = r.offset();
        let dim = r.u32("dim")? as usize;
        if dim == 0 {
            return Err(Error::format(dim_at, "dim is zero"));
        }
        let count = usize::try_from(count).map_err(|_| Error::format(8, "count too large"))?;
        // each id costs at least its 4-byte length prefix
        if count > r.remaining() / 4 {
            return Err(Error::format(r.offset(), format!("truncated file: {count} ids declared")));
        }
        let mut ids = Vec::with_capacity(count);
        for _ in 0..count {
            ids.push(r.string("id table")?);
        }
        let payload_at = r.offset();
        let expected = count * dim * 4;
        if r.remaining() != expected {
            return Err(Error::format(
                payload_at,
                format!(
                    "dim mismatch: header says {count} rows × {dim} dims = {expected} payload bytes, found {}",
                    r.remaining()
                ),
            ));
        }
        let payload = r.take(expected, "payload")?;
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(EmbeddingStore { dim, ids, data })
    }
}

pub fn write_embeddings(store: &EmbeddingStore, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, store.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingStore> {
    let path = path.as_ref();
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    EmbeddingStore::from_bytes(&buf)
}
