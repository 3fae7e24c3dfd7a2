//! `SAE1` checkpoints.
//!
//! ```text
//! magic  "SAE1"      4 bytes
//! d, m, k            3 × u32
//! theta              f64
//! config digest      32 bytes
//! w_enc (m·d), b_enc (m), w_dec (m·d), b_dec (d)    f64 little-endian
//! ```

use std::fs;
use std::path::Path;

use super::params::SaeParams;
use crate::binio::{put_f64, put_u32, ByteReader};
use crate::digest::Digest;
use crate::error::{Error, Result};

pub const SAE_MAGIC: &[u8; 4] = b"SAE1";

/// Trained parameters plus what inference needs.
#[derive(Debug, Clone, PartialEq)]
pub struct SaeModel {
    pub params: SaeParams,
    pub k: usize,
    pub theta: f64,
    pub digest: Digest,
}

impl SaeModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let p = &self.params;
        let mut out = Vec::with_capacity(56 + 8 * (2 * p.m * p.d + p.m + p.d));
        out.extend_from_slice(SAE_MAGIC);
        put_u32(&mut out, p.d as u32);
        put_u32(&mut out, p.m as u32);
        put_u32(&mut out, self.k as u32);
        put_f64(&mut out, self.theta);
        out.extend_from_slice(&self.digest.0);
        for block in [&p.w_enc, &p.b_enc, &p.w_dec, &p.b_dec] {
            for &x in block.iter() {
                put_f64(&mut out, x);
            }
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(buf);
        if &r.array::<4>("magic")? != SAE_MAGIC {
            return Err(Error::format(0, "bad magic, expected \"SAE1\""));
        }
        let d = r.u32("d")? as usize;
        let m = r.u32("m")? as usize;
        let k = r.u32("k")? as usize;
        let theta = r.f64("theta")?;
        let digest = Digest(r.array::<32>("digest")?);
        if d == 0 || m == 0 {
            return Err(Error::format(4, "zero dimension"));
        }
        let w_enc = r.f64_vec(m * d, "w_enc")?;
        let b_enc = r.f64_vec(m, "b_enc")?;
        let w_dec = r.f64_vec(m * d, "w_dec")?;
        let b_dec = r.f64_vec(d, "b_dec")?;
        if r.remaining() != 0 {
            return Err(Error::format(r.offset(), format!("{} trailing bytes", r.remaining())));
        }
        Ok(SaeModel { params: SaeParams { d, m, w_enc, b_enc, w_dec, b_dec }, k, theta, digest })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&buf)
    }
}
