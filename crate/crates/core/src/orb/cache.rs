//! Per-frame descriptor cache files.
//!
//! Layout (little endian):
//!
//! ```text
//! magic      6 bytes  "SQORB\0"
//! version    u32
//! key        32 bytes  sha256(config json || image bytes)
//! frame_id   u64
//! count      u32
//! count x { x f64, y f64, score f64, angle f64, level u32, bits 4 x u64 }
//! ```

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::dataset::FrameId;
use crate::error::{Error, Result};
use crate::fsutil;

use super::{BinaryDescriptor, DescriptorSet, Keypoint, OrbConfig};

const MAGIC: &[u8; 6] = b"SQORB\0";
const VERSION: u32 = 1;
const RECORD_LEN: usize = 8 * 4 + 4 + 8 * 4;

/// Cache key for a frame: depends on the extraction config and the encoded image.
pub fn cache_key(config: &OrbConfig, image_bytes: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(VERSION.to_le_bytes());
    h.update(serde_json::to_vec(config).expect("config serialises"));
    h.update(image_bytes);
    h.finalize().into()
}

pub fn encode(set: &DescriptorSet, key: &[u8; 32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(54 + set.len() * RECORD_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(key);
    out.extend_from_slice(&(set.frame_id.0 as u64).to_le_bytes());
    out.extend_from_slice(&(set.len() as u32).to_le_bytes());
    for (kp, d) in set.keypoints.iter().zip(&set.descriptors) {
        for v in [kp.x, kp.y, kp.score, kp.angle] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(kp.level as u32).to_le_bytes());
        for w in d.0 {
            out.extend_from_slice(&w.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::Cache("truncated file".into()));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Decodes a cache blob. Returns `Ok(None)` when the key does not match.
pub fn decode(bytes: &[u8], key: &[u8; 32]) -> Result<Option<DescriptorSet>> {
    let mut r = Reader { buf: bytes };
    if r.take(6)? != MAGIC {
        return Err(Error::Cache("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Ok(None);
    }
    if r.take(32)? != key {
        return Ok(None);
    }
    let frame_id = FrameId(r.u64()? as usize);
    let count = r.u32()? as usize;
    if r.buf.len() != count * RECORD_LEN {
        return Err(Error::Cache(format!(
            "expected {count} records, found {} bytes",
            r.buf.len()
        )));
    }
    let mut set = DescriptorSet::empty(frame_id);
    for _ in 0..count {
        let x = r.f64()?;
        let y = r.f64()?;
        let score = r.f64()?;
        let angle = r.f64()?;
        let level = r.u32()? as usize;
        let mut words = [0u64; 4];
        for w in &mut words {
            *w = r.u64()?;
        }
        set.keypoints.push(Keypoint {
            x,
            y,
            score,
            angle,
            level,
        });
        set.descriptors.push(BinaryDescriptor(words));
    }
    Ok(Some(set))
}

/// Reads a cached set if the file exists and was written for `key`.
pub fn load(path: &Path, key: &[u8; 32]) -> Result<Option<DescriptorSet>> {
    match fs::read(path) {
        Ok(bytes) => decode(&bytes, key),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(Error::io(path, e)),
    }
}

pub fn store(path: &Path, set: &DescriptorSet, key: &[u8; 32]) -> Result<()> {
    fsutil::write_atomic(path, &encode(set, key))
}
