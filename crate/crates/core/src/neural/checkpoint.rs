//! Versioned binary checkpoints.
//!
//! Layout: `DRVK`, u32 version, u8 model kind, u32 F, u32 D, u32 hidden,
//! u8 feature normalization, u32 tensor count, then per tensor a u16 name
//! length, the name, a u64 element count and little-endian f32 values.
//! A CRC32 of everything before it closes the file.

use std::path::Path;

use super::model::{Hyper, ModelKind, ModelParams};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"DRVK";
const VERSION: u32 = 1;
/// Per-utterance mean/variance normalization of log magnitudes; no stored
/// statistics are needed.
const NORM_PER_UTTERANCE: u8 = 1;

pub fn to_bytes(params: &ModelParams<f32>) -> Vec<u8> {
    let h = params.hyper;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(h.kind.code());
    for v in [h.freq_bins, h.embed_dim, h.hidden] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.push(NORM_PER_UTTERANCE);
    let groups = params.groups();
    out.extend_from_slice(&(groups.len() as u32).to_le_bytes());
    for (name, data) in groups {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(data.len() as u64).to_le_bytes());
        for v in data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::InvalidCheckpoint("truncated file".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<ModelParams<f32>> {
    let bad = |m: &str| Error::InvalidCheckpoint(m.to_string());
    if bytes.len() < 8 {
        return Err(bad("file too short"));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    if &body[..4] != MAGIC {
        return Err(bad("not a derevkit checkpoint"));
    }
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    if crc32fast::hash(body) != stored {
        return Err(bad("checksum mismatch"));
    }
    let mut r = Reader { buf: body, pos: 4 };
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::InvalidCheckpoint(format!("unsupported version {version}")));
    }
    let kind = ModelKind::from_code(r.u8()?).ok_or_else(|| bad("unknown model kind"))?;
    let (f, d, h) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    if r.u8()? != NORM_PER_UTTERANCE {
        return Err(bad("unknown feature normalization"));
    }
    let hyper = Hyper {
        kind,
        freq_bins: f,
        embed_dim: d,
        hidden: h,
    };
    if f == 0 || h == 0 || (kind == ModelKind::Proposed && d == 0) || f * d.max(1) > 1 << 24 || h > 1 << 14 {
        return Err(bad("implausible model dimensions"));
    }
    let mut params = ModelParams::<f32>::new(hyper, 0);
    let count = r.u32()? as usize;
    let mut groups = params.groups_mut();
    if count != groups.len() {
        return Err(Error::InvalidCheckpoint(format!(
            "expected {} tensors, found {count}",
            groups.len()
        )));
    }
    for (name, data) in groups.iter_mut() {
        let len = r.u16()? as usize;
        let found = r.take(len)?;
        if found != name.as_bytes() {
            return Err(Error::InvalidCheckpoint(format!(
                "expected tensor {name}, found {}",
                String::from_utf8_lossy(found)
            )));
        }
        let n = r.u64()? as usize;
        if n != data.len() {
            return Err(Error::InvalidCheckpoint(format!(
                "tensor {name} has {n} values, model needs {}",
                data.len()
            )));
        }
        let raw = r.take(4 * n)?;
        for (dst, chunk) in data.iter_mut().zip(raw.chunks_exact(4)) {
            *dst = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        }
    }
    drop(groups);
    if r.pos != body.len() {
        return Err(bad("trailing bytes after tensors"));
    }
    if !params.is_finite() {
        return Err(bad("non-finite parameters"));
    }
    Ok(params)
}

pub fn save_checkpoint(params: &ModelParams<f32>, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    }
    std::fs::write(path, to_bytes(params)).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    from_bytes(&bytes)
}
