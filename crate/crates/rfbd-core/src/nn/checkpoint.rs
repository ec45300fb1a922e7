//! Binary model checkpoints.
//!
//! Layout: magic `RFBM`, version u16, tensor count u32, then per tensor a
//! u16 name length + name bytes, u8 rank, u32 dims and little-endian f32
//! values. The optimizer state follows with the same tensor layout (step
//! count u64, moment tensor count u32, `m:`/`v:`-prefixed tensors), closed
//! by a CRC32 of all preceding bytes.

use super::net::{ModelParameters, ParamEntry};
use super::tensor::Tensor;
use super::NnError;
use crate::util::crc32;
use std::fs;
use std::path::Path;

const MAGIC: &[u8; 4] = b"RFBM";
const VERSION: u16 = 1;

fn put_tensor(buf: &mut Vec<u8>, name: &str, t: &Tensor<f32>) {
    buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
    buf.extend_from_slice(name.as_bytes());
    buf.push(t.dims().len() as u8);
    for &d in t.dims() {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in t.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        if self.pos + n > self.bytes.len() {
            return Err(NnError::Format("truncated checkpoint".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, NnError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, NnError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn tensor(&mut self) -> Result<(String, Tensor<f32>), NnError> {
        let name_len = self.u16()? as usize;
        let name = String::from_utf8(self.take(name_len)?.to_vec())
            .map_err(|_| NnError::Format("tensor name is not UTF-8".into()))?;
        let rank = self.take(1)?[0] as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(self.u32()? as usize);
        }
        let n: usize = dims.iter().product();
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            values.push(f32::from_le_bytes(self.take(4)?.try_into().unwrap()));
        }
        Ok((name, Tensor::from_values(dims, values)?))
    }
}

/// Serialize parameters and optimizer state to `path` (atomic write).
pub fn save_checkpoint(params: &ModelParameters<f32>, path: &Path) -> Result<(), NnError> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(params.entries.len() as u32).to_le_bytes());
    for e in &params.entries {
        put_tensor(&mut buf, &e.name, &e.value);
    }
    buf.extend_from_slice(&params.step.to_le_bytes());
    buf.extend_from_slice(&(2 * params.entries.len() as u32).to_le_bytes());
    for e in &params.entries {
        put_tensor(&mut buf, &format!("m:{}", e.name), &e.m);
        put_tensor(&mut buf, &format!("v:{}", e.name), &e.v);
    }
    let crc = crc32(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());

    let tmp = path.with_extension("tmp");
    fs::write(&tmp, &buf)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Read a checkpoint back; verifies magic, version, CRC and that every
/// moment tensor pairs up with its parameter shape.
pub fn load_checkpoint(path: &Path) -> Result<ModelParameters<f32>, NnError> {
    let bytes = fs::read(path)?;
    if bytes.len() < 14 {
        return Err(NnError::Format("truncated checkpoint".into()));
    }
    let (body, crc_bytes) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(crc_bytes.try_into().unwrap());
    if crc32(body) != stored {
        return Err(NnError::Format("checksum mismatch".into()));
    }

    let mut r = Reader {
        bytes: body,
        pos: 0,
    };
    if r.take(4)? != MAGIC {
        return Err(NnError::Format("bad magic, not a model checkpoint".into()));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(NnError::Format(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let count = r.u32()? as usize;
    let mut named = Vec::with_capacity(count);
    for _ in 0..count {
        named.push(r.tensor()?);
    }
    let step = r.u64()?;
    let moment_count = r.u32()? as usize;
    if moment_count != 2 * count {
        return Err(NnError::Format(format!(
            "{moment_count} moment tensors for {count} parameters"
        )));
    }
    let mut entries = Vec::with_capacity(count);
    for (name, value) in named {
        let (m_name, m) = r.tensor()?;
        let (v_name, v) = r.tensor()?;
        if m_name != format!("m:{name}") || v_name != format!("v:{name}") {
            return Err(NnError::Format(format!(
                "moment tensors {m_name}/{v_name} do not pair with {name}"
            )));
        }
        if m.dims() != value.dims() || v.dims() != value.dims() {
            return Err(NnError::Format(format!(
                "moment shape mismatch for parameter {name}"
            )));
        }
        entries.push(ParamEntry { name, value, m, v });
    }
    if r.pos != body.len() {
        return Err(NnError::Format("trailing bytes after optimizer state".into()));
    }
    Ok(ModelParameters { entries, step })
}
