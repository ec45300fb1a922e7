//! Poison-plan and trigger-bank sidecar files.
//!
//! Plan (`RFBP`): magic, version u16, |J| u32, T u32, y_tar u8, then A,
//! delta, epsilon as little-endian f64, the target indices as u32, the
//! poison matrix as row-major f64, trailing CRC32. The matrix keeps full
//! precision so a run can be replayed bit-exactly from its sidecar.
//!
//! Bank (`RFBT`): magic, version u16, rows u32, T u32, flags u8 (bit 0:
//! estimates present, bit 1: injection present), true trigger rows as
//! interleaved (I, Q) f32, optional estimated rows in the same layout,
//! optional injection block (|I| u32, indices u32, mapping u32), trailing
//! CRC32. Trigger rows are stored in f32, the precision at which triggers
//! are superimposed onto dataset frames.

use crate::CliError;
use rfbd_core::attack::{ComplexMatrix, PoisonPlan, TriggerBank};
use rfbd_core::util::crc32;
use rfbd_core::Complex64;
use std::path::Path;

const PLAN_MAGIC: &[u8; 4] = b"RFBP";
const BANK_MAGIC: &[u8; 4] = b"RFBT";
const VERSION: u16 = 1;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        if self.pos + n > self.bytes.len() {
            return Err("truncated file".into());
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, String> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32, String> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

fn checked_body<'a>(bytes: &'a [u8], magic: &[u8; 4]) -> Result<&'a [u8], String> {
    if bytes.len() < 10 {
        return Err("truncated file".into());
    }
    let (body, crc_bytes) = bytes.split_at(bytes.len() - 4);
    if crc32(body) != u32::from_le_bytes(crc_bytes.try_into().unwrap()) {
        return Err("checksum mismatch".into());
    }
    if &body[0..4] != magic {
        return Err("bad magic".into());
    }
    let version = u16::from_le_bytes(body[4..6].try_into().unwrap());
    if version != VERSION {
        return Err(format!("unsupported version {version}"));
    }
    Ok(&body[6..])
}

pub fn write_plan(plan: &PoisonPlan, frame_len: usize, path: &Path) -> Result<(), CliError> {
    let mut buf = Vec::new();
    buf.extend_from_slice(PLAN_MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(plan.target_indices.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(frame_len as u32).to_le_bytes());
    buf.push(plan.target_class as u8);
    buf.extend_from_slice(&plan.clip_threshold.to_le_bytes());
    buf.extend_from_slice(&plan.delta.to_le_bytes());
    buf.extend_from_slice(&plan.epsilon.to_le_bytes());
    for &j in &plan.target_indices {
        buf.extend_from_slice(&(j as u32).to_le_bytes());
    }
    for row in &plan.poison {
        for v in row {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    crate::write_atomic(path, &buf)
}

pub fn read_plan(path: &Path) -> Result<PoisonPlan, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Runtime(format!("reading {}: {e}", path.display())))?;
    (|| -> Result<PoisonPlan, String> {
        let body = checked_body(&bytes, PLAN_MAGIC)?;
        let mut r = Reader { bytes: body, pos: 0 };
        let rows = r.u32()? as usize;
        let t = r.u32()? as usize;
        let target_class = r.take(1)?[0] as usize;
        let clip_threshold = r.f64()?;
        let delta = r.f64()?;
        let epsilon = r.f64()?;
        let mut target_indices = Vec::with_capacity(rows);
        for _ in 0..rows {
            target_indices.push(r.u32()? as usize);
        }
        let mut poison = Vec::with_capacity(rows);
        for _ in 0..rows {
            let mut row = Vec::with_capacity(t);
            for _ in 0..t {
                row.push(r.f64()?);
            }
            poison.push(row);
        }
        if r.pos != body.len() {
            return Err("trailing bytes".into());
        }
        Ok(PoisonPlan {
            target_indices,
            clip_threshold,
            delta,
            epsilon,
            target_class,
            poison,
        })
    })()
    .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn put_complex_rows(buf: &mut Vec<u8>, rows: &ComplexMatrix) {
    for row in rows {
        for v in row {
            buf.extend_from_slice(&(v.re as f32).to_le_bytes());
            buf.extend_from_slice(&(v.im as f32).to_le_bytes());
        }
    }
}

pub fn write_bank(bank: &TriggerBank, frame_len: usize, path: &Path) -> Result<(), CliError> {
    let mut buf = Vec::new();
    buf.extend_from_slice(BANK_MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(bank.true_triggers.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(frame_len as u32).to_le_bytes());
    let has_estimates = !bank.estimated_triggers.is_empty();
    let has_injection = !bank.injection_indices.is_empty();
    buf.push(u8::from(has_estimates) | (u8::from(has_injection) << 1));
    put_complex_rows(&mut buf, &bank.true_triggers);
    if has_estimates {
        put_complex_rows(&mut buf, &bank.estimated_triggers);
    }
    if has_injection {
        buf.extend_from_slice(&(bank.injection_indices.len() as u32).to_le_bytes());
        for &i in &bank.injection_indices {
            buf.extend_from_slice(&(i as u32).to_le_bytes());
        }
        for &p in &bank.mapping {
            buf.extend_from_slice(&(p as u32).to_le_bytes());
        }
    }
    let crc = crc32(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    crate::write_atomic(path, &buf)
}

pub fn read_bank(path: &Path) -> Result<TriggerBank, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Runtime(format!("reading {}: {e}", path.display())))?;
    (|| -> Result<TriggerBank, String> {
        let body = checked_body(&bytes, BANK_MAGIC)?;
        let mut r = Reader { bytes: body, pos: 0 };
        let rows = r.u32()? as usize;
        let t = r.u32()? as usize;
        let flags = r.take(1)?[0];
        let mut read_rows = |r: &mut Reader| -> Result<ComplexMatrix, String> {
            let mut out = Vec::with_capacity(rows);
            for _ in 0..rows {
                let mut row = Vec::with_capacity(t);
                for _ in 0..t {
                    let re = r.f32()? as f64;
                    let im = r.f32()? as f64;
                    row.push(Complex64::new(re, im));
                }
                out.push(row);
            }
            Ok(out)
        };
        let true_triggers = read_rows(&mut r)?;
        let estimated_triggers = if flags & 1 != 0 {
            read_rows(&mut r)?
        } else {
            Vec::new()
        };
        let (injection_indices, mapping) = if flags & 2 != 0 {
            let k = r.u32()? as usize;
            let mut idx = Vec::with_capacity(k);
            for _ in 0..k {
                idx.push(r.u32()? as usize);
            }
            let mut map = Vec::with_capacity(k);
            for _ in 0..k {
                map.push(r.u32()? as usize);
            }
            (idx, map)
        } else {
            (Vec::new(), Vec::new())
        };
        if r.pos != body.len() {
            return Err("trailing bytes".into());
        }
        Ok(TriggerBank {
            true_triggers,
            estimated_triggers,
            injection_indices,
            mapping,
        })
    })()
    .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}
