//! Binary dataset files.
//!
//! Layout: magic `RFBD`, version u16, M u32, N u16, N_cp u16, O u8,
//! flags u8 (bit 0: contains poisoned frames); per frame a label u8, the
//! SNR as little-endian f32, a poisoned u8 and `N + N_cp` interleaved
//! (I, Q) little-endian f32 pairs; trailing CRC32 of all preceding bytes.

use crate::CliError;
use rfbd_core::pipelines::RealDataset;
use rfbd_core::util::crc32;
use std::path::Path;

const MAGIC: &[u8; 4] = b"RFBD";
const VERSION: u16 = 1;

#[derive(Debug, Clone)]
pub struct DatasetHeader {
    pub m: usize,
    pub n_subcarriers: usize,
    pub cp_len: usize,
    pub n_classes: usize,
    pub has_poisoned: bool,
}

pub fn encode_dataset(
    ds: &RealDataset,
    n_subcarriers: usize,
    cp_len: usize,
) -> Result<Vec<u8>, CliError> {
    if n_subcarriers + cp_len != ds.frame_len {
        return Err(CliError::Runtime(format!(
            "frame length {} does not match N {} + N_cp {}",
            ds.frame_len, n_subcarriers, cp_len
        )));
    }
    if ds.n_classes > u8::MAX as usize || ds.len() > u32::MAX as usize {
        return Err(CliError::Runtime("dataset too large for the format".into()));
    }
    let mut buf = Vec::with_capacity(16 + ds.len() * (7 + 8 * ds.frame_len));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(ds.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(n_subcarriers as u16).to_le_bytes());
    buf.extend_from_slice(&(cp_len as u16).to_le_bytes());
    buf.push(ds.n_classes as u8);
    buf.push(u8::from(ds.poisoned.iter().any(|&p| p)));
    for i in 0..ds.len() {
        buf.push(ds.labels[i] as u8);
        buf.extend_from_slice(&(ds.snr_db[i] as f32).to_le_bytes());
        buf.push(u8::from(ds.poisoned[i]));
        let row = ds.feature_row(i);
        let (re, im) = row.split_at(ds.frame_len);
        for (r, q) in re.iter().zip(im) {
            buf.extend_from_slice(&r.to_le_bytes());
            buf.extend_from_slice(&q.to_le_bytes());
        }
    }
    let crc = crc32(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    Ok(buf)
}

pub fn write_dataset(
    ds: &RealDataset,
    n_subcarriers: usize,
    cp_len: usize,
    path: &Path,
) -> Result<(), CliError> {
    let buf = encode_dataset(ds, n_subcarriers, cp_len)?;
    crate::write_atomic(path, &buf)
}

pub fn read_dataset(path: &Path) -> Result<(DatasetHeader, RealDataset), CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Runtime(format!("reading {}: {e}", path.display())))?;
    decode_dataset(&bytes).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn decode_dataset(bytes: &[u8]) -> Result<(DatasetHeader, RealDataset), String> {
    if bytes.len() < 18 {
        return Err("truncated dataset file".into());
    }
    let (body, crc_bytes) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(crc_bytes.try_into().unwrap());
    if crc32(body) != stored {
        return Err("checksum mismatch".into());
    }
    if &body[0..4] != MAGIC {
        return Err("bad magic, not a dataset file".into());
    }
    let version = u16::from_le_bytes(body[4..6].try_into().unwrap());
    if version != VERSION {
        return Err(format!("unsupported dataset version {version}"));
    }
    let m = u32::from_le_bytes(body[6..10].try_into().unwrap()) as usize;
    let n = u16::from_le_bytes(body[10..12].try_into().unwrap()) as usize;
    let cp = u16::from_le_bytes(body[12..14].try_into().unwrap()) as usize;
    let o = body[14] as usize;
    let has_poisoned = body[15] != 0;
    let t = n + cp;
    let frame_bytes = 1 + 4 + 1 + 8 * t;
    if body.len() != 16 + m * frame_bytes {
        return Err(format!(
            "size mismatch: {} bytes for {m} frames of {t} samples",
            body.len()
        ));
    }

    let mut labels = Vec::with_capacity(m);
    let mut snr_db = Vec::with_capacity(m);
    let mut poisoned = Vec::with_capacity(m);
    let mut features = Vec::with_capacity(m * 2 * t);
    let mut pos = 16;
    for _ in 0..m {
        let label = body[pos] as usize;
        if label >= o {
            return Err(format!("label {label} outside {o} classes"));
        }
        labels.push(label);
        snr_db.push(f32::from_le_bytes(body[pos + 1..pos + 5].try_into().unwrap()) as f64);
        poisoned.push(body[pos + 5] != 0);
        pos += 6;
        let mut re = Vec::with_capacity(t);
        let mut im = Vec::with_capacity(t);
        for _ in 0..t {
            re.push(f32::from_le_bytes(body[pos..pos + 4].try_into().unwrap()));
            im.push(f32::from_le_bytes(body[pos + 4..pos + 8].try_into().unwrap()));
            pos += 8;
        }
        features.extend(re);
        features.extend(im);
    }

    let mut onehot = vec![0.0f32; m * o];
    for (i, &l) in labels.iter().enumerate() {
        onehot[i * o + l] = 1.0;
    }
    Ok((
        DatasetHeader {
            m,
            n_subcarriers: n,
            cp_len: cp,
            n_classes: o,
            has_poisoned,
        },
        RealDataset {
            frame_len: t,
            n_classes: o,
            features,
            onehot,
            labels,
            snr_db,
            poisoned,
        },
    ))
}
