//! Feature and token files.
//!
//! Both start with a magic line and a `B=.. H=.. W=..` dimension line. Features follow as
//! little-endian f64 in position-major order, then one i32 label per position (-1 for unlabeled).
//! Token files hold one i32 index per position.

use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{BatchShape, FeatureBatch};

pub const FEATURE_MAGIC: &str = "SGCVQ-FEAT v1";
pub const TOKEN_MAGIC: &str = "SGCVQ-TOKENS v1";

pub fn encode_features(batch: &FeatureBatch) -> Vec<u8> {
    let s = batch.shape;
    let mut out = format!(
        "{FEATURE_MAGIC}\nB={} H={} W={} D={}\n",
        s.batch, s.height, s.width, batch.dim
    )
    .into_bytes();
    for x in &batch.features {
        out.extend_from_slice(&x.to_le_bytes());
    }
    for l in &batch.labels {
        out.extend_from_slice(&l.map_or(-1, |c| c as i32).to_le_bytes());
    }
    out
}

pub fn decode_features(bytes: &[u8]) -> Result<FeatureBatch> {
    let (rest, fields) = header(bytes, FEATURE_MAGIC, &["B", "H", "W", "D"])?;
    let shape = BatchShape::new(fields[0], fields[1], fields[2]);
    let dim = fields[3];
    let p = shape.positions();
    let need = p * dim * 8 + p * 4;
    if rest.len() < need {
        return Err(Error::Truncated);
    }
    if rest.len() > need {
        return Err(Error::Format("trailing bytes in feature file".into()));
    }
    let (f, l) = rest.split_at(p * dim * 8);
    let features = f
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
        .collect();
    let labels = l
        .chunks_exact(4)
        .map(|b| match i32::from_le_bytes(b.try_into().expect("4 bytes")) {
            -1 => Ok(None),
            v if v >= 0 => Ok(Some(v as usize)),
            v => Err(Error::Format(format!("bad label {v}"))),
        })
        .collect::<Result<Vec<_>>>()?;
    FeatureBatch::new(shape, dim, features, labels)
}

pub fn encode_tokens(shape: BatchShape, indices: &[usize]) -> Vec<u8> {
    let mut out = format!(
        "{TOKEN_MAGIC}\nB={} H={} W={}\n",
        shape.batch, shape.height, shape.width
    )
    .into_bytes();
    for &k in indices {
        out.extend_from_slice(&(k as i32).to_le_bytes());
    }
    out
}

pub fn decode_tokens(bytes: &[u8]) -> Result<(BatchShape, Vec<usize>)> {
    let (rest, fields) = header(bytes, TOKEN_MAGIC, &["B", "H", "W"])?;
    let shape = BatchShape::new(fields[0], fields[1], fields[2]);
    if rest.len() != shape.positions() * 4 {
        return Err(Error::Truncated);
    }
    let indices = rest
        .chunks_exact(4)
        .map(|b| i32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
        .collect();
    Ok((shape, indices))
}

pub fn write_features(batch: &FeatureBatch, path: &Path) -> Result<()> {
    std::fs::write(path, encode_features(batch))?;
    Ok(())
}

pub fn read_features(path: &Path) -> Result<FeatureBatch> {
    decode_features(&std::fs::read(path)?)
}

pub fn write_tokens(shape: BatchShape, indices: &[usize], path: &Path) -> Result<()> {
    std::fs::write(path, encode_tokens(shape, indices))?;
    Ok(())
}

pub fn read_tokens(path: &Path) -> Result<(BatchShape, Vec<usize>)> {
    decode_tokens(&std::fs::read(path)?)
}

fn header<'a>(bytes: &'a [u8], magic: &str, keys: &[&str]) -> Result<(&'a [u8], Vec<usize>)> {
    let mut lines = bytes.splitn(3, |&b| b == b'\n');
    let first = lines.next().unwrap_or_default();
    if first != magic.as_bytes() {
        return Err(Error::Format(format!("expected {magic:?} header")));
    }
    let dims = lines.next().ok_or(Error::Truncated)?;
    let rest = lines.next().ok_or(Error::Truncated)?;
    let dims = std::str::from_utf8(dims).map_err(|e| Error::Format(e.to_string()))?;
    let parts: Vec<&str> = dims.split_whitespace().collect();
    if parts.len() != keys.len() {
        return Err(Error::Format(format!("bad dimension line {dims:?}")));
    }
    let mut out = Vec::with_capacity(keys.len());
    for (part, key) in parts.iter().zip(keys) {
        let v = part
            .strip_prefix(key)
            .and_then(|s| s.strip_prefix('='))
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format(format!("bad dimension field {part:?}")))?;
        out.push(v);
    }
    Ok((rest, out))
}
