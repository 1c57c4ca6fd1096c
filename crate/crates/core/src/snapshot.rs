//! Binary engine snapshots.
//!
//! Layout: four text header lines (`SGCVQ-SNAPSHOT v1`, the dimensions, the codebook version and the
//! engine config as JSON), then length-prefixed little-endian arrays, then a CRC32 of everything
//! before it.

use std::io::{Read, Write};
use std::path::Path;

use crate::config::EngineConfig;
use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::types::{Codebook, SemanticEmbeddingBank, UsageTracker};

pub const SNAPSHOT_MAGIC: &str = "SGCVQ-SNAPSHOT";
pub const SNAPSHOT_VERSION: &str = "v1";

pub fn encode(engine: &Engine) -> Vec<u8> {
    let cfg = engine.config();
    let cb = &engine.codebook;
    let mut out = Vec::new();
    out.extend_from_slice(format!("{SNAPSHOT_MAGIC} {SNAPSHOT_VERSION}\n").as_bytes());
    out.extend_from_slice(
        format!(
            "K={} D={} N={} C={}\n",
            cfg.codebook_size, cfg.code_dim, cfg.num_levels, cfg.num_classes
        )
        .as_bytes(),
    );
    out.extend_from_slice(format!("version={}\n", cb.version()).as_bytes());
    let json = serde_json::to_string(cfg).expect("config serializes");
    out.extend_from_slice(format!("config={json}\n").as_bytes());

    put_f64s(&mut out, &cb.entries);
    put_len(&mut out, cb.entry_class.len());
    for c in &cb.entry_class {
        let v = c.map_or(-1, |c| c as i32);
        out.extend_from_slice(&v.to_le_bytes());
    }
    put_f64s(&mut out, &engine.tracker.ema_usage);
    put_f64s(&mut out, &engine.tracker.class_hist);
    put_len(&mut out, engine.tracker.raw_hits.len());
    for h in &engine.tracker.raw_hits {
        out.extend_from_slice(&h.to_le_bytes());
    }
    put_f64s(&mut out, &engine.bank.weights);
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn decode(bytes: &[u8]) -> Result<Engine> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.line()?;
    let expected = format!("{SNAPSHOT_MAGIC} {SNAPSHOT_VERSION}");
    if magic != expected {
        let found = magic.strip_prefix(SNAPSHOT_MAGIC).map(str::trim);
        return match found {
            Some(v) if !v.is_empty() => Err(Error::VersionMismatch {
                found: v.to_string(),
                expected: SNAPSHOT_VERSION,
            }),
            _ => Err(Error::Format(format!("bad snapshot magic {magic:?}"))),
        };
    }
    let dims = cur.line()?;
    let version_line = cur.line()?;
    let config_line = cur.line()?;

    if bytes.len() < cur.pos + 4 {
        return Err(Error::Truncated);
    }
    let body_end = bytes.len() - 4;
    let stored = u32::from_le_bytes(bytes[body_end..].try_into().expect("4 bytes"));

    let config: EngineConfig = config_line
        .strip_prefix("config=")
        .ok_or_else(|| Error::Format("missing config line".into()))
        .and_then(|j| serde_json::from_str(j).map_err(|e| Error::Format(e.to_string())))?;
    let version: u64 = version_line
        .strip_prefix("version=")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Format("missing version line".into()))?;
    let expected_dims = format!(
        "K={} D={} N={} C={}",
        config.codebook_size, config.code_dim, config.num_levels, config.num_classes
    );
    if dims != expected_dims {
        return Err(Error::Format(format!("dimension line {dims:?} disagrees with config")));
    }

    let k = config.codebook_size;
    let c = config.num_classes;
    let mut body = Cursor {
        bytes: &bytes[..body_end],
        pos: cur.pos,
    };
    // Short arrays are reported as truncation before the checksum is looked at.
    let entries = body.f64s(k * config.code_dim)?;
    let classes = body.i32s(k)?;
    let ema = body.f64s(k)?;
    let hist = body.f64s(k * c)?;
    let hits = body.u64s(k * c)?;
    let guided = config.clone().validate()?.partition().guided_dim();
    let w = body.f64s(c * guided)?;
    if body.pos != body_end {
        return Err(Error::Format("trailing bytes after snapshot arrays".into()));
    }
    let computed = crc32fast::hash(&bytes[..body_end]);
    if computed != stored {
        return Err(Error::Checksum { stored, computed });
    }

    let entry_class = classes
        .into_iter()
        .map(|v| match v {
            -1 => Ok(None),
            v if v >= 0 && (v as usize) < c => Ok(Some(v as usize)),
            v => Err(Error::ClassOutOfRange {
                class: v as usize,
                num_classes: c,
            }),
        })
        .collect::<Result<Vec<_>>>()?;
    let codebook = Codebook::from_parts(k, config.code_dim, entries, entry_class, version);
    let tracker = UsageTracker::from_parts(c, ema, hist, hits);
    let bank = SemanticEmbeddingBank::from_rows(c, guided, w)?;
    Engine::from_state(config, codebook, tracker, bank)
}

pub fn save(engine: &Engine, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode(engine))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Engine> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes)
}

fn put_len(out: &mut Vec<u8>, n: usize) {
    out.extend_from_slice(&(n as u64).to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, xs: &[f64]) {
    put_len(out, xs.len());
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn line(&mut self) -> Result<&'a str> {
        let rest = &self.bytes[self.pos..];
        let end = rest.iter().position(|&b| b == b'\n').ok_or(Error::Truncated)?;
        self.pos += end + 1;
        std::str::from_utf8(&rest[..end]).map_err(|e| Error::Format(e.to_string()))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(Error::Truncated)?;
        if end > self.bytes.len() {
            return Err(Error::Truncated);
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn len(&mut self, expected: usize) -> Result<()> {
        let n = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        if n != expected as u64 {
            return Err(Error::Format(format!("array length {n}, expected {expected}")));
        }
        Ok(())
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        self.len(n)?;
        let raw = self.take(n * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect())
    }

    fn u64s(&mut self, n: usize) -> Result<Vec<u64>> {
        self.len(n)?;
        let raw = self.take(n * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|b| u64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect())
    }

    fn i32s(&mut self, n: usize) -> Result<Vec<i32>> {
        self.len(n)?;
        let raw = self.take(n * 4)?;
        Ok(raw
            .chunks_exact(4)
            .map(|b| i32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{sample_batch, MixtureSpec};
    use crate::types::BatchShape;

    fn trained() -> Engine {
        let cfg = EngineConfig {
            codebook_size: 8,
            code_dim: 8,
            num_levels: 2,
            num_classes: 3,
            ..EngineConfig::default()
        };
        let mut engine = Engine::new(cfg).unwrap();
        let spec = MixtureSpec {
            unlabeled_fraction: 0.2,
            ..MixtureSpec::uniform(3, 4.0, 0.5, 0.5, 1)
        };
        for t in 0..3 {
            let batch = sample_batch(&spec, BatchShape::new(2, 4, 4), engine.partition(), t).unwrap();
            engine.step(&batch).unwrap();
        }
        engine
    }

    #[test]
    fn round_trip() {
        let engine = trained();
        let back = decode(&encode(&engine)).unwrap();
        assert_eq!(back, engine);
        assert_eq!(back.codebook.version(), 3);
    }

    #[test]
    fn future_version_is_rejected() {
        let mut bytes = encode(&trained());
        bytes[SNAPSHOT_MAGIC.len() + 2] = b'9';
        assert!(matches!(decode(&bytes), Err(Error::VersionMismatch { .. })));
    }

    #[test]
    fn truncation_is_detected() {
        let bytes = encode(&trained());
        for cut in [10, bytes.len() / 2, bytes.len() - 5] {
            assert!(matches!(decode(&bytes[..cut]), Err(Error::Truncated)), "cut at {cut}");
        }
    }

    #[test]
    fn corruption_is_detected() {
        let mut bytes = encode(&trained());
        let n = bytes.len();
        bytes[n - 20] ^= 0x40;
        assert!(matches!(decode(&bytes), Err(Error::Checksum { .. })));
    }
}
