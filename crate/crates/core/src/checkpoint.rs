//! Binary checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "ACDF" | u32 version | u32 config_len | config text (UTF-8)
//! u32 tensor_count
//! per tensor: u32 name_len | name | u32 rank | rank × u64 dim | f32 values
//! u32 CRC-32 of every preceding byte
//! ```
//!
//! Values are stored as `f32`; loading widens them back to `f64`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::AcDiffModel;
use crate::numerics::Tensor;
use crate::run::RunConfig;

pub const MAGIC: &[u8; 4] = b"ACDF";
pub const VERSION: u32 = 1;

pub fn encode(config: &RunConfig, model: &AcDiffModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let text = config.to_text();
    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    out.extend_from_slice(&(model.store.len() as u32).to_le_bytes());
    for (name, t) in model.store.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for d in t.shape() {
            out.extend_from_slice(&(*d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        let end =
            end.ok_or_else(|| Error::format(self.pos as u64, format!("need {n} more bytes")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn string(&mut self) -> Result<String> {
        let at = self.pos as u64;
        let len = self.u32()? as usize;
        String::from_utf8(self.take(len)?.to_vec())
            .map_err(|_| Error::format(at, "string is not UTF-8"))
    }
}

/// Parses and validates a checkpoint, rebuilding the model it describes.
pub fn decode(bytes: &[u8]) -> Result<(RunConfig, AcDiffModel)> {
    if bytes.len() < 8 {
        return Err(Error::format(0, "file too short for a checkpoint"));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::format(0, "bad magic, expected ACDF"));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let actual = crc32fast::hash(body);
    if stored != actual {
        return Err(Error::CorruptCheckpoint(format!(
            "CRC mismatch: stored {stored:08x}, computed {actual:08x}"
        )));
    }
    let mut r = Reader {
        bytes: body,
        pos: 4,
    };
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let config = RunConfig::parse(&r.string()?)?;
    let mut model = AcDiffModel::new(config.model.clone(), config.seed)?;
    let count = r.u32()? as usize;
    if count != model.store.len() {
        return Err(Error::CorruptCheckpoint(format!(
            "expected {} tensors, found {count}",
            model.store.len()
        )));
    }
    let mut seen = vec![false; count];
    for _ in 0..count {
        let at = r.pos as u64;
        let name = r.string()?;
        let id = model
            .store
            .find(&name)
            .ok_or_else(|| Error::CorruptCheckpoint(format!("unexpected tensor `{name}`")))?;
        if std::mem::replace(&mut seen[id.index()], true) {
            return Err(Error::CorruptCheckpoint(format!(
                "tensor `{name}` appears twice"
            )));
        }
        let rank = r.u32()? as usize;
        let shape = (0..rank)
            .map(|_| r.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let numel = shape.iter().try_fold(1usize, |acc, d| acc.checked_mul(*d));
        let numel = numel.ok_or_else(|| Error::format(at, "tensor size overflows"))?;
        let raw = r.take(
            numel
                .checked_mul(4)
                .ok_or_else(|| Error::format(at, "tensor size overflows"))?,
        )?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();
        model
            .store
            .set(&name, Tensor::new(shape, data)?)
            .map_err(|e| match e {
                Error::Dimension { .. } => {
                    Error::CorruptCheckpoint(format!("tensor `{name}` has the wrong shape"))
                }
                other => other,
            })?;
    }
    if r.pos != body.len() {
        return Err(Error::format(r.pos as u64, "trailing bytes before CRC"));
    }
    Ok((config, model))
}

pub fn save(path: &Path, config: &RunConfig, model: &AcDiffModel) -> Result<()> {
    std::fs::write(path, encode(config, model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<(RunConfig, AcDiffModel)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
