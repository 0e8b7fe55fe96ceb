//! Binary checkpoint: `MILR1`, u32-length-prefixed JSON config, then per parameter
//! a u32-length-prefixed UTF-8 name, u32 rows, u32 cols and little-endian f64 data.

use std::path::Path;

use super::config::ModelConfig;
use super::model::MilModel;
use crate::error::{Error, Result};
use crate::numerics::Tensor2;

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"MILR1";

pub fn encode_checkpoint(model: &MilModel) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    let json = serde_json::to_vec(model.config())?;
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for (name, t) in model.parameters() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(t.cols() as u32).to_le_bytes());
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format {
                path: None,
                offset: self.pos,
                msg: format!("truncated while reading {what}"),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()) as usize)
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<MilModel> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(5, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::Format {
            path: None,
            offset: 0,
            msg: "bad magic, expected MILR1".into(),
        });
    }
    let len = r.u32("config length")?;
    let config: ModelConfig = serde_json::from_slice(r.take(len, "config")?)?;
    let mut params = Vec::new();
    while r.pos < bytes.len() {
        let name_len = r.u32("name length")?;
        let offset = r.pos;
        let name = std::str::from_utf8(r.take(name_len, "name")?)
            .map_err(|e| Error::Format {
                path: None,
                offset,
                msg: e.to_string(),
            })?
            .to_string();
        let rows = r.u32("rows")?;
        let cols = r.u32("cols")?;
        let raw = r.take(rows * cols * 8, "tensor data")?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        params.push((name, Tensor2::from_vec(rows, cols, data)?));
    }
    MilModel::from_parameters(config, params)
}

pub fn save_checkpoint(model: &MilModel, path: &Path) -> Result<()> {
    std::fs::write(path, encode_checkpoint(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<MilModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes).map_err(|e| match e {
        Error::Format { offset, msg, .. } => Error::Format {
            path: Some(path.to_path_buf()),
            offset,
            msg,
        },
        other => other,
    })
}
