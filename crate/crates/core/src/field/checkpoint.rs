//! Versioned binary checkpoints: a JSON header followed by named f64 arrays.
//!
//! Layout: magic `TXMCKPT1`, u32 version, u64 header length, header JSON,
//! then each array's values as little-endian f64 in header order.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"TXMCKPT1";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    meta: serde_json::Value,
    arrays: Vec<(String, usize)>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TensorFile {
    /// Free-form metadata, typically the config echo and network shapes.
    pub meta: serde_json::Value,
    pub arrays: Vec<(String, Vec<f64>)>,
}

impl TensorFile {
    pub fn new(meta: serde_json::Value) -> Self {
        Self {
            meta,
            arrays: Vec::new(),
        }
    }

    pub fn push(&mut self, name: &str, values: &[f64]) {
        self.arrays.push((name.to_string(), values.to_vec()));
    }

    pub fn get(&self, name: &str) -> Result<&[f64]> {
        self.arrays
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| Error::Shape(format!("checkpoint has no array '{name}'")))
    }

    pub fn take(&mut self, name: &str, len: usize) -> Result<Vec<f64>> {
        let i = self
            .arrays
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| Error::Shape(format!("checkpoint has no array '{name}'")))?;
        let v = std::mem::take(&mut self.arrays[i].1);
        if v.len() != len {
            return Err(Error::Shape(format!(
                "array '{name}' has {} values, expected {len}",
                v.len()
            )));
        }
        Ok(v)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            meta: self.meta.clone(),
            arrays: self
                .arrays
                .iter()
                .map(|(n, v)| (n.clone(), v.len()))
                .collect(),
        };
        let h = serde_json::to_vec(&header).expect("header serializes");
        let total: usize = self.arrays.iter().map(|(_, v)| v.len() * 8).sum();
        let mut out = Vec::with_capacity(20 + h.len() + total);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(h.len() as u64).to_le_bytes());
        out.extend_from_slice(&h);
        for (_, v) in &self.arrays {
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err("not a checkpoint file".into());
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(format!("unsupported checkpoint version {version}"));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body = &bytes[20..];
        if body.len() < hlen {
            return Err("truncated header".into());
        }
        let header: Header =
            serde_json::from_slice(&body[..hlen]).map_err(|e| format!("bad header: {e}"))?;
        let mut data = &body[hlen..];
        let mut arrays = Vec::with_capacity(header.arrays.len());
        for (name, len) in header.arrays {
            if data.len() < len * 8 {
                return Err(format!("truncated array '{name}'"));
            }
            let v = data[..len * 8]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            data = &data[len * 8..];
            arrays.push((name, v));
        }
        if !data.is_empty() {
            return Err("trailing bytes after arrays".into());
        }
        Ok(Self {
            meta: header.meta,
            arrays,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|r| Error::load(path, r))
    }
}
