//! Versioned binary container for named `f64` tensors.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes  "CTCLABCK"
//! version      u32
//! digest       32 bytes SHA-256 of the config bytes
//! config_len   u32
//! config       config_len bytes of UTF-8 JSON
//! count        u32
//! count × { name_len u32, name bytes, rows u64, cols u64, rows*cols f64 }
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::tensor::Tensor2D;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"CTCLABCK";
pub const VERSION: u32 = 1;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub version: u32,
    pub digest: String,
    pub config_json: String,
    pub tensors: Vec<(String, Tensor2D)>,
}

impl Container {
    pub fn new(config_json: String, tensors: Vec<(String, Tensor2D)>) -> Self {
        Self {
            version: VERSION,
            digest: sha256_hex(config_json.as_bytes()),
            config_json,
            tensors,
        }
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor2D> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.extend_from_slice(&hex::decode(&self.digest).expect("digest is hex"));
        out.extend_from_slice(&(self.config_json.len() as u32).to_le_bytes());
        out.extend_from_slice(self.config_json.as_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rows() as u64).to_le_bytes());
            out.extend_from_slice(&(t.cols() as u64).to_le_bytes());
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let mut digest = [0u8; 32];
        read_exact(&mut r, &mut digest)?;
        let digest = hex::encode(digest);
        let config_len = read_u32(&mut r)? as usize;
        let mut config = vec![0u8; config_len];
        read_exact(&mut r, &mut config)?;
        let config_json = String::from_utf8(config)
            .map_err(|_| Error::Checkpoint("config is not UTF-8".into()))?;
        if sha256_hex(config_json.as_bytes()) != digest {
            return Err(Error::ConfigDigestMismatch {
                expected: sha256_hex(config_json.as_bytes()),
                found: digest,
            });
        }
        let count = read_u32(&mut r)? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = read_u32(&mut r)? as usize;
            let mut name = vec![0u8; name_len];
            read_exact(&mut r, &mut name)?;
            let name = String::from_utf8(name)
                .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
            let rows = read_u64(&mut r)? as usize;
            let cols = read_u64(&mut r)? as usize;
            let n = rows
                .checked_mul(cols)
                .filter(|n| n.saturating_mul(8) <= r.len())
                .ok_or_else(|| Error::Checkpoint(format!("tensor {name} truncated")))?;
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                let mut b = [0u8; 8];
                read_exact(&mut r, &mut b)?;
                data.push(f64::from_le_bytes(b));
            }
            tensors.push((name, Tensor2D::from_vec(rows, cols, data)?));
        }
        if !r.is_empty() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        Ok(Self {
            version,
            digest,
            config_json,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        f.sync_all()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Checkpoint("unexpected end of data".into()))
}

fn read_u32(r: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut &[u8]) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}
