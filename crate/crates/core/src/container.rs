//! Binary container shared by trainee checkpoints, bandit models and replay buffers.
//!
//! Layout, little-endian:
//! `magic "CURR" | format_version u32 | step u64 | payload length u64 | payload bytes`.

use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CURR";
const HEADER_LEN: usize = 4 + 4 + 8 + 8;

/// Format versions of the payload kinds stored in containers.
pub mod format {
    pub const SYNTHETIC_TRAINEE: u32 = 1;
    pub const MLP_MODEL: u32 = 2;
    pub const REPLAY_BUFFER: u32 = 3;
    pub const RIGGED_TRAINEE: u32 = 4;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Container {
    pub format_version: u32,
    pub step: u64,
    pub payload: Vec<u8>,
}

impl Container {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.format_version.to_le_bytes());
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&(self.payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Corrupt(format!(
                "container header needs {HEADER_LEN} bytes, found {}",
                bytes.len()
            )));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Corrupt("bad magic".into()));
        }
        let format_version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        let step = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let len = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
        let body = &bytes[HEADER_LEN..];
        if body.len() as u64 != len {
            return Err(Error::Corrupt(format!(
                "payload length {len} but {} bytes present",
                body.len()
            )));
        }
        Ok(Self {
            format_version,
            step,
            payload: body.to_vec(),
        })
    }

    /// Decode and require a specific payload format.
    pub fn decode_expecting(bytes: &[u8], expected: u32) -> Result<Self> {
        let c = Self::decode(bytes)?;
        if c.format_version != expected {
            return Err(Error::VersionMismatch {
                expected,
                found: c.format_version,
            });
        }
        Ok(c)
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        write_creating(path, &self.encode())
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
        Self::decode(&bytes)
    }
}

/// Little-endian cursor over a payload.
/// Write `bytes` to `path`, creating missing parent directories.
pub(crate) fn write_creating(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::file(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::file(path, e))
}

pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Corrupt(format!("payload truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn finish(self) -> Result<()> {
        if self.pos == self.bytes.len() {
            Ok(())
        } else {
            Err(Error::Corrupt(format!(
                "{} trailing bytes",
                self.bytes.len() - self.pos
            )))
        }
    }
}

pub(crate) fn put_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}
