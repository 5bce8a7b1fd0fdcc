//! The L2IM tensor container.
//!
//! Layout: magic `L2IM`, one version byte (`1`), a little-endian `u64` byte
//! length followed by that many bytes of UTF-8 JSON manifest, then the raw
//! payloads as little-endian IEEE-754 `f64`, row-major. Manifest offsets are
//! byte offsets into the payload section.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"L2IM";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorBlob {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl TensorBlob {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            shape,
            data,
        }
    }

    pub fn from_matrix(name: impl Into<String>, m: &Matrix) -> Self {
        Self::new(name, vec![m.rows(), m.cols()], m.data().to_vec())
    }

    pub fn to_matrix(&self) -> Result<Matrix> {
        match self.shape.as_slice() {
            [r, c] => Matrix::from_vec(*r, *c, self.data.clone()),
            [n] => Matrix::from_vec(1, *n, self.data.clone()),
            s => Err(Error::Shape(format!(
                "blob '{}' of shape {s:?} is not a matrix",
                self.name
            ))),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.shape.is_empty() || self.shape.len() > 4 {
            return Err(Error::Serialization(format!(
                "blob '{}' has {} dims (1-4 allowed)",
                self.name,
                self.shape.len()
            )));
        }
        let expected: usize = self.shape.iter().product();
        if expected != self.data.len() {
            return Err(Error::Serialization(format!(
                "blob '{}' has shape {:?} but {} values",
                self.name,
                self.shape,
                self.data.len()
            )));
        }
        if let Some(v) = self.data.iter().find(|v| !v.is_finite()) {
            return Err(Error::Serialization(format!(
                "blob '{}' contains non-finite value {v}",
                self.name
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    blobs: Vec<Entry>,
    #[serde(default)]
    meta: serde_json::Value,
}

pub fn save_blobs(blobs: &[TensorBlob], path: impl AsRef<Path>) -> Result<()> {
    save_container(blobs, &serde_json::Value::Null, path)
}

pub fn load_blobs(path: impl AsRef<Path>) -> Result<Vec<TensorBlob>> {
    load_container(path).map(|(blobs, _)| blobs)
}

/// Writes blobs together with free-form JSON metadata stored in the manifest.
pub fn save_container(
    blobs: &[TensorBlob],
    meta: &serde_json::Value,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(blobs, meta)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_container(path: impl AsRef<Path>) -> Result<(Vec<TensorBlob>, serde_json::Value)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

pub fn encode(blobs: &[TensorBlob], meta: &serde_json::Value) -> Result<Vec<u8>> {
    let mut entries = Vec::with_capacity(blobs.len());
    let mut offset = 0u64;
    for b in blobs {
        b.validate()?;
        entries.push(Entry {
            name: b.name.clone(),
            shape: b.shape.clone(),
            offset,
        });
        offset += 8 * b.data.len() as u64;
    }
    let manifest = serde_json::to_vec(&Manifest {
        blobs: entries,
        meta: meta.clone(),
    })
    .map_err(|e| Error::Serialization(e.to_string()))?;

    let mut out = Vec::with_capacity(13 + manifest.len() + offset as usize);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
    out.extend_from_slice(&manifest);
    for b in blobs {
        for v in &b.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<(Vec<TensorBlob>, serde_json::Value)> {
    if bytes.len() < 13 || &bytes[..4] != MAGIC {
        return Err(Error::Format("missing L2IM magic".into()));
    }
    if bytes[4] != VERSION {
        return Err(Error::Format(format!(
            "unsupported L2IM version {}",
            bytes[4]
        )));
    }
    let manifest_len = u64::from_le_bytes(bytes[5..13].try_into().expect("8 bytes")) as usize;
    let payload_start = 13usize
        .checked_add(manifest_len)
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| Error::Format("manifest length exceeds file size".into()))?;
    let manifest: Manifest = serde_json::from_slice(&bytes[13..payload_start])
        .map_err(|e| Error::Format(format!("bad manifest: {e}")))?;
    let payload = &bytes[payload_start..];

    let mut blobs = Vec::with_capacity(manifest.blobs.len());
    for e in manifest.blobs {
        let count = e
            .shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Format(format!("blob '{}' shape overflows", e.name)))?;
        let start = e.offset as usize;
        let end = count
            .checked_mul(8)
            .and_then(|n| n.checked_add(start))
            .filter(|&end| end <= payload.len())
            .ok_or_else(|| {
                Error::Format(format!("blob '{}' extends past end of file", e.name))
            })?;
        let data = payload[start..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        blobs.push(TensorBlob {
            name: e.name,
            shape: e.shape,
            data,
        });
    }
    Ok((blobs, manifest.meta))
}

/// Looks a blob up by name.
pub fn find_blob<'a>(blobs: &'a [TensorBlob], name: &str) -> Result<&'a TensorBlob> {
    blobs
        .iter()
        .find(|b| b.name == name)
        .ok_or_else(|| Error::Format(format!("missing blob '{name}'")))
}
