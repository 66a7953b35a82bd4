//! Binary checkpoint format for [`ParameterSet`].
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "FEDF"            4 bytes magic
//! version           u16
//! header_len        u32
//! header            header_len bytes of UTF-8 JSON:
//!                   {"base_id":..,"arch_hash":..,"tensors":[{"name":..,"shape":[..]},..]}
//! payload           f32 values of every tensor, concatenated in header order
//! ```
//!
//! Tensors appear in lexicographic name order.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{ParameterSet, Tensor};

pub const MAGIC: &[u8; 4] = b"FEDF";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    base_id: String,
    arch_hash: String,
    tensors: Vec<TensorHeader>,
}

#[derive(Serialize, Deserialize)]
struct TensorHeader {
    name: String,
    shape: Vec<usize>,
}

pub fn encode(params: &ParameterSet) -> Result<Vec<u8>> {
    let header = Header {
        base_id: params.base_id().to_string(),
        arch_hash: params.arch_hash().to_string(),
        tensors: params
            .iter()
            .map(|(name, t)| TensorHeader {
                name: name.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let header = serde_json::to_vec(&header)?;
    let header_len = u32::try_from(header.len())
        .map_err(|_| Error::Checkpoint("header exceeds u32 length".into()))?;

    let mut out = Vec::with_capacity(10 + header.len() + 4 * params.num_values());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&header_len.to_le_bytes());
    out.extend_from_slice(&header);
    for (_, t) in params.iter() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<ParameterSet> {
    let err = |msg: &str| Error::Checkpoint(msg.to_string());
    if bytes.len() < 10 {
        return Err(err("truncated preamble"));
    }
    if &bytes[..4] != MAGIC {
        return Err(err("bad magic"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let header_len = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let header_end = 10usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| err("truncated header"))?;
    let header: Header = serde_json::from_slice(&bytes[10..header_end])?;

    if !header.tensors.windows(2).all(|w| w[0].name < w[1].name) {
        return Err(err("tensor names not in strictly increasing order"));
    }

    let mut cursor = header_end;
    let mut entries = BTreeMap::new();
    for th in header.tensors {
        let count: usize = th.shape.iter().product();
        let end = cursor
            .checked_add(count * 4)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("payload truncated in `{}`", th.name)))?;
        let data = bytes[cursor..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        cursor = end;
        entries.insert(th.name, Tensor::new(th.shape, data)?);
    }
    if cursor != bytes.len() {
        return Err(err("trailing bytes after payload"));
    }
    Ok(ParameterSet::with_entries(
        header.base_id,
        header.arch_hash,
        entries,
    ))
}

pub fn save(params: &ParameterSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, encode(params)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<ParameterSet> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
