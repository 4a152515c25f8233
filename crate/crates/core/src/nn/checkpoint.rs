//! Little-endian checkpoint format:
//!
//! ```text
//! "GMRF" | u32 version | u32 len + JSON metadata | u32 tensor count
//! per tensor: u16 len + name | u8 rank | u32 dims... | f32 values...
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rules::GameConfig;

use super::{Network, NetworkConfig, ARCHITECTURE};

const MAGIC: &[u8; 4] = b"GMRF";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub game: GameConfig,
    pub network: NetworkConfig,
    pub training_step: u64,
    pub seed: u64,
    pub architecture: String,
    /// Free-form provenance such as the transfer source.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub notes: BTreeMap<String, String>,
}

impl CheckpointMeta {
    pub fn new(game: GameConfig, network: NetworkConfig, training_step: u64, seed: u64) -> Self {
        CheckpointMeta { game, network, training_step, seed, architecture: ARCHITECTURE.into(), notes: BTreeMap::new() }
    }
}

pub fn encode_checkpoint(net: &Network, meta: &CheckpointMeta) -> Result<Vec<u8>> {
    if meta.network != *net.config() {
        return Err(Error::Mismatch("checkpoint metadata describes a different network".into()));
    }
    let json = serde_json::to_vec(meta)?;
    let tensors = net.named_tensors();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&u32::try_from(json.len()).expect("metadata under 4 GiB").to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.shape().len() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, field: &'static str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Checkpoint {
                field,
                detail: format!("file ends at byte {} but {n} more bytes are needed", self.bytes.len()),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, field: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().unwrap()))
    }
}

/// Parses and validates a checkpoint; nothing is returned unless every
/// tensor matches the network described by the metadata.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<(Network, CheckpointMeta)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Checkpoint { field: "magic", detail: "not a GMRF checkpoint".into() });
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Checkpoint { field: "version", detail: format!("unsupported version {version}") });
    }
    let len = r.u32("metadata")? as usize;
    let meta: CheckpointMeta = serde_json::from_slice(r.take(len, "metadata")?)
        .map_err(|e| Error::Checkpoint { field: "metadata", detail: e.to_string() })?;
    let mut net = Network::zeros(meta.network)
        .map_err(|e| Error::Checkpoint { field: "metadata", detail: e.to_string() })?;
    let count = r.u32("tensor count")? as usize;
    let mut expected = net.named_tensors_mut();
    if count != expected.len() {
        return Err(Error::Checkpoint {
            field: "tensor count",
            detail: format!("expected {} tensors, found {count}", expected.len()),
        });
    }
    for (name, tensor) in expected.iter_mut() {
        let n = u16::from_le_bytes(r.take(2, "shape table")?.try_into().unwrap()) as usize;
        let got = r.take(n, "shape table")?;
        if got != name.as_bytes() {
            return Err(Error::Checkpoint {
                field: "shape table",
                detail: format!("expected tensor {name}, found {}", String::from_utf8_lossy(got)),
            });
        }
        let rank = r.take(1, "shape table")?[0] as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32("shape table")? as usize);
        }
        if dims != tensor.shape() {
            return Err(Error::Checkpoint {
                field: "shape table",
                detail: format!("{name} has shape {dims:?}, expected {:?}", tensor.shape()),
            });
        }
        let raw = r.take(4 * tensor.len(), "shape table")?;
        for (v, chunk) in tensor.data_mut().iter_mut().zip(raw.chunks_exact(4)) {
            *v = f64::from(f32::from_le_bytes(chunk.try_into().unwrap()));
        }
        if !tensor.data().iter().all(|v| v.is_finite()) {
            return Err(Error::Checkpoint { field: "shape table", detail: format!("{name} holds non-finite values") });
        }
    }
    drop(expected);
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint {
            field: "tensor count",
            detail: format!("{} trailing bytes after the last tensor", bytes.len() - r.pos),
        });
    }
    Ok((net, meta))
}

pub fn save_checkpoint(net: &Network, meta: &CheckpointMeta, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(net, meta)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(Network, CheckpointMeta)> {
    decode_checkpoint(&fs::read(path)?)
}
