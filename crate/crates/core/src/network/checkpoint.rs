//! Single-file checkpoints: magic, little-endian `u64` header length, a JSON
//! header, then all parameters as consecutive `f32` little-endian values.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{Network, ParamSpec};
use super::NetworkConfig;
use crate::autograd::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: &str = "1";
const MAGIC: &[u8; 8] = b"MVMCKPT\0";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub step: usize,
    pub seed: u64,
    pub loss_history: Vec<f64>,
    #[serde(default)]
    pub val_history: Vec<f64>,
    #[serde(default)]
    pub best_val_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub network: Network,
    pub metadata: TrainingMetadata,
}

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: [usize; 4],
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: String,
    config: NetworkConfig,
    metadata: TrainingMetadata,
    params: Vec<ParamEntry>,
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let net = &ckpt.network;
    let mut offset = 0;
    let params = net
        .specs
        .iter()
        .map(|s| {
            let e = ParamEntry {
                name: s.name.clone(),
                shape: s.shape,
                offset,
            };
            offset += s.shape.iter().product::<usize>();
            e
        })
        .collect();
    let header = serde_json::to_vec(&Header {
        version: CHECKPOINT_VERSION.into(),
        config: net.config.clone(),
        metadata: ckpt.metadata.clone(),
        params,
    })?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut out = Vec::with_capacity(16 + header.len() + 4 * offset);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for p in &net.params {
        for v in p.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

/// Loads a checkpoint. With `expected`, a differing stored config is an error.
pub fn load_checkpoint(path: &Path, expected: Option<&NetworkConfig>) -> Result<Checkpoint> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let bytes = fs::read(path)?;
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(Error::CheckpointMismatch(format!("{} is not a checkpoint", path.display())));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = bytes
        .get(16..16 + hlen)
        .ok_or_else(|| Error::Shape("truncated checkpoint header".into()))?;
    let header: Header = serde_json::from_slice(body)?;
    if header.version != CHECKPOINT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: header.version,
            expected: CHECKPOINT_VERSION.into(),
        });
    }
    if let Some(cfg) = expected {
        if *cfg != header.config {
            return Err(Error::CheckpointMismatch(format!(
                "stored config {:?} differs from requested {:?}",
                header.config, cfg
            )));
        }
    }
    let specs = Network::specs_for(&header.config)?;
    let stored: Vec<ParamSpec> = header
        .params
        .iter()
        .map(|e| ParamSpec {
            name: e.name.clone(),
            shape: e.shape,
        })
        .collect();
    if stored != specs {
        return Err(Error::CheckpointMismatch("parameter names or shapes differ from the config".into()));
    }
    let data = &bytes[16 + hlen..];
    let mut params = Vec::with_capacity(specs.len());
    for e in &header.params {
        let n: usize = e.shape.iter().product();
        let raw = data
            .get(4 * e.offset..4 * (e.offset + n))
            .ok_or_else(|| Error::Shape(format!("checkpoint data for {} is truncated", e.name)))?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        params.push(Tensor::from_vec(e.shape, values));
    }
    Ok(Checkpoint {
        network: Network {
            config: header.config,
            specs,
            params,
        },
        metadata: header.metadata,
    })
}
