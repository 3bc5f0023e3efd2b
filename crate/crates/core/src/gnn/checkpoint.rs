//! Model checkpoints: one JSON header line, then the parameters as
//! little-endian `f64` in [`GnnModel::params`] order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{Arch, GnnModel, ModelConfig};
use crate::format::VERSION;
use crate::{Error, Result};

const KIND: &str = "restograph-model";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    arch: Arch,
    input_dim: usize,
    seed: u64,
    shapes: Vec<(usize, usize)>,
    config: ModelConfig,
}

pub fn encode_checkpoint(model: &GnnModel) -> Result<Vec<u8>> {
    let header = Header {
        format: KIND.into(),
        version: VERSION,
        arch: model.arch(),
        input_dim: model.input_dim,
        seed: model.config.seed,
        shapes: model.params().iter().map(|p| p.shape()).collect(),
        config: model.config.clone(),
    };
    let mut out = serde_json::to_vec(&header)?;
    out.push(b'\n');
    for p in model.params() {
        for v in p.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<GnnModel> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Parse("checkpoint has no header line".into()))?;
    let header: Header = serde_json::from_slice(&bytes[..nl])?;
    if header.format != KIND || header.version != VERSION {
        return Err(Error::Version {
            expected: KIND,
            supported: VERSION,
            found: format!("{} v{}", header.format, header.version),
        });
    }
    let mut model = GnnModel::init(header.input_dim, &header.config)?;
    let shapes: Vec<(usize, usize)> = model.params().iter().map(|p| p.shape()).collect();
    if shapes != header.shapes {
        return Err(Error::Shape("checkpoint shapes do not match its configuration".into()));
    }
    let payload = &bytes[nl + 1..];
    let expected: usize = shapes.iter().map(|(r, c)| r * c * 8).sum();
    if payload.len() != expected {
        return Err(Error::Parse(format!(
            "checkpoint payload has {} bytes, expected {expected}",
            payload.len()
        )));
    }
    let mut chunks = payload.chunks_exact(8);
    for p in model.params_mut() {
        for v in p.data_mut() {
            let c = chunks.next().expect("payload length checked");
            *v = f64::from_le_bytes(c.try_into().expect("8-byte chunk"));
        }
    }
    Ok(model)
}

pub fn save_checkpoint(model: &GnnModel, path: &Path) -> Result<()> {
    fs::write(path, encode_checkpoint(model)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<GnnModel> {
    decode_checkpoint(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_round_trips_every_arch() {
        for arch in Arch::ALL {
            let cfg = ModelConfig {
                hidden: vec![8, 4],
                seed: 17,
                ..ModelConfig::with_arch(arch)
            };
            let model = GnnModel::init(6, &cfg).unwrap();
            let bytes = encode_checkpoint(&model).unwrap();
            assert_eq!(decode_checkpoint(&bytes).unwrap(), model);
        }
    }

    #[test]
    fn truncated_or_foreign_checkpoints_fail() {
        let model = GnnModel::init(3, &ModelConfig::default()).unwrap();
        let bytes = encode_checkpoint(&model).unwrap();
        assert!(decode_checkpoint(&bytes[..bytes.len() - 8]).is_err());
        let text = String::from_utf8_lossy(&bytes).replace("\"version\":1", "\"version\":7");
        assert!(matches!(decode_checkpoint(text.as_bytes()), Err(Error::Version { .. }) | Err(Error::Parse(_))));
    }
}
