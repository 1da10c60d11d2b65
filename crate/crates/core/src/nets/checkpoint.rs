//! `EEGMODL1` checkpoints: magic, u32-length-prefixed JSON config, then each
//! parameter as `u32 rank | u32 dims.. | f32 values` in declaration order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{ExtractorConfig, SurrogateModels};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const MODEL_MAGIC: &[u8; 8] = b"EEGMODL1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ModelHeader {
    extractor: ExtractorConfig,
    channels: usize,
    len: usize,
    classes: usize,
    users: usize,
    hidden: usize,
}

pub fn encode_models(m: &SurrogateModels) -> Result<Vec<u8>> {
    let header = ModelHeader {
        extractor: m.extractor.config.clone(),
        channels: m.extractor.channels,
        len: m.extractor.len,
        classes: m.classes(),
        users: m.users(),
        hidden: m.hidden(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for p in m.params() {
        out.extend_from_slice(&(p.shape().len() as u32).to_le_bytes());
        for &d in p.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in p.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_models(bytes: &[u8]) -> Result<SurrogateModels> {
    if bytes.len() < 8 || &bytes[..8] != MODEL_MAGIC {
        return Err(Error::Format("not a model checkpoint (bad magic)".into()));
    }
    let mut pos = 8;
    let mut take = |n: usize| -> Result<&[u8]> {
        let end = pos + n;
        if end > bytes.len() {
            return Err(Error::Corruption("checkpoint truncated".into()));
        }
        let s = &bytes[pos..end];
        pos = end;
        Ok(s)
    };
    let u32_at = |s: &[u8]| u32::from_le_bytes(s.try_into().unwrap()) as usize;
    let json_len = u32_at(take(4)?);
    let header: ModelHeader = serde_json::from_slice(take(json_len)?)?;
    let mut models = SurrogateModels::with_hidden(
        header.extractor,
        header.channels,
        header.len,
        header.classes,
        header.users,
        header.hidden,
        0,
    )?;
    for p in models.params_mut() {
        let rank = u32_at(take(4)?);
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u32_at(take(4)?));
        }
        if shape != p.shape() {
            return Err(Error::dim(format!(
                "checkpoint tensor {shape:?} where {:?} was expected",
                p.shape()
            )));
        }
        let data = take(4 * p.numel())?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        *p = Tensor::new(shape, data)?;
    }
    if pos != bytes.len() {
        return Err(Error::Corruption(format!(
            "{} trailing bytes in checkpoint",
            bytes.len() - pos
        )));
    }
    Ok(models)
}

pub fn save_models(m: &SurrogateModels, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_models(m)?)?;
    Ok(())
}

pub fn load_models(path: impl AsRef<Path>) -> Result<SurrogateModels> {
    decode_models(&fs::read(path)?)
}
