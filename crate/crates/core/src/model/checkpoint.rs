//! Self-describing checkpoint container.
//!
//! Layout: 8-byte magic, little-endian `u32` header length, JSON header
//! (metadata plus a tensor table), raw little-endian tensor data in table
//! order, and a trailing CRC-32 of everything before it.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::backbone::{BackboneConfig, BackboneKind};
use super::head::Head;
use super::siamese::SiameseModel;
use super::train::{TrainConfig, TrainSummary};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"HUEPAIR1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub backbone: BackboneConfig,
    pub head_hidden: usize,
    pub seed: u64,
    pub train: Option<TrainConfig>,
    pub summary: Option<TrainSummary>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum DType {
    F32,
    F64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    dtype: DType,
    len: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    meta: CheckpointMeta,
    tensors: Vec<TensorEntry>,
}

pub fn encode_checkpoint(model: &SiameseModel, meta: &CheckpointMeta) -> Result<Vec<u8>> {
    if meta.backbone != *model.config() {
        return Err(Error::Checkpoint("metadata backbone does not match the model".into()));
    }
    let header = Header {
        meta: meta.clone(),
        tensors: vec![
            TensorEntry { name: "backbone".into(), dtype: DType::F32, len: model.backbone_params().len() },
            TensorEntry { name: "head".into(), dtype: DType::F64, len: model.head().params().len() },
        ],
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(16 + json.len() + model.backbone_params().len() * 4 + model.head().params().len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for v in model.backbone_params() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in model.head().params() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(SiameseModel, CheckpointMeta)> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    if bytes.len() < MAGIC.len() + 8 || &bytes[..8] != MAGIC {
        return Err(bad("missing checkpoint magic"));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let hlen = u32::from_le_bytes(body[8..12].try_into().expect("4 bytes")) as usize;
    let data_start = 12usize.checked_add(hlen).filter(|&e| e <= body.len()).ok_or_else(|| bad("truncated header"))?;
    let header: Header =
        serde_json::from_slice(&body[12..data_start]).map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    let needed: usize = header
        .tensors
        .iter()
        .map(|t| t.len * if t.dtype == DType::F32 { 4 } else { 8 })
        .sum();
    if body.len() - data_start != needed {
        return Err(bad("tensor data length does not match the header (truncated file?)"));
    }
    if crc32fast::hash(body) != stored {
        return Err(bad("checksum mismatch"));
    }
    let mut at = data_start;
    let mut backbone = None;
    let mut head = None;
    for t in &header.tensors {
        match (t.name.as_str(), t.dtype) {
            ("backbone", DType::F32) => {
                let v: Vec<f32> = body[at..at + 4 * t.len]
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                    .collect();
                backbone = Some(v);
                at += 4 * t.len;
            }
            ("head", DType::F64) => {
                let v: Vec<f64> = body[at..at + 8 * t.len]
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect();
                head = Some(v);
                at += 8 * t.len;
            }
            (name, _) => return Err(Error::Checkpoint(format!("unexpected tensor {name:?}"))),
        }
    }
    let meta = header.meta;
    let (Some(params), Some(head)) = (backbone, head) else {
        return Err(bad("checkpoint lacks backbone or head tensors"));
    };
    let head = Head::from_params(meta.backbone.feature_dim, meta.head_hidden, head)
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    let model = SiameseModel::from_parts(meta.backbone.clone(), params, head)
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    Ok((model, meta))
}

pub fn save_checkpoint(model: &SiameseModel, meta: &CheckpointMeta, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(model, meta)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Loads a checkpoint; with `expected`, a different backbone kind is an error.
pub fn load_checkpoint(path: &Path, expected: Option<BackboneKind>) -> Result<(SiameseModel, CheckpointMeta)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (model, meta) = decode_checkpoint(&bytes)?;
    if let Some(kind) = expected {
        if model.kind() != kind {
            return Err(Error::Checkpoint(format!("checkpoint holds a {} backbone, expected {kind}", model.kind())));
        }
    }
    Ok((model, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::colorops::ImageRaster;

    fn model() -> (SiameseModel, CheckpointMeta) {
        let cfg = BackboneConfig { widths: [4, 4, 8, 8], feature_dim: 16, ..BackboneConfig::small_cnn() };
        let m = SiameseModel::new(cfg.clone(), 5).unwrap();
        let meta = CheckpointMeta { backbone: cfg, head_hidden: 16, seed: 5, train: None, summary: None };
        (m, meta)
    }

    #[test]
    fn round_trip_is_exact() {
        let (m, meta) = model();
        let bytes = encode_checkpoint(&m, &meta).unwrap();
        let (back, meta2) = decode_checkpoint(&bytes).unwrap();
        assert_eq!(meta, meta2);
        assert_eq!(back.backbone_params(), m.backbone_params());
        assert_eq!(back.head(), m.head());
        let a = ImageRaster::from_fn(64, 64, |y, x| [(x * 4) as u8, y as u8, 9]).unwrap();
        let b = ImageRaster::filled(64, 64, [90, 10, 200]).unwrap();
        assert_eq!(back.predict_inconsistency(&a, &b).unwrap(), m.predict_inconsistency(&a, &b).unwrap());
    }

    #[test]
    fn truncation_and_corruption_detected() {
        let (m, meta) = model();
        let bytes = encode_checkpoint(&m, &meta).unwrap();
        for cut in [4, 11, 40, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(decode_checkpoint(&bytes[..cut]), Err(Error::Checkpoint(_))), "cut at {cut}");
        }
        let mut flipped = bytes.clone();
        let i = bytes.len() - 20;
        flipped[i] ^= 0x10;
        assert!(matches!(decode_checkpoint(&flipped), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn kind_mismatch_rejected() {
        let (m, meta) = model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&m, &meta, &path).unwrap();
        assert!(load_checkpoint(&path, Some(BackboneKind::SmallCnn)).is_ok());
        assert!(matches!(load_checkpoint(&path, Some(BackboneKind::Resnet50)), Err(Error::Checkpoint(_))));
        assert!(matches!(load_checkpoint(&dir.path().join("missing"), None), Err(Error::Io { .. })));
    }
}
