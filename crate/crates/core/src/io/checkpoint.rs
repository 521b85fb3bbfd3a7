//! Binary checkpoint container.
//!
//! Layout: 8-byte magic, u32 format version, u32 header length, a JSON
//! header `{kind, meta, arrays: [{name, len}]}`, the arrays as little-endian
//! f64 in header order, then an 8-byte end marker.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::write_atomic;
use crate::error::{Error, Result};
use crate::nn::{Conv1d, Parameters};
use crate::tcn::{ModelWeights, MsTcnConfig, TCN_FORMAT_VERSION};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"VJMPCKPT";
pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;
const END_MARKER: &[u8; 8] = b"VJMPEND\0";

/// Kind tag, free-form metadata and named flat arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub meta: Value,
    pub arrays: Vec<(String, Vec<f64>)>,
}

impl Checkpoint {
    pub fn array(&self, name: &str) -> Result<&[f64]> {
        self.arrays
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, a)| a.as_slice())
            .ok_or_else(|| Error::invalid(format!("checkpoint has no array {name:?}")))
    }

    pub fn scalar(&self, name: &str) -> Result<f64> {
        match self.array(name)? {
            [v] => Ok(*v),
            a => Err(Error::invalid(format!("checkpoint array {name:?} has {} values, expected 1", a.len()))),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            kind: self.kind.clone(),
            meta: self.meta.clone(),
            arrays: self
                .arrays
                .iter()
                .map(|(name, a)| ArrayEntry {
                    name: name.clone(),
                    len: a.len(),
                })
                .collect(),
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let data_len: usize = self.arrays.iter().map(|(_, a)| a.len() * 8).sum();
        let mut out = Vec::with_capacity(24 + header.len() + data_len);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, a) in &self.arrays {
            for v in a {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.extend_from_slice(END_MARKER);
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let fail = |message: String| Error::Checkpoint {
            path: path.to_path_buf(),
            message,
        };
        let mut cursor = Cursor { bytes, pos: 0 };
        let magic = cursor.take(8).ok_or_else(|| fail("truncated before magic".into()))?;
        if magic != CHECKPOINT_MAGIC {
            return Err(fail("bad magic bytes; not a checkpoint file".into()));
        }
        let version = cursor.u32().ok_or_else(|| fail("truncated before version".into()))?;
        if version != CHECKPOINT_FORMAT_VERSION {
            return Err(fail(format!(
                "format version {version} is not supported (expected {CHECKPOINT_FORMAT_VERSION})"
            )));
        }
        let header_len = cursor.u32().ok_or_else(|| fail("truncated before header".into()))? as usize;
        let header = cursor.take(header_len).ok_or_else(|| fail("truncated header".into()))?;
        let header: Header = serde_json::from_slice(header).map_err(|e| fail(format!("corrupt header: {e}")))?;
        let mut arrays = Vec::with_capacity(header.arrays.len());
        for entry in header.arrays {
            let raw = entry
                .len
                .checked_mul(8)
                .and_then(|n| cursor.take(n))
                .ok_or_else(|| fail(format!("truncated in array {:?}", entry.name)))?;
            let values = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            arrays.push((entry.name, values));
        }
        match cursor.take(8) {
            Some(m) if m == END_MARKER => {}
            _ => return Err(fail("truncated: missing end marker".into())),
        }
        if cursor.pos != bytes.len() {
            return Err(fail(format!("{} trailing bytes after end marker", bytes.len() - cursor.pos)));
        }
        Ok(Checkpoint {
            kind: header.kind,
            meta: header.meta,
            arrays,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    kind: String,
    meta: Value,
    arrays: Vec<ArrayEntry>,
}

#[derive(Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    len: usize,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }
}

/// Models that persist through the checkpoint container.
pub trait Checkpointable: Sized {
    const KIND: &'static str;
    fn to_checkpoint(&self) -> Checkpoint;
    fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self>;
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    write_atomic(path, &ckpt.to_bytes())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes, path)
}

pub fn save_model<M: Checkpointable>(model: &M, path: &Path) -> Result<()> {
    save_checkpoint(&model.to_checkpoint(), path)
}

/// Loads a checkpoint and rejects it unless its kind tag matches `M`.
pub fn load_model<M: Checkpointable>(path: &Path) -> Result<M> {
    let ckpt = load_checkpoint(path)?;
    if ckpt.kind != M::KIND {
        return Err(Error::Checkpoint {
            path: path.to_path_buf(),
            message: format!("holds a {:?} model, expected {:?}", ckpt.kind, M::KIND),
        });
    }
    M::from_checkpoint(&ckpt).map_err(|e| Error::Checkpoint {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn conv_arrays(prefix: &str, conv: &Conv1d, out: &mut Vec<(String, Vec<f64>)>) {
    out.push((format!("{prefix}.weight"), conv.weight.iter().copied().collect()));
    out.push((format!("{prefix}.bias"), conv.bias.to_vec()));
}

impl Checkpointable for ModelWeights {
    const KIND: &'static str = "tcn";

    fn to_checkpoint(&self) -> Checkpoint {
        let mut arrays = vec![
            ("input_mean".to_string(), self.input_mean.clone()),
            ("input_scale".to_string(), self.input_scale.clone()),
        ];
        for (s, stage) in self.stages.iter().enumerate() {
            conv_arrays(&format!("stage{s}.input"), &stage.input, &mut arrays);
            for (l, layer) in stage.layers.iter().enumerate() {
                conv_arrays(&format!("stage{s}.layer{l}.dilated"), &layer.dilated, &mut arrays);
                conv_arrays(&format!("stage{s}.layer{l}.pointwise"), &layer.pointwise, &mut arrays);
            }
            conv_arrays(&format!("stage{s}.output"), &stage.output, &mut arrays);
        }
        Checkpoint {
            kind: Self::KIND.into(),
            meta: json!({
                "format_version": TCN_FORMAT_VERSION,
                "config": self.config,
            }),
            arrays,
        }
    }

    fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let version = ckpt.meta["format_version"].as_u64();
        if version != Some(u64::from(TCN_FORMAT_VERSION)) {
            return Err(Error::invalid(format!(
                "tcn format version {version:?} is not supported (expected {TCN_FORMAT_VERSION})"
            )));
        }
        let config: MsTcnConfig = serde_json::from_value(ckpt.meta["config"].clone())
            .map_err(|e| Error::invalid(format!("bad tcn config: {e}")))?;
        let mut weights = ModelWeights::zeros(&config)?;
        // the named arrays follow the same order as the parameter walk
        let mut flat = Vec::with_capacity(weights.param_count());
        let mut names = Vec::new();
        for (s, stage) in weights.stages.iter().enumerate() {
            names.push(format!("stage{s}.input"));
            for l in 0..stage.layers.len() {
                names.push(format!("stage{s}.layer{l}.dilated"));
                names.push(format!("stage{s}.layer{l}.pointwise"));
            }
            names.push(format!("stage{s}.output"));
        }
        for n in &names {
            flat.extend_from_slice(ckpt.array(&format!("{n}.weight"))?);
            flat.extend_from_slice(ckpt.array(&format!("{n}.bias"))?);
        }
        if !weights.assign_flat(&flat) {
            return Err(Error::dim(format!(
                "checkpoint holds {} parameters, config needs {}",
                flat.len(),
                weights.param_count()
            )));
        }
        let channels = config.stage.in_channels;
        let mean = ckpt.array("input_mean")?;
        let scale = ckpt.array("input_scale")?;
        if mean.len() != channels || scale.len() != channels {
            return Err(Error::dim("input standardization does not match the channel count"));
        }
        weights.input_mean = mean.to_vec();
        weights.input_scale = scale.to_vec();
        Ok(weights)
    }
}
