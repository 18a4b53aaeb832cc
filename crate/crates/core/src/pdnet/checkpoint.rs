//! `PDNW` model files: magic, a version byte, a little-endian `u32` header
//! length, the JSON header, then `f32` parameter planes in canonical order,
//! followed by the ADAM moments for training checkpoints.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{ModelConfig, PdNetModel, CLASSES, DUAL_INPUTS, HIDDEN_CHANNELS, PRIMAL_INPUTS, STATE_CHANNELS};
use super::optim::{Adam, AdamParams};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"PDNW";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub dual_channels: [usize; 4],
    pub primal_channels: [usize; 4],
    pub kernel: usize,
    pub head_channels: [usize; 2],
}

impl Architecture {
    pub fn current() -> Self {
        Architecture {
            dual_channels: [DUAL_INPUTS, HIDDEN_CHANNELS, HIDDEN_CHANNELS, STATE_CHANNELS],
            primal_channels: [PRIMAL_INPUTS, HIDDEN_CHANNELS, HIDDEN_CHANNELS, STATE_CHANNELS],
            kernel: 3,
            head_channels: [1, CLASSES],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamHeader {
    pub step: u64,
    pub params: AdamParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub architecture: Architecture,
    pub iterations: usize,
    pub shared_weights: bool,
    pub seed: u64,
    pub epoch: usize,
    pub param_count: usize,
    pub adam: Option<AdamHeader>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub header: CheckpointHeader,
    pub model: PdNetModel<T>,
    pub adam: Option<Adam<T>>,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn new(model: PdNetModel<T>, adam: Option<Adam<T>>, seed: u64, epoch: usize) -> Self {
        let header = CheckpointHeader {
            architecture: Architecture::current(),
            iterations: model.config.iterations,
            shared_weights: model.config.shared_weights,
            seed,
            epoch,
            param_count: model.param_count(),
            adam: adam.as_ref().map(|a| AdamHeader { step: a.step, params: a.params }),
        };
        Checkpoint { header, model, adam }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = serde_json::to_vec(&self.header)?;
        w.write_all(MAGIC)?;
        w.write_all(&[VERSION])?;
        w.write_all(&(header.len() as u32).to_le_bytes())?;
        w.write_all(&header)?;
        let mut plane = |values: &[T]| -> Result<()> {
            let mut buf = Vec::with_capacity(values.len() * 4);
            for v in values {
                buf.extend_from_slice(&v.as_f32().to_le_bytes());
            }
            w.write_all(&buf)?;
            Ok(())
        };
        plane(&self.model.to_flat())?;
        if let Some(adam) = &self.adam {
            plane(&adam.m)?;
            plane(&adam.v)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic[..4] != MAGIC {
            return Err(Error::Format("not a PDNW file".into()));
        }
        if magic[4] != VERSION {
            return Err(Error::Format(format!("unsupported PDNW version {}", magic[4])));
        }
        let mut len = [0u8; 4];
        r.read_exact(&mut len).map_err(truncated)?;
        let mut header = vec![0u8; u32::from_le_bytes(len) as usize];
        r.read_exact(&mut header).map_err(truncated)?;
        let header: CheckpointHeader = serde_json::from_slice(&header)?;
        if header.architecture != Architecture::current() {
            return Err(Error::Format(format!("unsupported architecture {:?}", header.architecture)));
        }
        if header.iterations == 0 && !header.shared_weights {
            return Err(Error::Format("per-iteration weights need at least one iteration".into()));
        }
        let config = ModelConfig { iterations: header.iterations, shared_weights: header.shared_weights };
        let mut model = PdNetModel::<T>::zeros(config);
        let n = model.param_count();
        if n != header.param_count {
            return Err(Error::Format(format!("header declares {} parameters, architecture has {n}", header.param_count)));
        }
        let mut plane = || -> Result<Vec<T>> {
            let mut buf = vec![0u8; n * 4];
            r.read_exact(&mut buf).map_err(truncated)?;
            Ok(buf.chunks_exact(4).map(|c| T::of_f32(f32::from_le_bytes([c[0], c[1], c[2], c[3]]))).collect())
        };
        model.load_flat(&plane()?)?;
        let adam = match header.adam {
            Some(h) => Some(Adam { params: h.params, step: h.step, m: plane()?, v: plane()? }),
            None => None,
        };
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes after parameter planes", rest.len())));
        }
        Ok(Checkpoint { header, model, adam })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        self.write_to(&mut out)?;
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(std::fs::read(path)?.as_slice())
    }
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("truncated PDNW file".into())
    } else {
        Error::Io(e)
    }
}
