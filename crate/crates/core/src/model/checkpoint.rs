use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dims, ModelConfig, ModelError, ModelParams, ParamId};
use crate::data::TimeBinning;
use crate::graphembed::EmbeddingMatrix;
use crate::numeric::Tensor;

pub const CHECKPOINT_FORMAT: &str = "tandrud-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Container {
    format: String,
    version: u32,
    dims: Dims,
    config: ModelConfig,
    time: TimeBinning,
    vocab_digest: String,
    tensors: Vec<NamedTensor>,
    topology: Option<NamedTensor>,
}

/// Everything needed to rebuild a trained network: parameters, model
/// configuration, time binning, the frozen topological embeddings, and a
/// digest of the vocabulary the user indices refer to.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub config: ModelConfig,
    pub time: TimeBinning,
    pub topology: Option<EmbeddingMatrix>,
    pub vocab_digest: String,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String, ModelError> {
        let tensors = ParamId::ALL
            .iter()
            .map(|&id| {
                let t = self.params.get(id);
                NamedTensor {
                    name: id.name().to_string(),
                    shape: t.shape().to_vec(),
                    values: t.values().to_vec(),
                }
            })
            .collect();
        let topology = self.topology.as_ref().map(|t| NamedTensor {
            name: "G".into(),
            shape: t.values.shape().to_vec(),
            values: t.values.values().to_vec(),
        });
        let c = Container {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            dims: self.params.dims,
            config: self.config.clone(),
            time: self.time,
            vocab_digest: self.vocab_digest.clone(),
            tensors,
            topology,
        };
        serde_json::to_string(&c).map_err(|e| ModelError::Checkpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let c: Container =
            serde_json::from_str(text).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        Self::from_container(c)
    }

    fn from_container(c: Container) -> Result<Self, ModelError> {
        if c.format != CHECKPOINT_FORMAT {
            return Err(ModelError::Checkpoint(format!(
                "unknown format `{}`",
                c.format
            )));
        }
        if c.version != CHECKPOINT_VERSION {
            return Err(ModelError::Checkpoint(format!(
                "unsupported version {}",
                c.version
            )));
        }
        let mut slots: Vec<Option<Tensor>> = vec![None; ParamId::ALL.len()];
        for nt in c.tensors {
            let id = ParamId::from_name(&nt.name)
                .ok_or_else(|| ModelError::Checkpoint(format!("unknown tensor `{}`", nt.name)))?;
            let t = Tensor::new(nt.shape, nt.values)
                .map_err(|e| ModelError::Checkpoint(e.to_string()))?;
            slots[id.index()] = Some(t);
        }
        let tensors = slots
            .into_iter()
            .zip(ParamId::ALL)
            .map(|(t, id)| {
                t.ok_or_else(|| ModelError::Checkpoint(format!("missing tensor `{}`", id.name())))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let params = ModelParams::from_tensors(c.dims, tensors).map_err(ModelError::Checkpoint)?;
        let topology = match c.topology {
            Some(nt) => {
                let values = Tensor::new(nt.shape, nt.values)
                    .map_err(|e| ModelError::Checkpoint(e.to_string()))?;
                if values.rows() != c.dims.users || values.cols() != c.dims.d_g {
                    return Err(ModelError::Checkpoint(format!(
                        "topology matrix shape {:?} does not match dims",
                        values.shape()
                    )));
                }
                let isolated = (0..values.rows())
                    .map(|r| values.row_slice(r).iter().all(|&v| v == 0.0))
                    .collect();
                Some(EmbeddingMatrix {
                    values,
                    trained: true,
                    isolated,
                })
            }
            None => None,
        };
        if c.config.use_topology && topology.is_none() {
            return Err(ModelError::MissingTopology);
        }
        Ok(Checkpoint {
            params,
            config: c.config,
            time: c.time,
            topology,
            vocab_digest: c.vocab_digest,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let io = |source| ModelError::Io {
            path: path.to_path_buf(),
            source,
        };
        let f = File::create(path).map_err(io)?;
        let mut w = BufWriter::new(f);
        w.write_all(self.to_json()?.as_bytes()).map_err(io)?;
        w.flush().map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let f = File::open(path).map_err(|source| ModelError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let c: Container = serde_json::from_reader(BufReader::new(f))
            .map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        Self::from_container(c)
    }

    /// Loads and checks that the checkpoint was built for `vocab_digest`.
    pub fn load_for(path: &Path, vocab_digest: &str) -> Result<Self, ModelError> {
        let ck = Self::load(path)?;
        ck.check_vocab(vocab_digest)?;
        Ok(ck)
    }

    pub fn check_vocab(&self, vocab_digest: &str) -> Result<(), ModelError> {
        if self.vocab_digest != vocab_digest {
            return Err(ModelError::VocabMismatch {
                expected: vocab_digest.to_string(),
                found: self.vocab_digest.clone(),
            });
        }
        Ok(())
    }
}
