//! The dual-role attention network: parameters, forward pass, loss and
//! checkpoints.

mod checkpoint;
mod network;
mod params;

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use network::{output_distribution, Dropout, ForwardResult, Network, ParamVars, PrefixVars};
pub use params::{glorot_bound, Dims, ModelParams, ParamId};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::DataError;
use crate::numeric::NumericError;

/// How topological similarity reshapes user-level attention.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttentionAdjust {
    /// `softmax(α' ⊙ e)` where `α'` is the already-normalized attention.
    #[default]
    Literal,
    /// `softmax(logit ⊙ e)` on the raw attention logits.
    RawLogit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Full model when true; the topology-free ablation otherwise.
    pub use_topology: bool,
    pub dropout_keep: f64,
    pub l2_lambda: f64,
    pub max_len: usize,
    pub adjust: AttentionAdjust,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            use_topology: true,
            dropout_keep: 0.8,
            l2_lambda: 1e-5,
            max_len: 200,
            adjust: AttentionAdjust::Literal,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.dropout_keep > 0.0 && self.dropout_keep <= 1.0) {
            return Err(ModelError::Contract(format!(
                "dropout keep probability must be in (0, 1], got {}",
                self.dropout_keep
            )));
        }
        if self.l2_lambda.is_nan() || self.l2_lambda < 0.0 {
            return Err(ModelError::Contract(format!(
                "l2 lambda must be non-negative, got {}",
                self.l2_lambda
            )));
        }
        if self.max_len < 2 {
            return Err(ModelError::Contract(format!(
                "max_len must be at least 2, got {}",
                self.max_len
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("topological embeddings are required unless topology is disabled")]
    MissingTopology,
    #[error("loss is not finite")]
    NonFiniteLoss,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint vocabulary digest {found} does not match data vocabulary {expected}")]
    VocabMismatch { expected: String, found: String },
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}
