//! Training loop, ranking metrics, diffusion-tree inference and the
//! synthetic cascade generator.

mod metrics;
mod synth;
mod tree;

pub use metrics::{
    evaluate, evaluate_scores, frequency_scores, rank_of, MaskMode, Metrics, MetricsRecord,
};
pub use synth::{
    preferential_graph, random_graph, read_trees, synth_cascades, synth_generate, write_trees,
    PlantedTree, SynthCorpus,
};
pub use tree::{infer_tree, parent_accuracy, predecessor_baseline, DiffusionTree};

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{PrefixInstance, TimeBinning};
use crate::graphembed::EmbeddingMatrix;
use crate::model::{ModelConfig, ModelError, ModelParams, Network};
use crate::numeric::{adam_step, AdamConfig, AdamState, NumericError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid training configuration: {0}")]
    Config(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    /// Epochs without a validation-RR improvement before stopping.
    pub patience: usize,
    pub batch: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.001,
            epochs: 200,
            patience: 10,
            batch: 32,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        // lr = 0 is allowed: it freezes the parameters, which is useful as a
        // sanity run.
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(TrainError::Config(format!(
                "learning rate must be non-negative, got {}",
                self.lr
            )));
        }
        if self.patience == 0 {
            return Err(TrainError::Config("patience must be at least 1".into()));
        }
        if self.batch == 0 {
            return Err(TrainError::Config("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

/// One line of the epoch log. Wall time is kept out of it so that logs of
/// identical runs compare byte for byte.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training loss over the epoch's mini-batches (dropout active).
    pub train_loss: f64,
    pub valid_rr: f64,
    pub best: bool,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the best validation RR.
    pub best: ModelParams,
    pub best_epoch: usize,
    pub best_rr: f64,
    pub log: Vec<EpochRecord>,
    /// Seconds spent per epoch, parallel to `log`.
    pub seconds: Vec<f64>,
    /// Set when training stopped on a non-finite loss or gradient.
    pub aborted: Option<String>,
}

/// Everything a training run reads but does not change.
pub struct TrainInputs<'a> {
    pub train: &'a [PrefixInstance<'a>],
    pub valid: &'a [PrefixInstance<'a>],
    pub config: &'a ModelConfig,
    pub topology: Option<&'a EmbeddingMatrix>,
    pub time: TimeBinning,
    pub mask: MaskMode,
}

fn is_non_finite(e: &ModelError) -> bool {
    matches!(
        e,
        ModelError::NonFiniteLoss
            | ModelError::Numeric(
                NumericError::NonFinite { .. } | NumericError::NonFiniteGradient { .. }
            )
    )
}

/// Adam over shuffled mini-batches with early stopping on validation RR.
///
/// `on_epoch` sees every record as soon as it is produced, together with
/// the epoch's wall time.
pub fn train(
    inputs: &TrainInputs<'_>,
    init: ModelParams,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord, f64),
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    inputs.config.validate()?;
    if inputs.train.is_empty() || inputs.valid.is_empty() {
        return Err(TrainError::Config(
            "training and validation sets must be non-empty".into(),
        ));
    }
    let mut params = init;
    let mut adam = AdamState::new(params.tensors(), AdamConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..inputs.train.len()).collect();

    let mut outcome = TrainOutcome {
        best: params.clone(),
        best_epoch: 0,
        best_rr: f64::NEG_INFINITY,
        log: Vec::new(),
        seconds: Vec::new(),
        aborted: None,
    };
    let mut stale = 0;

    'epochs: for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for idx in order.chunks(cfg.batch) {
            let batch: Vec<PrefixInstance<'_>> = idx.iter().map(|&k| inputs.train[k]).collect();
            let dropout_seed = rng.random::<u64>();
            let step = {
                let net = Network::new(&params, inputs.config, inputs.topology, inputs.time)?;
                net.loss_and_grad(&batch, Some(dropout_seed))
            };
            let (loss, grads) = match step {
                Ok(v) => v,
                Err(e) if is_non_finite(&e) => {
                    outcome.aborted = Some(format!("epoch {epoch}: {e}"));
                    break 'epochs;
                }
                Err(e) => return Err(e.into()),
            };
            if let Err(e) = adam_step(&mut params.tensors_mut(), &grads, &mut adam, cfg.lr) {
                outcome.aborted = Some(format!("epoch {epoch}: {e}"));
                break 'epochs;
            }
            loss_sum += loss * batch.len() as f64;
        }
        let train_loss = loss_sum / inputs.train.len() as f64;
        let net = Network::new(&params, inputs.config, inputs.topology, inputs.time)?;
        let valid_rr = match evaluate(inputs.valid, &net, inputs.mask) {
            Ok(m) => m.rr,
            Err(e) if is_non_finite(&e) => {
                outcome.aborted = Some(format!("epoch {epoch}: {e}"));
                break;
            }
            Err(e) => return Err(e.into()),
        };
        let best = valid_rr > outcome.best_rr;
        if best {
            outcome.best = params.clone();
            outcome.best_epoch = epoch;
            outcome.best_rr = valid_rr;
            stale = 0;
        } else {
            stale += 1;
        }
        let record = EpochRecord {
            epoch,
            train_loss,
            valid_rr,
            best,
        };
        let secs = started.elapsed().as_secs_f64();
        log::info!(
            "epoch {epoch}: loss {train_loss:.6} valid RR {valid_rr:.6}{}",
            if best { " *" } else { "" }
        );
        on_epoch(&record, secs);
        outcome.log.push(record);
        outcome.seconds.push(secs);
        if stale >= cfg.patience {
            log::info!("no validation improvement for {stale} epochs, stopping");
            break;
        }
    }
    if let Some(reason) = &outcome.aborted {
        log::error!(
            "training aborted: {reason}; keeping epoch {} parameters",
            outcome.best_epoch
        );
    }
    Ok(outcome)
}
