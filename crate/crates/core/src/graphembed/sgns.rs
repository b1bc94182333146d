use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EmbeddingMatrix;
use crate::numeric::{sigmoid, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgnsConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for SgnsConfig {
    fn default() -> Self {
        SgnsConfig {
            dim: 128,
            window: 5,
            negatives: 5,
            epochs: 5,
            lr: 0.025,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SgnsReport {
    /// Mean negative log-likelihood per (center, context) pair, per epoch.
    pub epoch_loss: Vec<f64>,
    pub pairs_per_epoch: usize,
}

/// (center, context) pairs within `window` positions of each other.
pub fn context_pairs(walk: &[usize], window: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    if walk.is_empty() {
        return out;
    }
    for (c, &center) in walk.iter().enumerate() {
        let lo = c.saturating_sub(window);
        let hi = (c + window).min(walk.len() - 1);
        for (o, &ctx) in walk.iter().enumerate().take(hi + 1).skip(lo) {
            if o != c {
                out.push((center, ctx));
            }
        }
    }
    out
}

/// Skip-gram with negative sampling over node walks.
///
/// Negatives come from the unigram distribution of walk occurrences raised
/// to 3/4. The learning rate decays linearly over all pairs. Training is
/// single-threaded, so a fixed seed gives bit-identical embeddings.
/// Nodes that never occur in a walk keep a zero row.
pub fn train_sgns(
    walks: &[Vec<usize>],
    num_nodes: usize,
    cfg: &SgnsConfig,
) -> (EmbeddingMatrix, SgnsReport) {
    let dim = cfg.dim;
    let mut counts = vec![0u64; num_nodes];
    for w in walks {
        for &u in w {
            counts[u] += 1;
        }
    }
    let isolated: Vec<bool> = counts.iter().map(|&c| c == 0).collect();
    let mut report = SgnsReport::default();

    let weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(0.75)).collect();
    let Ok(noise) = WeightedIndex::new(&weights) else {
        log::warn!("no walks to train on; topological embeddings are all zero");
        let mut emb = EmbeddingMatrix::zeros(num_nodes, dim);
        emb.trained = true;
        return (emb, report);
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut input = vec![0.0; num_nodes * dim];
    for (u, row) in input.chunks_mut(dim).enumerate() {
        if !isolated[u] {
            for v in row {
                *v = (rng.random::<f64>() - 0.5) / dim as f64;
            }
        }
    }
    let mut output = vec![0.0; num_nodes * dim];

    let pairs_per_epoch: usize = walks
        .iter()
        .filter(|w| !w.is_empty())
        .map(|w| {
            let last = w.len() - 1;
            (0..w.len())
                .map(|c| (c + cfg.window).min(last) - c.saturating_sub(cfg.window))
                .sum::<usize>()
        })
        .sum();
    report.pairs_per_epoch = pairs_per_epoch;
    let total = (pairs_per_epoch * cfg.epochs).max(1) as f64;
    let min_lr = cfg.lr * 1e-4;

    let mut order: Vec<usize> = (0..walks.len()).collect();
    let mut seen = 0usize;
    let mut grad_center = vec![0.0; dim];
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for &wi in &order {
            for (center, ctx) in context_pairs(&walks[wi], cfg.window) {
                let lr = (cfg.lr * (1.0 - seen as f64 / total)).max(min_lr);
                seen += 1;
                grad_center.iter_mut().for_each(|g| *g = 0.0);
                let c_off = center * dim;
                for k in 0..=cfg.negatives {
                    let (target, label) = if k == 0 {
                        (ctx, 1.0)
                    } else {
                        let t = noise.sample(&mut rng);
                        if t == ctx {
                            continue;
                        }
                        (t, 0.0)
                    };
                    let t_off = target * dim;
                    let dot: f64 = (0..dim).map(|j| input[c_off + j] * output[t_off + j]).sum();
                    let s = sigmoid(dot);
                    epoch_loss -= if label > 0.0 {
                        s.max(1e-300).ln()
                    } else {
                        (1.0 - s).max(1e-300).ln()
                    };
                    let g = (label - s) * lr;
                    for j in 0..dim {
                        grad_center[j] += g * output[t_off + j];
                        output[t_off + j] += g * input[c_off + j];
                    }
                }
                for j in 0..dim {
                    input[c_off + j] += grad_center[j];
                }
            }
        }
        let mean = epoch_loss / pairs_per_epoch.max(1) as f64;
        log::debug!("sgns epoch loss {mean:.6}");
        report.epoch_loss.push(mean);
    }

    let values = Tensor::new(vec![num_nodes, dim], input).expect("shape");
    (
        EmbeddingMatrix {
            values,
            trained: true,
            isolated,
        },
        report,
    )
}
