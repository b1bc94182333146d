use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{CascadeCorpus, PrefixInstance};
use crate::model::{output_distribution, ModelError, Network};

/// Whether users already in the prefix are removed from the ranking.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskMode {
    #[default]
    Unmasked,
    MaskObserved,
}

impl MaskMode {
    pub fn from_flag(mask_observed: bool) -> Self {
        if mask_observed {
            MaskMode::MaskObserved
        } else {
            MaskMode::Unmasked
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MaskMode::Unmasked => "unmasked",
            MaskMode::MaskObserved => "mask-observed",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub rr: f64,
    pub p10: f64,
    pub p50: f64,
    pub p100: f64,
    pub n: usize,
}

/// 1-based rank of `target` when users are sorted by descending score,
/// ties going to the smaller index.
pub fn rank_of(scores: &[f64], target: usize) -> usize {
    let s = scores[target];
    1 + scores
        .iter()
        .enumerate()
        .filter(|&(u, &v)| v > s || (v == s && u < target))
        .count()
}

impl Metrics {
    fn from_ranks(ranks: &[usize]) -> Metrics {
        let n = ranks.len();
        let hits = |k: usize| ranks.iter().filter(|&&r| r <= k).count() as f64 / n as f64;
        Metrics {
            rr: ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n as f64,
            p10: hits(10),
            p50: hits(50),
            p100: hits(100),
            n,
        }
    }

    pub fn record(&self, split: &str, mask: MaskMode) -> MetricsRecord {
        MetricsRecord {
            split: split.to_string(),
            rr: self.rr,
            p10: self.p10,
            p50: self.p50,
            p100: self.p100,
            n_instances: self.n,
            mask_mode: mask,
        }
    }
}

impl fmt::Display for Metrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10}{:>10}", "metric", "score %")?;
        writeln!(f, "{:<10}{:>10.2}", "RR", 100.0 * self.rr)?;
        writeln!(f, "{:<10}{:>10.2}", "P@10", 100.0 * self.p10)?;
        writeln!(f, "{:<10}{:>10.2}", "P@50", 100.0 * self.p50)?;
        writeln!(f, "{:<10}{:>10.2}", "P@100", 100.0 * self.p100)?;
        write!(f, "{:<10}{:>10}", "instances", self.n)
    }
}

/// Machine-readable evaluation line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub split: String,
    #[serde(rename = "RR")]
    pub rr: f64,
    #[serde(rename = "P@10")]
    pub p10: f64,
    #[serde(rename = "P@50")]
    pub p50: f64,
    #[serde(rename = "P@100")]
    pub p100: f64,
    pub n_instances: usize,
    pub mask_mode: MaskMode,
}

/// Metrics from precomputed score vectors, one `(scores, target)` per
/// instance.
pub fn evaluate_scores<'s>(items: impl IntoIterator<Item = (&'s [f64], usize)>) -> Option<Metrics> {
    let ranks: Vec<usize> = items.into_iter().map(|(s, t)| rank_of(s, t)).collect();
    (!ranks.is_empty()).then(|| Metrics::from_ranks(&ranks))
}

/// Ranks every user by predicted probability for each instance.
pub fn evaluate(
    instances: &[PrefixInstance<'_>],
    net: &Network<'_>,
    mask: MaskMode,
) -> Result<Metrics, ModelError> {
    if instances.is_empty() {
        return Err(ModelError::Contract("evaluation set is empty".into()));
    }
    let ranks: Vec<usize> = instances
        .par_iter()
        .map(|inst| {
            let users = inst.users();
            let logits = net.logits(&users, &inst.times())?;
            let p = output_distribution(&logits, &users, mask == MaskMode::MaskObserved);
            Ok(rank_of(&p, inst.target()))
        })
        .collect::<Result<_, ModelError>>()?;
    Ok(Metrics::from_ranks(&ranks))
}

/// Activation counts per user over a corpus; used as a static ranking.
pub fn frequency_scores(corpus: &CascadeCorpus) -> Vec<f64> {
    let mut counts = vec![0.0; corpus.num_users()];
    for c in &corpus.cascades {
        for u in c.users() {
            counts[u] += 1.0;
        }
    }
    counts
}
