//! Cascade corpora, the shared user vocabulary, social graphs and the
//! time-decay discretization.

mod corpus;
mod graph;
mod time;

pub use corpus::{
    load_cascades, load_cascades_with_vocab, make_prefix_instances, parse_cascades, split_corpus,
    write_cascades, Cascade, CascadeCorpus, Event, LoadStats, PrefixInstance, Vocab,
};
pub use graph::{load_graph, parse_graph, GraphLoadStats, SocialGraph};
pub use time::{time_bin, TimeBinning};

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown user `{0}` (not in vocabulary)")]
    UnknownUser(String),
    #[error("need at least {needed} cascades to split, have {have}")]
    TooFewCascades { needed: usize, have: usize },
    #[error("invalid split ratios {0:?}")]
    BadRatios([usize; 3]),
    #[error("negative elapsed time {0}")]
    NegativeElapsed(f64),
    #[error("time unit must be positive, got {0}")]
    BadTimeUnit(f64),
}

impl DataError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        DataError::Parse {
            line,
            message: message.into(),
        }
    }
}
