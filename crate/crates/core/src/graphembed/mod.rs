//! Topological user embeddings: Node2Vec walks, skip-gram training with
//! negative sampling, and the pairwise cosine similarity used to adjust
//! user-level attention.

mod io;
mod sgns;
mod similarity;
mod walk;

pub use io::{load_embeddings, read_embeddings, save_embeddings, write_embeddings};
pub use sgns::{context_pairs, train_sgns, SgnsConfig, SgnsReport};
pub use similarity::cosine_similarity_matrix;
pub use walk::{node2vec_walks, transition_weights, WalkConfig, Walks};

use thiserror::Error;

use crate::data::SocialGraph;
use crate::numeric::Tensor;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("embedding file line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("invalid walk configuration: {0}")]
    Config(String),
}

/// `N × d_g` matrix of frozen topological embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    pub values: Tensor,
    /// Set once training (or loading) has produced the rows.
    pub trained: bool,
    /// Nodes that never appeared in a walk; their rows are zero.
    pub isolated: Vec<bool>,
}

impl EmbeddingMatrix {
    pub fn zeros(n: usize, dim: usize) -> Self {
        EmbeddingMatrix {
            values: Tensor::zeros(&[n, dim]),
            trained: false,
            isolated: vec![true; n],
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.values.rows()
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    pub fn row(&self, u: usize) -> &[f64] {
        self.values.row_slice(u)
    }

    /// Rows for `users`, stacked in order.
    pub fn gather(&self, users: &[usize]) -> Tensor {
        let mut out = Vec::with_capacity(users.len() * self.dim());
        for &u in users {
            out.extend_from_slice(self.row(u));
        }
        Tensor::new(vec![users.len(), self.dim()], out).expect("row count")
    }
}

/// Walks the graph and trains skip-gram embeddings in one go.
pub fn embed_graph(
    graph: &SocialGraph,
    walk: &WalkConfig,
    sgns: &SgnsConfig,
) -> Result<(EmbeddingMatrix, SgnsReport), EmbedError> {
    let walks = node2vec_walks(graph, walk)?;
    Ok(train_sgns(&walks.walks, graph.num_nodes(), sgns))
}
